"""Safety-conditioned sampling distribution via Stein variational updates.

Control-sequence particles are initialized from a zero-mean Gaussian prior,
pushed for a fixed number of sweeps by kernel-weighted log-posterior
gradients plus kernel repulsion, then weighted by their rollout costs and
returned as a Gaussian mixture. The log-likelihood gradient is estimated
zeroth-order from perturbed rollouts, since the min/max cost structure has
no useful analytic gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from svfilter.dynamics import SystemModel, rollout_batch
from svfilter.rng import RngStream, as_stream
from svfilter.safety import CostConfig, PLAIN_COST, trajectory_costs

BANDWIDTH_FLOOR = 1e-6

# Stream tags under one build_distribution call.
_TAG_INIT = 0
_TAG_GRAD = 1


@dataclass(frozen=True)
class SvgdConfig:
    """Particle sweep parameters.

    Variances are per control dimension and are tiled across the horizon.
    ``mixture_var`` and ``mc_var`` default to a quarter of the prior
    variance: exploration smaller than the prior but non-degenerate.
    """

    particles: int = 12
    iters: int = 5
    alpha: float = 0.1
    eta: float = 0.25
    prior_var: np.ndarray = (0.5625, 0.25)
    mixture_var: np.ndarray | None = None
    mc_var: np.ndarray | None = None
    mc_samples: int = 16

    def __post_init__(self):
        if self.particles < 1:
            raise ValueError("particle count must be >= 1")
        if self.iters < 0:
            raise ValueError("iteration count must be >= 0")
        if self.alpha <= 0 or self.eta <= 0:
            raise ValueError("alpha and eta must be positive")
        if self.mc_samples < 2:
            raise ValueError("need at least 2 perturbations per gradient")
        prior = np.atleast_1d(np.asarray(self.prior_var, dtype=float))
        mixture = (
            prior / 4.0
            if self.mixture_var is None
            else np.atleast_1d(np.asarray(self.mixture_var, dtype=float))
        )
        mc = (
            prior / 4.0
            if self.mc_var is None
            else np.atleast_1d(np.asarray(self.mc_var, dtype=float))
        )
        for name, var in (("prior_var", prior), ("mixture_var", mixture), ("mc_var", mc)):
            if np.any(var <= 0):
                raise ValueError(f"{name} entries must be positive")
        object.__setattr__(self, "prior_var", prior)
        object.__setattr__(self, "mixture_var", mixture)
        object.__setattr__(self, "mc_var", mc)

    def flat_var(self, which: str, horizon: int, control_dim: int) -> np.ndarray:
        var = getattr(self, which)
        if var.shape[0] == 1:
            var = np.full(control_dim, var[0])
        if var.shape[0] != control_dim:
            raise ValueError(f"{which} must have one entry per control dimension")
        return np.tile(var, horizon)


@dataclass(frozen=True)
class GaussianMixture:
    """Weighted Gaussian mixture over flattened control sequences.

    ``means`` is (m, H*control_dim), ``var`` the shared diagonal (flat)
    covariance, ``weights`` sum to 1. The heaviest component is the
    lowest-cost particle, which makes it the natural warm start.
    """

    means: np.ndarray
    var: np.ndarray
    weights: np.ndarray
    horizon: int
    control_dim: int

    def __post_init__(self):
        if self.means.ndim != 2 or self.means.shape[1] != self.horizon * self.control_dim:
            raise ValueError("means must be (m, horizon*control_dim)")
        if np.any(self.weights < 0):
            raise ValueError("weights must be non-negative")
        if abs(float(self.weights.sum()) - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")


def rbf_kernel(a, b, h: float) -> float:
    """exp(-||a - b||^2 / h); 1 exactly when a == b."""
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return float(np.exp(-np.dot(diff, diff) / h))


def median_bandwidth(particles) -> float:
    """med^2 / log(m) over pairwise particle distances, floored at a small
    constant for coincident or single particles."""
    particles = np.atleast_2d(np.asarray(particles, dtype=float))
    m = particles.shape[0]
    if m < 2:
        return BANDWIDTH_FLOOR
    diff = particles[:, None, :] - particles[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    iu = np.triu_indices(m, k=1)
    med = np.median(np.sqrt(sq[iu]))
    return max(float(med * med / np.log(m)), BANDWIDTH_FLOOR)


def compute_weights(costs, alpha: float):
    """Normalized exp(-alpha * cost) with a max shift for stability."""
    costs = np.asarray(costs, dtype=float)
    logits = -alpha * (costs - costs.min())
    w = np.exp(logits)
    return w / w.sum()


def _likelihood_grad(eps, costs, alpha, mc_var_flat):
    """Self-normalized zeroth-order gradient of log E[exp(-alpha C(U+eps))].

    ``eps`` is (K, D), ``costs`` (K,). Perturbations with non-finite cost
    get zero weight; after the min shift at least one weight is 1 whenever
    any cost is finite.
    """
    finite = np.isfinite(costs)
    if not finite.any():
        return np.zeros(eps.shape[1])
    shifted = np.where(finite, costs - costs[finite].min(), np.inf)
    w = np.where(finite, np.exp(-alpha * shifted), 0.0)
    total = w.sum()
    return (w @ eps) / (mc_var_flat * total)


def grad_log_posterior(
    particle,
    start_state,
    model: SystemModel,
    level,
    cfg: SvgdConfig,
    rng: np.random.Generator,
    cost_cfg: CostConfig = PLAIN_COST,
):
    """Estimated gradient of the log safety posterior at one particle.

    Likelihood term: importance-weighted average of Gaussian perturbations
    whose rollouts were cheap. Prior term: analytic gradient of the
    zero-mean Gaussian initializer, -particle / prior_var.
    """
    particle = np.asarray(particle, dtype=float)
    horizon = particle.shape[0] // model.control_dim
    mc_var = cfg.flat_var("mc_var", horizon, model.control_dim)
    prior_var = cfg.flat_var("prior_var", horizon, model.control_dim)
    eps = rng.standard_normal((cfg.mc_samples, particle.shape[0])) * np.sqrt(mc_var)
    seqs = (particle + eps).reshape(cfg.mc_samples, horizon, model.control_dim)
    states = rollout_batch(start_state, seqs, model)
    costs = trajectory_costs(states, level, cost_cfg)
    return _likelihood_grad(eps, costs, cfg.alpha, mc_var) - particle / prior_var


def svgd_update(particles, grads, h: float, eta: float):
    """One Stein variational step over all particles.

    U_i += eta/m * sum_j [ k(U_j, U_i) grad_j + (2/h)(U_i - U_j) k(U_j, U_i) ].
    The second term repels particles; it vanishes at zero separation and for
    a single particle the update reduces to plain gradient ascent.
    """
    particles = np.atleast_2d(np.asarray(particles, dtype=float))
    grads = np.atleast_2d(np.asarray(grads, dtype=float))
    m = particles.shape[0]
    diff = particles[:, None, :] - particles[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    kern = np.exp(-sq / h)
    drive = kern.T @ grads
    repulse = (2.0 / h) * (kern.sum(axis=0)[:, None] * particles - kern.T @ particles)
    return particles + (eta / m) * (drive + repulse)


def build_distribution(
    start_state,
    model: SystemModel,
    level,
    cfg: SvgdConfig,
    stream: RngStream | int,
    horizon: int,
    cost_cfg: CostConfig = PLAIN_COST,
    init_means=None,
) -> GaussianMixture:
    """Run the particle sweeps from ``start_state`` and return the mixture.

    Each sweep recomputes the median bandwidth, estimates every particle's
    gradient against the pre-update particle set (per-particle counter-keyed
    perturbation streams), then applies one joint Stein step. Final weights
    come from the particles' own rollout costs. ``init_means`` optionally
    warm-starts the particles instead of fresh prior draws.
    """
    stream = as_stream(stream)
    m, k_pert = cfg.particles, cfg.mc_samples
    d = horizon * model.control_dim
    prior_var = cfg.flat_var("prior_var", horizon, model.control_dim)
    mc_var = cfg.flat_var("mc_var", horizon, model.control_dim)
    if init_means is None:
        init_gen = stream.child(_TAG_INIT).generator()
        particles = init_gen.standard_normal((m, d)) * np.sqrt(prior_var)
    else:
        particles = np.array(init_means, dtype=float).reshape(m, d)

    for sweep in range(cfg.iters):
        h = median_bandwidth(particles)
        eps = np.empty((m, k_pert, d))
        for i in range(m):
            gen = stream.child(_TAG_GRAD, sweep, i).generator()
            eps[i] = gen.standard_normal((k_pert, d)) * np.sqrt(mc_var)
        perturbed = (particles[:, None, :] + eps).reshape(m * k_pert, horizon, model.control_dim)
        states = rollout_batch(start_state, perturbed, model)
        costs = trajectory_costs(states, level, cost_cfg).reshape(m, k_pert)
        grads = np.empty((m, d))
        for i in range(m):
            grads[i] = _likelihood_grad(eps[i], costs[i], cfg.alpha, mc_var)
        grads -= particles / prior_var
        particles = svgd_update(particles, grads, h, cfg.eta)

    states = rollout_batch(start_state, particles.reshape(m, horizon, model.control_dim), model)
    final_costs = trajectory_costs(states, level, cost_cfg)
    final_costs = np.where(np.isfinite(final_costs), final_costs, np.inf)
    weights = compute_weights(final_costs, cfg.alpha)
    return GaussianMixture(
        means=particles,
        var=cfg.flat_var("mixture_var", horizon, model.control_dim),
        weights=weights,
        horizon=horizon,
        control_dim=model.control_dim,
    )


def sample_mixture(
    mixture: GaussianMixture,
    n: int,
    rng: np.random.Generator,
    project=None,
    lower=None,
    upper=None,
):
    """Draw ``n`` control sequences (n, H, control_dim) from the mixture.

    Component choice is categorical by weight, then Gaussian perturbation
    with the component covariance, then bound clamping and the optional
    terminal-set projection.
    """
    if n < 1:
        raise ValueError("sample count must be >= 1")
    cum = np.cumsum(mixture.weights)
    cum /= cum[-1]
    idx = np.minimum(
        np.searchsorted(cum, rng.random(n), side="right"), mixture.means.shape[0] - 1
    )
    flat = mixture.means[idx] + rng.standard_normal(
        (n, mixture.means.shape[1])
    ) * np.sqrt(mixture.var)
    seqs = flat.reshape(n, mixture.horizon, mixture.control_dim)
    if lower is not None or upper is not None:
        seqs = np.clip(seqs, lower, upper)
    if project is not None:
        seqs = project(seqs)
    return seqs
