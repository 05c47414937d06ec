"""Cross-entropy-method baseline distribution.

Iterative elite refit of a single diagonal Gaussian over control sequences.
Deliberately unimodal: this is the comparison baseline the Stein sampler is
measured against, and its tendency to concentrate around one mode is the
point of the comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from svfilter.dynamics import SystemModel, rollout_batch
from svfilter.rng import RngStream, as_stream
from svfilter.safety import CostConfig, PLAIN_COST, trajectory_costs
from svfilter.svgd import GaussianMixture


@dataclass(frozen=True)
class CemConfig:
    population: int = 757
    elite_frac: float = 0.1
    iterations: int = 5
    init_var: np.ndarray = (0.5625, 0.25)
    var_floor: float = 1e-4

    def __post_init__(self):
        if not 0.0 < self.elite_frac <= 1.0:
            raise ValueError("elite_frac must be in (0, 1]")
        if self.population * self.elite_frac < 1.0:
            raise ValueError("population * elite_frac must be >= 1")
        if self.iterations < 0:
            raise ValueError("iteration count must be >= 0")
        if self.var_floor <= 0:
            raise ValueError("var_floor must be positive")
        init = np.atleast_1d(np.asarray(self.init_var, dtype=float))
        if np.any(init <= 0):
            raise ValueError("init_var entries must be positive")
        object.__setattr__(self, "init_var", init)

    def flat_init_var(self, horizon: int, control_dim: int) -> np.ndarray:
        var = self.init_var
        if var.shape[0] == 1:
            var = np.full(control_dim, var[0])
        if var.shape[0] != control_dim:
            raise ValueError("init_var must have one entry per control dimension")
        return np.tile(var, horizon)

    @property
    def n_elite(self) -> int:
        return max(1, int(np.ceil(self.population * self.elite_frac)))


def cem_build(
    start_state,
    model: SystemModel,
    level,
    cfg: CemConfig,
    stream: RngStream | int,
    horizon: int,
    cost_cfg: CostConfig = PLAIN_COST,
) -> GaussianMixture:
    """Elite-fit Gaussian refinement from ``start_state``.

    Each iteration samples the population, rolls it out, keeps the
    lowest-cost fraction (stable (cost, index) order, so ties keep the
    earliest samples) and refits the diagonal Gaussian to the elites with a
    variance floor. Returned as a one-component mixture so it is a drop-in
    replacement for the Stein mixture.
    """
    stream = as_stream(stream)
    d = horizon * model.control_dim
    mean = np.zeros(d)
    var = cfg.flat_init_var(horizon, model.control_dim)
    for it in range(cfg.iterations):
        gen = stream.child(it).generator()
        pop = mean + gen.standard_normal((cfg.population, d)) * np.sqrt(var)
        states = rollout_batch(start_state, pop.reshape(cfg.population, horizon, model.control_dim), model)
        costs = trajectory_costs(states, level, cost_cfg)
        costs = np.where(np.isfinite(costs), costs, np.inf)
        elite_idx = np.argsort(costs, kind="stable")[: cfg.n_elite]
        elites = pop[elite_idx]
        mean = elites.mean(axis=0)
        var = np.maximum(elites.var(axis=0), cfg.var_floor)
    return GaussianMixture(
        means=mean[None, :],
        var=var,
        weights=np.array([1.0]),
        horizon=horizon,
        control_dim=model.control_dim,
    )
