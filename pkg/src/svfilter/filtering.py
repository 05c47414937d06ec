"""Per-timestep safety filtering.

Each step predicts the next state under the nominal input, draws candidate
sequences from the sampling distribution, and rolls them out. If any
candidate is safe the nominal input passes through and the best candidate
becomes the stored backup; otherwise the head of the stored backup is
applied and the backup is shifted, extended by the invariance input at its
terminal state. A broken backup chain is a loud error, never a fallback.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np

from svfilter.dynamics import SystemModel, rollout_batch
from svfilter.errors import InitializationError, InvariantViolationError
from svfilter.rng import RngStream, as_stream
from svfilter.safety import CostConfig, PLAIN_COST, trajectory_costs
from svfilter.scenario import ScenarioParams
from svfilter.svgd import GaussianMixture, sample_mixture

logger = logging.getLogger(__name__)

SPEED_TOL = 1e-9

# Stream tags under one filter_step call.
_TAG_BUILD = 0
_TAG_DRAW = 1


class Decision(enum.Enum):
    PASS = "pass"
    INTERVENE = "intervene"


@dataclass(frozen=True)
class FilterState:
    """Stored backup sequence plus bookkeeping.

    Whenever ``backup_valid``, rolling the backup out from the current true
    state is safe and ends inside the invariant set; the filter re-checks
    this before relying on it.
    """

    backup: np.ndarray  # (H, control_dim)
    backup_valid: bool
    last_decision: Decision | None = None
    timestep: int = 0


@dataclass(frozen=True)
class StepDiagnostics:
    decision: Decision
    min_cost: float
    safe_count: int
    n_candidates: int


class StoppedSet:
    """Safe control invariant set of stopped, failure-free states.

    Membership requires every speed channel at zero and a positive level;
    the invariance input is the zero control, which freezes such states.
    """

    def __init__(self, model: SystemModel, level, tol: float = SPEED_TOL):
        self.model = model
        self.level = level
        self.tol = tol

    def membership(self, state) -> bool:
        state = np.asarray(state, dtype=float)
        speeds = state[list(self.model.speed_indices)]
        return bool(np.all(np.abs(speeds) <= self.tol)) and float(self.level(state)) > 0.0

    def invariance_input(self, state) -> np.ndarray:
        return np.zeros(self.model.control_dim)


def stop_horizon_ok(model: SystemModel, horizon: int) -> bool:
    """Whether the horizon covers a full stop from top speed under maximum
    braking on every channel."""
    for ch in model.brake_channels:
        rate = -float(model.control_lower[ch.accel_index]) * model.dt
        if rate <= 0 or horizon * rate < model.max_speed() - 1e-12:
            return False
    return True


def project_terminal_stop_batch(seqs, start_state, model: SystemModel):
    """Force every sequence to end with all speed channels at zero.

    Simulates each channel's speed forward; from the last step at which the
    remaining horizon can still absorb the speed, acceleration is
    overwritten with maximum braking, and steering-like inputs are zeroed
    once the channel has stopped. Identity on sequences that already stop.
    """
    seqs = np.asarray(seqs, dtype=float)
    single = seqs.ndim == 2
    if single:
        seqs = seqs[None]
    out = seqs.copy()
    b, horizon, _ = out.shape
    start_state = np.asarray(start_state, dtype=float)
    if start_state.ndim == 1:
        start_state = np.broadcast_to(start_state, (b, model.state_dim))
    for ch in model.brake_channels:
        a_min = float(model.control_lower[ch.accel_index])
        rate = -a_min * model.dt
        v = start_state[:, ch.speed_index].copy()
        if np.any(v > rate * horizon + 1e-9):
            raise ValueError("horizon too short to guarantee a stop from this speed")
        switched = np.zeros(b, dtype=bool)
        for k in range(horizon):
            a_orig = np.clip(
                out[:, k, ch.accel_index],
                model.control_lower[ch.accel_index],
                model.control_upper[ch.accel_index],
            )
            v_orig = np.clip(v + a_orig * model.dt, 0.0, model.max_speed())
            # Brake half a step early: the spare braking step absorbs float
            # residue so the terminal speed clips to exactly zero.
            threshold = max(rate * (horizon - 1 - k) - 0.5 * rate, 1e-12)
            switched |= v_orig > threshold
            stopped = switched & (v <= SPEED_TOL)
            out[:, k, ch.accel_index] = np.where(switched, a_min, a_orig)
            for hold in ch.hold_indices:
                out[:, k, hold] = np.where(stopped, 0.0, out[:, k, hold])
            v = np.where(
                switched,
                np.clip(v + a_min * model.dt, 0.0, model.max_speed()),
                v_orig,
            )
    return out[0] if single else out


def project_terminal_stop(seq, start_state, model: SystemModel):
    """Single-sequence terminal-stop projection; see the batch variant."""
    return project_terminal_stop_batch(np.asarray(seq, dtype=float), start_state, model)


def mixture_sampler(builder, model: SystemModel):
    """Wrap a distribution builder into the filter's candidate sampler.

    ``builder(state, stream) -> GaussianMixture``. The returned callable
    draws ``n`` sequences, clamps them to the control bounds, and projects
    them onto the stop-at-terminal sampling space.
    """

    def sampler(state, n, stream: RngStream):
        mixture = builder(state, stream.child(_TAG_BUILD))
        return draw_candidates(mixture, n, state, model, stream.child(_TAG_DRAW))

    return sampler


def draw_candidates(
    mixture: GaussianMixture, n: int, start_state, model: SystemModel, stream: RngStream | int
):
    """Sample ``n`` bound-clamped, stop-projected sequences from a mixture."""
    gen = as_stream(stream).generator()
    return sample_mixture(
        mixture,
        n,
        gen,
        project=lambda seqs: project_terminal_stop_batch(seqs, start_state, model),
        lower=model.control_lower,
        upper=model.control_upper,
    )


def decide_candidates(next_state, seqs, model: SystemModel, level, cost_cfg: CostConfig = PLAIN_COST):
    """Roll candidate sequences out from ``next_state`` and pick the filter
    decision.

    Returns (decision, best_index, costs, states). Ties at the minimum cost
    resolve to the lowest index.
    """
    states = rollout_batch(next_state, seqs, model)
    costs = trajectory_costs(states, level, cost_cfg)
    best = int(np.argmin(costs))
    decision = Decision.PASS if costs[best] < 0.0 else Decision.INTERVENE
    return decision, best, costs, states


def shift_and_extend(backup, terminal_state, inv: StoppedSet):
    """Drop the backup head and append the invariance input at its terminal
    state. Raises if the terminal state left the invariant set, because that
    means the safety chain is broken."""
    backup = np.asarray(backup, dtype=float)
    if not inv.membership(terminal_state):
        raise InvariantViolationError(
            "backup terminal state is outside the invariant set; safety chain broken"
        )
    tail = inv.invariance_input(terminal_state)
    return np.vstack([backup[1:], tail[None, :]])


def filter_step(
    state,
    u_nom,
    fstate: FilterState,
    sampler,
    params: ScenarioParams,
    model: SystemModel,
    level,
    inv: StoppedSet,
    stream: RngStream | int,
    cost_cfg: CostConfig = PLAIN_COST,
):
    """One filtering step.

    Predicts the next state under the nominal input, draws ``params.n``
    candidates via ``sampler(state, n, stream)``, and either passes the
    nominal input (storing the best candidate as the new backup) or applies
    the stored backup head and shifts the backup. Returns
    (applied input, new FilterState, StepDiagnostics).
    """
    if not fstate.backup_valid:
        raise ValueError("filter state has no valid backup; run initialize_backup first")
    stream = as_stream(stream)
    state = np.asarray(state, dtype=float)
    u_nom = np.asarray(u_nom, dtype=float)
    u_clamped = model.clamp(u_nom)
    if not np.array_equal(u_clamped, u_nom):
        logger.warning("nominal input outside bounds; clamped %s -> %s", u_nom, u_clamped)
    next_state = model.step(state, u_clamped)

    seqs = sampler(next_state, params.n, stream)
    decision, best, costs, states = decide_candidates(next_state, seqs, model, level, cost_cfg)
    safe_count = int((costs < 0.0).sum())

    if decision is Decision.PASS:
        if not inv.membership(states[best, -1]):
            raise InvariantViolationError(
                "safe candidate does not end in the invariant set; sampler is not "
                "restricted to the stop-at-terminal space"
            )
        u_applied = u_clamped
        new_backup = seqs[best]
    else:
        # Re-certify the stored backup from the current true state before
        # relying on it (fail closed).
        btraj = rollout_batch(state, fstate.backup[None], model)[0]
        bcost = float(trajectory_costs(btraj[None], level, cost_cfg)[0])
        if bcost >= 0.0:
            raise InvariantViolationError(
                "stored backup is no longer safe from the current state"
            )
        u_applied = fstate.backup[0].copy()
        new_backup = shift_and_extend(fstate.backup, btraj[-1], inv)

    new_fstate = FilterState(
        backup=new_backup,
        backup_valid=True,
        last_decision=decision,
        timestep=fstate.timestep + 1,
    )
    diag = StepDiagnostics(
        decision=decision,
        min_cost=float(costs[best]),
        safe_count=safe_count,
        n_candidates=len(seqs),
    )
    return u_applied, new_fstate, diag


def initialize_backup(
    state,
    sampler,
    params: ScenarioParams,
    model: SystemModel,
    level,
    inv: StoppedSet,
    stream: RngStream | int,
    horizon: int,
    max_attempts: int = 10,
    cost_cfg: CostConfig = PLAIN_COST,
) -> FilterState:
    """Construct the initial backup for a run starting at ``state``.

    Tries the projected all-invariance sequence first (a stationary start in
    free space qualifies immediately), then up to ``max_attempts`` sampled
    batches, returning the first sequence that is safe and ends in the
    invariant set. Failing that, the run must not start.
    """
    state = np.asarray(state, dtype=float)
    if float(level(state)) <= 0.0:
        raise ValueError("start state is inside the failure set")
    stream = as_stream(stream)

    def qualify(seqs):
        states = rollout_batch(state, seqs, model)
        costs = trajectory_costs(states, level, cost_cfg)
        for i in range(len(seqs)):
            if costs[i] < 0.0 and inv.membership(states[i, -1]):
                return seqs[i]
        return None

    hold = np.tile(inv.invariance_input(state), (horizon, 1))
    candidate = qualify(project_terminal_stop_batch(hold[None], state, model))
    if candidate is not None:
        return FilterState(backup=candidate, backup_valid=True)

    for attempt in range(max_attempts):
        seqs = sampler(state, params.n, stream.child(attempt))
        candidate = qualify(seqs)
        if candidate is not None:
            return FilterState(backup=candidate, backup_valid=True)
    raise InitializationError(
        f"no safe initial backup found in {max_attempts} batches of {params.n} samples"
    )
