"""Scenario harnesses: single-robot obstacle course, restrictiveness grid
sweep, and the multi-vehicle intersection, with their nominal controllers.

Episodes and sweep cells are independent units of work, each owning an RNG
stream keyed by (seed, unit index); they can run across worker processes
with results identical to a serial run.
"""

from __future__ import annotations

import enum
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from svfilter.cem import cem_build
from svfilter.config import RunConfig
from svfilter.dynamics import SystemModel, rollout_batch
from svfilter.errors import InitializationError
from svfilter.filtering import (
    Decision,
    StoppedSet,
    decide_candidates,
    draw_candidates,
    filter_step,
    initialize_backup,
    mixture_sampler,
)
from svfilter.rng import RngStream
from svfilter.scenario import estimate_safe_sample_rate
from svfilter.svgd import build_distribution

# Episode-level stream tags.
_TAG_FILTER = 0
_TAG_NOMINAL = 1
_TAG_INIT = 2
_TAG_CASE = 3
# Sweep cell stream tags.
_TAG_CELL_BUILD = 0
_TAG_CELL_DRAW = 1
_TAG_CELL_RATE = 2


class Status(enum.Enum):
    GOAL_REACHED = "goal_reached"
    MAX_STEPS = "max_steps"
    FAILURE_ENTERED = "failure_entered"
    INIT_FAILED = "init_failed"


@dataclass(frozen=True)
class StepRecord:
    timestep: int
    state: np.ndarray
    u_nom: np.ndarray
    u_safe: np.ndarray
    decision: str
    min_cost: float
    safe_count: int


@dataclass
class EpisodeLog:
    scenario: str
    seed: int
    config_hash: str
    status: Status
    records: list[StepRecord] = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    @property
    def num_intervened(self) -> int:
        return sum(1 for r in self.records if r.decision == Decision.INTERVENE.value)

    @property
    def steps(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class CellRecord:
    x: float
    y: float
    feasible: bool
    intervened: bool
    safe_rate: float = float("nan")
    wilson_low: float = float("nan")
    wilson_high: float = float("nan")


@dataclass
class SweepResult:
    scenario: str
    seed: int
    config_hash: str
    cells: list[CellRecord]
    wall_clock: float = 0.0

    @property
    def num_feasible(self) -> int:
        return sum(1 for c in self.cells if c.feasible)

    @property
    def num_intervened(self) -> int:
        return sum(1 for c in self.cells if c.intervened)

    @property
    def max_safe_sample_rate(self) -> float:
        rates = [c.safe_rate for c in self.cells if c.intervened and np.isfinite(c.safe_rate)]
        return max(rates) if rates else 0.0


def distribution_builder(cfg: RunConfig, model: SystemModel, level):
    """The configured sampling-distribution constructor (stein or cem)."""
    horizon = cfg.horizon
    cost_cfg = cfg.cost_config()
    if cfg.sampler_kind == "svgd":
        svgd_cfg = cfg.svgd_config()

        def builder(state, stream):
            return build_distribution(
                state, model, level, svgd_cfg, stream, horizon, cost_cfg
            )

    else:
        cem_cfg = cfg.cem_config()

        def builder(state, stream):
            return cem_build(state, model, level, cem_cfg, stream, horizon, cost_cfg)

    return builder


def nominal_goal_mpc(state, goal, nominal_cfg: dict, model: SystemModel, rng):
    """Goal-seeking sampling MPC that ignores obstacles entirely.

    Samples Gaussian control sequences, weights them by the exponentiated
    negative goal-distance cost, and returns the weighted mean first input.
    """
    n = nominal_cfg["samples"]
    h = nominal_cfg["horizon"]
    std = np.asarray(nominal_cfg["std"], dtype=float)
    seqs = rng.standard_normal((n, h, model.control_dim)) * std
    seqs = np.clip(seqs, model.control_lower, model.control_upper)
    states = rollout_batch(np.asarray(state, dtype=float), seqs, model)
    dist_sq = ((states[:, 1:, :2] - np.asarray(goal, dtype=float)) ** 2).sum(-1)
    costs = dist_sq.mean(axis=1)
    w = np.exp(-nominal_cfg["alpha"] * (costs - costs.min()))
    w /= w.sum()
    return w @ seqs[:, 0, :]


def nominal_target_speed(state, target_speed: float, gain: float, model: SystemModel):
    """Per-vehicle proportional speed tracking, blind to other vehicles."""
    v = np.asarray(state, dtype=float)[1::2]
    return np.clip(gain * (target_speed - v), model.control_lower, model.control_upper)


def _closed_loop(
    cfg: RunConfig,
    model: SystemModel,
    level,
    x0,
    nominal_fn,
    stop_fn,
    seed: int,
    scenario: str,
    meta: dict,
) -> EpisodeLog:
    """Shared filtered episode loop; ``nominal_fn(state, stream)`` produces
    the nominal input and ``stop_fn(state)`` the terminal condition."""
    t_start = time.perf_counter()
    stream = RngStream(seed)
    sampler = mixture_sampler(distribution_builder(cfg, model, level), model)
    inv = StoppedSet(model, level)
    params = cfg.scenario_params()
    cost_cfg = cfg.cost_config()
    log = EpisodeLog(
        scenario=scenario, seed=seed, config_hash=cfg.config_hash(),
        status=Status.MAX_STEPS, meta=meta,
    )
    fstate = initialize_backup(
        x0, sampler, params, model, level, inv, stream.child(_TAG_INIT),
        horizon=cfg.horizon, max_attempts=cfg.data["experiment"]["init_attempts"],
        cost_cfg=cost_cfg,
    )
    x = np.asarray(x0, dtype=float)
    for t in range(cfg.data["experiment"]["max_steps"]):
        u_nom = nominal_fn(x, stream.child(_TAG_NOMINAL, t))
        u, fstate, diag = filter_step(
            x, u_nom, fstate, sampler, params, model, level, inv,
            stream.child(_TAG_FILTER, t), cost_cfg,
        )
        x = model.step(x, u)
        log.records.append(
            StepRecord(
                timestep=t, state=x.copy(), u_nom=np.asarray(u_nom, dtype=float),
                u_safe=np.asarray(u, dtype=float), decision=diag.decision.value,
                min_cost=diag.min_cost, safe_count=diag.safe_count,
            )
        )
        if float(level(x)) <= 0.0:
            log.status = Status.FAILURE_ENTERED
            break
        if stop_fn(x):
            log.status = Status.GOAL_REACHED
            break
    log.meta["final_state"] = x.tolist()
    log.wall_clock = time.perf_counter() - t_start
    return log


def run_single_robot(cfg: RunConfig, seed: int | None = None) -> EpisodeLog:
    """Filtered goal-reaching episode in the obstacle field.

    Terminates at the goal radius, the step cap, or (loudly) on a failure
    state. Initialization failure propagates.
    """
    if cfg.scenario != "single_robot":
        raise ValueError("configuration is not a single_robot scenario")
    seed = cfg.seed if seed is None else seed
    model = cfg.build_unicycle()
    level = cfg.build_obstacle_field()
    exp = cfg.data["experiment"]
    goal = np.asarray(exp["goal"], dtype=float)
    nominal_cfg = exp["nominal"]

    def nominal_fn(state, stream):
        return nominal_goal_mpc(state, goal, nominal_cfg, model, stream.generator())

    def stop_fn(state):
        return float(np.hypot(*(state[:2] - goal))) <= exp["goal_radius"]

    return _closed_loop(
        cfg, model, level, np.asarray(exp["start"], dtype=float), nominal_fn, stop_fn,
        seed, "single_robot", meta={"goal": goal.tolist()},
    )


def sample_intersection_case(cfg: RunConfig, gen) -> dict:
    """Random vehicle case: approaches, movements, entry times.

    Entry times map to initial arc offsets (later entry starts further back)
    so the joint rollout stays time-invariant. Layouts are resampled until
    the joint start state is collision-free with a minimum same-approach gap.
    """
    from svfilter.dynamics import ARMS, MOVEMENTS

    m = cfg.data["model"]
    exp = cfg.data["experiment"]
    n = m["n_vehicles"]
    if n <= 4:
        arms = [ARMS[i] for i in gen.choice(4, size=n, replace=False)]
    else:
        idx = list(gen.permutation(4)) + list(gen.choice(4, size=n - 4))
        arms = [ARMS[i] for i in idx]
    movements = [MOVEMENTS[i] for i in gen.choice(3, size=n)]
    for _ in range(exp["layout_attempts"]):
        entries = gen.uniform(0.0, exp["entry_window"], size=n)
        s0 = (exp["entry_window"] - entries) * exp["start_speed"]
        ok = True
        for i in range(n):
            for j in range(i + 1, n):
                if arms[i] == arms[j] and abs(s0[i] - s0[j]) < exp["min_start_gap"]:
                    ok = False
        if ok:
            return {
                "arms": arms,
                "movements": movements,
                "entries": entries.tolist(),
                "s0": s0.tolist(),
            }
    raise InitializationError("no collision-free initial vehicle layout found")


def run_intersection(cfg: RunConfig, seed: int | None = None) -> EpisodeLog:
    """Centralized filtered episode at the four-way crossing.

    One filter governs the joint acceleration vector; vehicles past their
    path end no longer participate in the level function. The episode ends
    when every vehicle has exited, at the step cap, or loudly on failure.
    """
    if cfg.scenario != "intersection":
        raise ValueError("configuration is not an intersection scenario")
    seed = cfg.seed if seed is None else seed
    stream = RngStream(seed)
    case = sample_intersection_case(cfg, stream.child(_TAG_CASE).generator())
    model, level = cfg.build_intersection(case["arms"], case["movements"])
    exp = cfg.data["experiment"]

    x0 = np.zeros(model.state_dim)
    x0[0::2] = case["s0"]
    x0[1::2] = exp["start_speed"]
    if float(level(x0)) <= 0.0:
        raise InitializationError("sampled initial layout is in collision")

    lengths = np.array([model.geometry.path_length(i) for i in range(model.geometry.n_vehicles)])

    def nominal_fn(state, _stream):
        return nominal_target_speed(state, exp["target_speed"], exp["nominal_gain"], model)

    def stop_fn(state):
        return bool((state[0::2] >= lengths).all())

    return _closed_loop(
        cfg, model, level, x0, nominal_fn, stop_fn, seed, "intersection", meta=dict(case)
    )


def _sweep_cell(args):
    data, seed, indices, xs, ys = args
    cfg = RunConfig(data)
    model = cfg.build_unicycle()
    level = cfg.build_obstacle_field()
    builder = distribution_builder(cfg, model, level)
    params = cfg.scenario_params()
    cost_cfg = cfg.cost_config()
    grid = cfg.data["experiment"]["grid"]
    trials = cfg.data["experiment"]["rate_trials"]
    root = RngStream(seed)
    out = []
    for idx in indices:
        x, y = xs[idx], ys[idx]
        state = np.array([x, y, grid["theta"], grid["v"]])
        if float(level(state)) <= 0.0:
            out.append(CellRecord(x=x, y=y, feasible=False, intervened=False))
            continue
        cell = root.child(idx)
        mixture = builder(state, cell.child(_TAG_CELL_BUILD))
        seqs = draw_candidates(mixture, params.n, state, model, cell.child(_TAG_CELL_DRAW))
        decision, _, _, _ = decide_candidates(state, seqs, model, level, cost_cfg)
        if decision is Decision.PASS:
            out.append(CellRecord(x=x, y=y, feasible=True, intervened=False))
            continue
        if trials > 0:
            est = estimate_safe_sample_rate(
                state,
                lambda s, k, st: draw_candidates(mixture, k, s, model, st),
                trials, model, level, cell.child(_TAG_CELL_RATE), cost_cfg,
            )
            out.append(
                CellRecord(
                    x=x, y=y, feasible=True, intervened=True, safe_rate=est.rate,
                    wilson_low=est.wilson_low, wilson_high=est.wilson_high,
                )
            )
        else:
            out.append(CellRecord(x=x, y=y, feasible=True, intervened=True))
    return out


def run_sweep(cfg: RunConfig, seed: int | None = None) -> SweepResult:
    """Grid restrictiveness sweep at fixed speed and heading.

    Every feasible cell gets one build-and-decide evaluation; intervened
    cells additionally get a safe-sample-rate estimate from the same
    distribution the decision used.
    """
    if cfg.scenario != "sweep":
        raise ValueError("configuration is not a sweep scenario")
    seed = cfg.seed if seed is None else seed
    t_start = time.perf_counter()
    grid = cfg.data["experiment"]["grid"]
    res = grid["resolution"]
    nx = int(round((grid["x_max"] - grid["x_min"]) / res)) + 1
    ny = int(round((grid["y_max"] - grid["y_min"]) / res)) + 1
    xv = grid["x_min"] + res * np.arange(nx)
    yv = grid["y_min"] + res * np.arange(ny)
    xs = np.repeat(xv, ny)
    ys = np.tile(yv, nx)
    indices = list(range(len(xs)))

    if cfg.workers > 1:
        chunks = [indices[i :: cfg.workers] for i in range(cfg.workers)]
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(
                pool.map(
                    _sweep_cell,
                    [(cfg.data, seed, chunk, xs, ys) for chunk in chunks],
                )
            )
        by_index = {}
        for chunk, part in zip(chunks, parts):
            for idx, rec in zip(chunk, part):
                by_index[idx] = rec
        cells = [by_index[i] for i in indices]
    else:
        cells = _sweep_cell((cfg.data, seed, indices, xs, ys))

    return SweepResult(
        scenario="sweep", seed=seed, config_hash=cfg.config_hash(), cells=cells,
        wall_clock=time.perf_counter() - t_start,
    )


def _episode_worker(args):
    data, seed, scenario = args
    cfg = RunConfig(data)
    if scenario == "single_robot":
        return run_single_robot(cfg, seed=seed)
    return run_intersection(cfg, seed=seed)


def run_episodes(cfg: RunConfig, seeds, workers: int | None = None) -> list[EpisodeLog]:
    """Run one episode per seed, optionally across worker processes.

    Results are ordered by seed position and independent of worker count.
    """
    workers = cfg.workers if workers is None else workers
    jobs = [(cfg.data, s, cfg.scenario) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_episode_worker, jobs))
    return [_episode_worker(j) for j in jobs]
