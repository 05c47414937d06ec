"""Persistent output formats.

Episodes and sweeps are written as delimiter-separated text with one row per
step or cell, plus a JSON summary document. Every file embeds the resolved
config hash and seed. Floats are serialized with 17 significant digits so a
reload reproduces them bit-exactly; identical (config, seed, workers) runs
produce byte-identical data files (the summary additionally carries the
wall-clock, which is excluded from that guarantee).
"""

from __future__ import annotations

import json
import os

import numpy as np

from svfilter.experiments import CellRecord, EpisodeLog, Status, StepRecord, SweepResult

EPISODE_FILE = "episode.csv"
SWEEP_FILE = "sweep.csv"
SUMMARY_FILE = "summary.json"

_FMT = "%.17g"


def _fmt(value: float) -> str:
    return _FMT % float(value)


def _header_line(kind: str, config_hash: str, seed: int) -> str:
    return f"# svfilter-{kind} v1 config={config_hash} seed={seed}\n"


def write_episode(log: EpisodeLog, out_dir) -> dict:
    """Write episode.csv (one row per step) and summary.json.

    A zero-step episode (failed initialization) produces only the summary.
    Returns the summary dict.
    """
    os.makedirs(out_dir, exist_ok=True)
    state_dim = len(log.records[0].state) if log.records else 0
    control_dim = len(log.records[0].u_safe) if log.records else 0
    if log.records:
        cols = (
            ["timestep"]
            + [f"state_{i}" for i in range(state_dim)]
            + [f"u_nom_{i}" for i in range(control_dim)]
            + [f"u_safe_{i}" for i in range(control_dim)]
            + ["decision", "min_cost", "safe_count"]
        )
        path = os.path.join(out_dir, EPISODE_FILE)
        try:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(_header_line("episode", log.config_hash, log.seed))
                fh.write(",".join(cols) + "\n")
                for r in log.records:
                    row = (
                        [str(r.timestep)]
                        + [_fmt(v) for v in r.state]
                        + [_fmt(v) for v in r.u_nom]
                        + [_fmt(v) for v in r.u_safe]
                        + [r.decision, _fmt(r.min_cost), str(r.safe_count)]
                    )
                    fh.write(",".join(row) + "\n")
        except OSError as exc:
            raise OSError(f"failed writing episode file {path}: {exc}") from exc

    summary = {
        "format": "svfilter-episode-summary v1",
        "config": log.config_hash,
        "seed": log.seed,
        "scenario": log.scenario,
        "status": log.status.value,
        "steps": log.steps,
        "num_intervened": log.num_intervened,
        "collision_count": 1 if log.status is Status.FAILURE_ENTERED else 0,
        "goal_reached": log.status is Status.GOAL_REACHED,
        "meta": log.meta,
        "wall_clock_seconds": log.wall_clock,
    }
    _write_summary(out_dir, summary)
    return summary


def write_sweep(result: SweepResult, out_dir) -> dict:
    """Write sweep.csv (one row per cell) and summary.json."""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, SWEEP_FILE)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(_header_line("sweep", result.config_hash, result.seed))
            fh.write("x,y,feasible,intervened,safe_rate,wilson_low,wilson_high\n")
            for c in result.cells:
                fh.write(
                    ",".join(
                        [
                            _fmt(c.x), _fmt(c.y), str(int(c.feasible)), str(int(c.intervened)),
                            _fmt(c.safe_rate), _fmt(c.wilson_low), _fmt(c.wilson_high),
                        ]
                    )
                    + "\n"
                )
    except OSError as exc:
        raise OSError(f"failed writing sweep file {path}: {exc}") from exc

    summary = {
        "format": "svfilter-sweep-summary v1",
        "config": result.config_hash,
        "seed": result.seed,
        "scenario": result.scenario,
        "num_cells": len(result.cells),
        "num_feasible": result.num_feasible,
        "num_intervened": result.num_intervened,
        "max_safe_sample_rate": result.max_safe_sample_rate,
        "wall_clock_seconds": result.wall_clock,
    }
    _write_summary(out_dir, summary)
    return summary


def _write_summary(out_dir, summary: dict):
    path = os.path.join(out_dir, SUMMARY_FILE)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"failed writing summary file {path}: {exc}") from exc


def _parse_header(line: str, kind: str):
    parts = line.strip().split()
    if len(parts) != 5 or parts[1] != f"svfilter-{kind}" or parts[0] != "#":
        raise ValueError(f"not a svfilter-{kind} file: {line!r}")
    config_hash = parts[3].split("=", 1)[1]
    seed = int(parts[4].split("=", 1)[1])
    return config_hash, seed


def read_episode(out_dir) -> EpisodeLog:
    """Reload an episode from its directory, values bit-exact."""
    with open(os.path.join(out_dir, SUMMARY_FILE), "r", encoding="utf-8") as fh:
        summary = json.load(fh)
    log = EpisodeLog(
        scenario=summary["scenario"],
        seed=summary["seed"],
        config_hash=summary["config"],
        status=Status(summary["status"]),
        meta=summary["meta"],
        wall_clock=summary["wall_clock_seconds"],
    )
    path = os.path.join(out_dir, EPISODE_FILE)
    if not os.path.exists(path):
        return log
    with open(path, "r", encoding="utf-8") as fh:
        config_hash, seed = _parse_header(fh.readline(), "episode")
        cols = fh.readline().strip().split(",")
        state_dim = sum(1 for c in cols if c.startswith("state_"))
        control_dim = sum(1 for c in cols if c.startswith("u_nom_"))
        for line in fh:
            cells = line.strip().split(",")
            t = int(cells[0])
            state = np.array([float(v) for v in cells[1 : 1 + state_dim]])
            a = 1 + state_dim
            u_nom = np.array([float(v) for v in cells[a : a + control_dim]])
            b = a + control_dim
            u_safe = np.array([float(v) for v in cells[b : b + control_dim]])
            decision, min_cost, safe_count = cells[b + control_dim :]
            log.records.append(
                StepRecord(
                    timestep=t, state=state, u_nom=u_nom, u_safe=u_safe,
                    decision=decision, min_cost=float(min_cost), safe_count=int(safe_count),
                )
            )
    if config_hash != log.config_hash or seed != log.seed:
        raise ValueError("episode file header does not match its summary")
    return log


def read_sweep(out_dir) -> SweepResult:
    """Reload a sweep from its directory, values bit-exact."""
    with open(os.path.join(out_dir, SUMMARY_FILE), "r", encoding="utf-8") as fh:
        summary = json.load(fh)
    cells = []
    with open(os.path.join(out_dir, SWEEP_FILE), "r", encoding="utf-8") as fh:
        config_hash, seed = _parse_header(fh.readline(), "sweep")
        fh.readline()  # column header
        for line in fh:
            x, y, feasible, intervened, rate, lo, hi = line.strip().split(",")
            cells.append(
                CellRecord(
                    x=float(x), y=float(y), feasible=bool(int(feasible)),
                    intervened=bool(int(intervened)), safe_rate=float(rate),
                    wilson_low=float(lo), wilson_high=float(hi),
                )
            )
    return SweepResult(
        scenario=summary["scenario"], seed=seed, config_hash=config_hash, cells=cells,
        wall_clock=summary["wall_clock_seconds"],
    )
