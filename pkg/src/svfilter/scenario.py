"""Scenario-approach machinery: sample-size bound, its inverse, and the
empirical safe-sample-rate estimator.

With N >= (2/epsilon) (ln(1/beta) + 1) candidate draws, an intervention
implies (with confidence 1 - beta) that the probability of drawing a safe
sequence from the sampling distribution is at most epsilon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from svfilter.dynamics import SystemModel, rollout_batch
from svfilter.rng import RngStream, as_stream
from svfilter.safety import CostConfig, PLAIN_COST, trajectory_costs

_Z95 = 1.959963984540054
_RATE_CHUNK = 8192


def _ceil_exact(value: float) -> int:
    # Guard against 757.0000000000001-style float noise at integer bounds.
    nearest = round(value)
    if abs(value - nearest) < 1e-9 * max(1.0, abs(value)):
        return int(nearest)
    return int(math.ceil(value))


def required_sample_size(epsilon: float, beta: float) -> int:
    """Smallest N with N >= (2/epsilon) (ln(1/beta) + 1)."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must be in (0, 1)")
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must be in (0, 1)")
    return _ceil_exact((2.0 / epsilon) * (math.log(1.0 / beta) + 1.0))


def implied_epsilon(n: int, beta: float) -> float:
    """Smallest epsilon whose required sample size is at most ``n``.

    Closed form (2/n)(ln(1/beta) + 1); may exceed 1 for very small ``n``,
    in which case no restrictiveness level in (0, 1) is certified.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must be in (0, 1)")
    return (2.0 / n) * (math.log(1.0 / beta) + 1.0)


@dataclass(frozen=True)
class ScenarioParams:
    """Restrictiveness epsilon, confidence beta, and the sample count n.

    Either built from (epsilon, beta) with n resolved by the bound, or from
    an explicit n (epsilon/beta then unknown).
    """

    n: int
    epsilon: float | None = None
    beta: float | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("sample count must be >= 1")
        if (self.epsilon is None) != (self.beta is None):
            raise ValueError("epsilon and beta must be given together")
        if self.epsilon is not None and self.n < required_sample_size(self.epsilon, self.beta):
            raise ValueError("n is below the required sample size for (epsilon, beta)")

    @classmethod
    def from_epsilon_beta(cls, epsilon: float, beta: float) -> "ScenarioParams":
        return cls(n=required_sample_size(epsilon, beta), epsilon=epsilon, beta=beta)

    @classmethod
    def from_n(cls, n: int) -> "ScenarioParams":
        return cls(n=int(n))


def wilson_interval(successes: int, trials: int, z: float = _Z95):
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2.0 * trials)) / denom
    half = (z / denom) * math.sqrt(p * (1.0 - p) / trials + z * z / (4.0 * trials * trials))
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class RateEstimate:
    rate: float
    wilson_low: float
    wilson_high: float
    successes: int
    trials: int


def estimate_safe_sample_rate(
    state,
    sampler,
    trials: int,
    model: SystemModel,
    level,
    stream: RngStream | int,
    cost_cfg: CostConfig = PLAIN_COST,
) -> RateEstimate:
    """Monte Carlo fraction of sampled sequences that are safe from ``state``.

    ``sampler(state, n, stream)`` must draw from the same distribution the
    filter uses (including projection and clamping). Trials are drawn in
    fixed-size chunks with counter-keyed streams, so the result does not
    depend on scheduling.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    stream = as_stream(stream)
    safe = 0
    done = 0
    chunk_idx = 0
    while done < trials:
        take = min(_RATE_CHUNK, trials - done)
        seqs = sampler(state, take, stream.child(chunk_idx))
        states = rollout_batch(state, seqs, model)
        costs = trajectory_costs(states, level, cost_cfg)
        safe += int((costs < 0.0).sum())
        done += take
        chunk_idx += 1
    low, high = wilson_interval(safe, trials)
    return RateEstimate(
        rate=safe / trials, wilson_low=low, wilson_high=high, successes=safe, trials=trials
    )
