"""Level functions, the trajectory safety indicator, and trajectory cost.

A level function maps states to a signed margin: positive outside the
failure set, <= 0 inside (the boundary counts as failure). The trajectory
cost is the maximum negated margin over the horizon, so it is strictly
negative exactly for safe trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from svfilter.dynamics import PathGeometry, Trajectory
from svfilter.geometry import polygon_distance, rect_corners, rect_pair_distance

__all__ = [
    "ObstacleField",
    "IntersectionLevel",
    "CostConfig",
    "level_single_robot",
    "level_intersection",
    "polygon_distance",
    "trajectory_cost",
    "trajectory_costs",
    "is_safe",
]


@dataclass(frozen=True)
class ObstacleField:
    """Disk obstacles for the single-robot level function.

    The margin of a state is the smallest center distance minus the summed
    radii, scaled. Negative or zero means collision.
    """

    centers: np.ndarray  # (n_obs, 2)
    radii: np.ndarray  # (n_obs,)
    robot_radius: float = 0.1
    scale: float = 1000.0

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        radii = np.atleast_1d(np.asarray(self.radii, dtype=float))
        if centers.shape[0] == 0:
            raise ValueError("at least one obstacle required")
        if radii.shape == (1,) and centers.shape[0] > 1:
            radii = np.full(centers.shape[0], radii[0])
        if radii.shape[0] != centers.shape[0]:
            raise ValueError("one radius per obstacle required")
        if np.any(radii <= 0):
            raise ValueError("obstacle radii must be positive")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "radii", radii)

    def __call__(self, states):
        """Level of states (..., state_dim >= 2) -> (...)."""
        states = np.asarray(states, dtype=float)
        pos = states[..., None, :2]
        dist = np.linalg.norm(pos - self.centers, axis=-1)
        margin = dist - (self.robot_radius + self.radii)
        return self.scale * margin.min(axis=-1)


def level_single_robot(state, field: ObstacleField):
    """Signed margin of one unicycle state against an obstacle field."""
    return float(field(np.asarray(state, dtype=float)))


@dataclass(frozen=True)
class IntersectionLevel:
    """Minimum pairwise vehicle-rectangle separation level.

    Scaled distance when the closest active pair is disjoint, a fixed
    negative value when any pair touches or overlaps. Vehicles past the end
    of their path have exited and are excluded; with fewer than two active
    vehicles the state is trivially safe (``clear_value``).
    """

    geometry: PathGeometry
    scale: float = 100.0
    collision_value: float = -100.0
    clear_value: float = 1e6
    pairs: tuple = field(init=False)

    def __post_init__(self):
        n = self.geometry.n_vehicles
        if n < 2:
            raise ValueError("at least two vehicles required")
        object.__setattr__(
            self, "pairs", tuple((i, j) for i in range(n) for j in range(i + 1, n))
        )

    def __call__(self, states):
        states = np.asarray(states, dtype=float)
        lead = states.shape[:-1]
        flat = states.reshape(-1, states.shape[-1])
        n = self.geometry.n_vehicles
        corners = []
        active = []
        for i in range(n):
            path = self.geometry.paths[i]
            s = flat[:, 2 * i]
            centers, headings = path.pose(np.maximum(s, 0.0))
            corners.append(
                rect_corners(
                    centers, headings, self.geometry.vehicle_length, self.geometry.vehicle_width
                )
            )
            active.append(s < path.length)
        d = np.full(flat.shape[0], np.inf)
        for i, j in self.pairs:
            pair_d = rect_pair_distance(corners[i], corners[j])
            both = active[i] & active[j]
            d = np.minimum(d, np.where(both, pair_d, np.inf))
        level = np.where(d > 0.0, self.scale * d, self.collision_value)
        level = np.where(np.isinf(d), self.clear_value, level)
        return level.reshape(lead)


def level_intersection(state, level: IntersectionLevel):
    """Signed margin of one joint intersection state."""
    return float(level(np.asarray(state, dtype=float)))


@dataclass(frozen=True)
class CostConfig:
    """Trajectory cost mode: plain max of negated levels, or the decayed
    barrier form max_k{-l(x_{k+1}) + (1-gamma) l(x_k)}."""

    mode: str = "plain"
    gamma: float | None = None

    def __post_init__(self):
        if self.mode not in ("plain", "cbf"):
            raise ValueError(f"unknown cost mode {self.mode!r}")
        if self.mode == "cbf":
            if self.gamma is None or not 0.0 < self.gamma < 1.0:
                raise ValueError("cbf mode requires gamma in (0, 1)")
        elif self.gamma is not None:
            raise ValueError("gamma only applies to cbf mode")


PLAIN_COST = CostConfig()


def trajectory_costs(states, level, cfg: CostConfig = PLAIN_COST):
    """Costs of batched state trajectories (B, H+1, state_dim) -> (B,)."""
    levels = level(states)
    if cfg.mode == "plain":
        return -levels.min(axis=-1)
    terms = -levels[..., 1:] + (1.0 - cfg.gamma) * levels[..., :-1]
    return terms.max(axis=-1)


def trajectory_cost(traj: Trajectory, level, cfg: CostConfig = PLAIN_COST) -> float:
    """Cost of a single trajectory; strictly negative iff safe (plain mode)."""
    return float(trajectory_costs(traj.states[None], level, cfg)[0])


def is_safe(traj: Trajectory, level) -> bool:
    """True iff every state of the trajectory has a strictly positive level."""
    return bool((level(traj.states) > 0.0).all())
