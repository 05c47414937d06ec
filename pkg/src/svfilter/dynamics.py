"""Discrete-time system models and batched rollout.

All stepping is deterministic explicit Euler. Inputs are clamped to the
model's control bounds before integration, so any real-valued sequence can
be rolled out; the applied inputs always satisfy the bounds.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np

from svfilter.geometry import Path, compose_path, straight_segment, arc_segment, rect_corners


@dataclass(frozen=True)
class BrakeChannel:
    """One decelerable speed channel of a model.

    ``speed_index`` locates the speed in the state vector, ``accel_index``
    the control component that brakes it, and ``hold_indices`` the controls
    that are zeroed once the channel has stopped.
    """

    speed_index: int
    accel_index: int
    hold_indices: tuple[int, ...] = ()


class SystemModel(abc.ABC):
    """Deterministic discrete-time model with box control bounds."""

    state_dim: int
    control_dim: int
    dt: float
    control_lower: np.ndarray
    control_upper: np.ndarray
    brake_channels: tuple[BrakeChannel, ...]

    def clamp(self, inputs):
        return np.clip(inputs, self.control_lower, self.control_upper)

    @abc.abstractmethod
    def step(self, states, inputs):
        """Advance states (..., state_dim) by one step under inputs
        (..., control_dim). Inputs are clamped internally."""

    @property
    def speed_indices(self):
        return tuple(ch.speed_index for ch in self.brake_channels)

    def max_speed(self) -> float:
        raise NotImplementedError

    def _check_finite(self, states, inputs):
        if not np.isfinite(states).all():
            raise ValueError("non-finite state")
        if not np.isfinite(inputs).all():
            raise ValueError("non-finite control input")


class UnicycleModel(SystemModel):
    """Planar unicycle with speed dynamics.

    State [x, y, theta, v]; controls [omega, accel]. Position integrates
    with the current-step speed; v is clamped to [0, v_max] after the
    update and theta is left unwrapped.
    """

    def __init__(self, dt=0.1, omega_max=1.5, accel_min=-1.0, accel_max=1.0, v_max=1.0):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.dt = float(dt)
        self.v_max = float(v_max)
        self.state_dim = 4
        self.control_dim = 2
        self.control_lower = np.array([-omega_max, accel_min], dtype=float)
        self.control_upper = np.array([omega_max, accel_max], dtype=float)
        self.brake_channels = (BrakeChannel(speed_index=3, accel_index=1, hold_indices=(0,)),)

    def max_speed(self) -> float:
        return self.v_max

    def step(self, states, inputs):
        states = np.asarray(states, dtype=float)
        inputs = np.asarray(inputs, dtype=float)
        self._check_finite(states, inputs)
        u = self.clamp(inputs)
        x, y, theta, v = (states[..., i] for i in range(4))
        omega, accel = u[..., 0], u[..., 1]
        out = np.empty_like(states)
        out[..., 0] = x + v * np.cos(theta) * self.dt
        out[..., 1] = y + v * np.sin(theta) * self.dt
        out[..., 2] = theta + omega * self.dt
        out[..., 3] = np.clip(v + accel * self.dt, 0.0, self.v_max)
        return out


def step_unicycle(state, control, model: UnicycleModel | None = None):
    """Single unicycle step; convenience wrapper over UnicycleModel.step."""
    model = model or UnicycleModel()
    return model.step(np.asarray(state, dtype=float), np.asarray(control, dtype=float))


@dataclass(frozen=True)
class PathGeometry:
    """Fixed per-vehicle paths plus the shared vehicle footprint."""

    paths: tuple[Path, ...]
    vehicle_length: float
    vehicle_width: float

    @property
    def n_vehicles(self) -> int:
        return len(self.paths)

    def path_length(self, index: int) -> float:
        return self.paths[index].length


def pose_of(vehicle_index: int, s, geometry: PathGeometry):
    """Oriented rectangle (corners, (4, 2) per pose) of one vehicle at arc
    length ``s`` along its fixed path.

    ``s`` past the path end extrapolates along the final heading.
    """
    if not 0 <= vehicle_index < geometry.n_vehicles:
        raise ValueError(f"unknown vehicle index {vehicle_index}")
    centers, headings = geometry.paths[vehicle_index].pose(s)
    return rect_corners(centers, headings, geometry.vehicle_length, geometry.vehicle_width)


ARMS = ("east", "north", "west", "south")
MOVEMENTS = ("straight", "left", "right")


def build_intersection_paths(
    arms,
    movements,
    lane_offset=2.0,
    lane_width=4.0,
    approach_length=30.0,
    exit_length=12.0,
    right_turn_radius=2.0,
    left_turn_radius=4.0,
    ds=0.1,
    vehicle_length=4.0,
    vehicle_width=2.0,
) -> PathGeometry:
    """Paths through a four-way single-lane crossing.

    Every path is built for an eastbound entry (heading +x on the lane
    y = -lane_offset) and rotated into its arm. Right turns hug the near
    corner; left turns sweep across the box.
    """
    half_box = lane_offset + 0.5 * lane_width
    paths = []
    for arm, movement in zip(arms, movements):
        if arm not in ARMS:
            raise ValueError(f"unknown arm {arm!r}")
        if movement not in MOVEMENTS:
            raise ValueError(f"unknown movement {movement!r}")
        segs = []
        start = np.array([-(half_box + approach_length), -lane_offset])
        if movement == "straight":
            total = 2 * half_box + approach_length + exit_length
            segs.append(straight_segment(start, 0.0, total, ds))
        elif movement == "right":
            r = right_turn_radius
            run_in = approach_length + half_box - (lane_offset + r)
            segs.append(straight_segment(start, 0.0, run_in, ds))
            tangent = np.array([-(lane_offset + r), -lane_offset])
            segs.append(arc_segment(tangent, 0.0, r, -np.pi / 2.0, ds))
            exit_start = np.array([-lane_offset, -(lane_offset + r)])
            run_out = half_box + exit_length - (lane_offset + r)
            segs.append(straight_segment(exit_start, -np.pi / 2.0, run_out, ds))
        else:  # left
            r = left_turn_radius
            run_in = approach_length + half_box - (r - lane_offset)
            segs.append(straight_segment(start, 0.0, run_in, ds))
            tangent = np.array([-(r - lane_offset), -lane_offset])
            segs.append(arc_segment(tangent, 0.0, r, np.pi / 2.0, ds))
            exit_start = np.array([lane_offset, r - lane_offset])
            run_out = half_box + exit_length - (r - lane_offset)
            segs.append(straight_segment(exit_start, np.pi / 2.0, run_out, ds))
        path = compose_path(segs)
        angle = ARMS.index(arm) * np.pi / 2.0
        c, s = np.cos(angle), np.sin(angle)
        rot = np.array([[c, -s], [s, c]])
        paths.append(
            Path(
                points=path.points @ rot.T,
                headings=path.headings + angle,
                arclen=path.arclen,
            )
        )
    return PathGeometry(
        paths=tuple(paths),
        vehicle_length=vehicle_length,
        vehicle_width=vehicle_width,
    )


class IntersectionModel(SystemModel):
    """Joint longitudinal dynamics of all vehicles on fixed paths.

    State [s_1, v_1, ..., s_n, v_n]; control is the per-vehicle
    acceleration vector. The planar pose of a vehicle is a pure function of
    its arc length and path.
    """

    def __init__(self, geometry: PathGeometry, dt=0.1, accel_bound=1.5, v_max=10.0):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.geometry = geometry
        self.dt = float(dt)
        self.v_max = float(v_max)
        n = geometry.n_vehicles
        self.state_dim = 2 * n
        self.control_dim = n
        self.control_lower = np.full(n, -float(accel_bound))
        self.control_upper = np.full(n, float(accel_bound))
        self.brake_channels = tuple(
            BrakeChannel(speed_index=2 * i + 1, accel_index=i) for i in range(n)
        )

    def max_speed(self) -> float:
        return self.v_max

    def step(self, states, inputs):
        states = np.asarray(states, dtype=float)
        inputs = np.asarray(inputs, dtype=float)
        self._check_finite(states, inputs)
        a = self.clamp(inputs)
        out = np.empty_like(states)
        s = states[..., 0::2]
        v = states[..., 1::2]
        out[..., 0::2] = s + v * self.dt
        out[..., 1::2] = np.clip(v + a * self.dt, 0.0, self.v_max)
        return out


def step_vehicle(state, accel, dt=0.1, accel_bound=1.5, v_max=10.0):
    """Single (s, v) vehicle step: s' = s + v*dt, v' clamped to [0, v_max]."""
    s, v = float(state[0]), float(state[1])
    if not (np.isfinite(s) and np.isfinite(v) and np.isfinite(accel)):
        raise ValueError("non-finite state or input")
    a = float(np.clip(accel, -accel_bound, accel_bound))
    return (s + v * dt, float(np.clip(v + a * dt, 0.0, v_max)))


@dataclass(frozen=True)
class Trajectory:
    """States (H+1, state_dim) produced by rolling a control sequence
    (H, control_dim) from states[0]."""

    states: np.ndarray
    controls: np.ndarray

    @property
    def horizon(self) -> int:
        return self.controls.shape[0]


def rollout_batch(start, seqs, model: SystemModel):
    """Roll a batch of control sequences from a start state.

    ``start`` is (state_dim,) shared by the batch or (B, state_dim);
    ``seqs`` is (B, H, control_dim). Returns states (B, H+1, state_dim).
    """
    seqs = np.asarray(seqs, dtype=float)
    if seqs.ndim != 3:
        raise ValueError("expected (B, H, control_dim) control sequences")
    b, horizon, _ = seqs.shape
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    start = np.asarray(start, dtype=float)
    if start.ndim == 1:
        start = np.broadcast_to(start, (b, model.state_dim))
    states = np.empty((b, horizon + 1, model.state_dim))
    states[:, 0] = start
    for k in range(horizon):
        states[:, k + 1] = model.step(states[:, k], seqs[:, k])
    return states


def rollout(start, seq, model: SystemModel) -> Trajectory:
    """Roll a single control sequence (H, control_dim) into a Trajectory."""
    seq = np.asarray(seq, dtype=float)
    if seq.ndim != 2:
        raise ValueError("expected (H, control_dim) control sequence")
    states = rollout_batch(start, seq[None], model)[0]
    return Trajectory(states=states, controls=seq)
