"""Shared test fixtures: tiny synthetic models with closed-form costs."""

import numpy as np

from svfilter.dynamics import SystemModel


class QuadAccumModel(SystemModel):
    """Single-state model accumulating c * ||u - target||^2 per step.

    With the negated-state level function the plain trajectory cost becomes
    exactly c * ||U - target||^2 (summed over the horizon), which gives the
    samplers a closed-form landscape to be checked against.
    """

    def __init__(self, control_dim, c=1.0, target=None):
        self.state_dim = 1
        self.control_dim = control_dim
        self.dt = 1.0
        self.control_lower = np.full(control_dim, -np.inf)
        self.control_upper = np.full(control_dim, np.inf)
        self.brake_channels = ()
        self.c = float(c)
        self.target = np.zeros(control_dim) if target is None else np.asarray(target, float)

    def max_speed(self):
        return 0.0

    def step(self, states, inputs):
        states = np.asarray(states, dtype=float)
        inputs = np.asarray(inputs, dtype=float)
        out = states.copy()
        out[..., 0] = states[..., 0] + self.c * ((inputs - self.target) ** 2).sum(-1)
        return out


def neg_state_level(states):
    """Level that exposes the accumulated cost: l(x) = -x[0]."""
    return -np.asarray(states, dtype=float)[..., 0]


def constant_level(value):
    def level(states):
        return np.full(np.asarray(states).shape[:-1], float(value))

    return level
