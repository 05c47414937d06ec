"""Deterministic hierarchical random streams.

Every stochastic unit of work (a particle's perturbations, a sweep cell, an
episode) draws from a generator keyed by integer counters under one root
seed. Results therefore do not depend on execution order or worker count,
and a fixed seed reproduces bit-identical output.
"""

from __future__ import annotations

import numpy as np


class RngStream:
    """A node in a counter-keyed tree of random streams.

    ``child(*key)`` derives an independent subtree; ``generator()`` yields a
    ``numpy.random.Generator`` whose state is a pure function of
    ``(seed, key)``.
    """

    __slots__ = ("seed", "key")

    def __init__(self, seed: int, key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)

    def child(self, *key: int) -> "RngStream":
        return RngStream(self.seed, self.key + key)

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        return np.random.Generator(np.random.PCG64(seq))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, key={self.key})"


def as_stream(source) -> RngStream:
    """Coerce an integer seed or an existing stream to an ``RngStream``."""
    if isinstance(source, RngStream):
        return source
    return RngStream(int(source))
