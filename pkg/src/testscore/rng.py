"""Named, independent random streams derived from one integer seed.

Every stream is a Philox (counter-based) generator keyed by
``(seed, purpose, *keys)``, so estimation, benchmark evaluation and test
evaluation never share draws, and each stream is reproducible on its own
regardless of what else was drawn before it.
"""
from __future__ import annotations

import zlib

import numpy as np


def purpose_code(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


class Streams:
    """Factory of named random streams.

    >>> s = Streams(7)
    >>> a = s.get("estimate", 3).random()
    >>> a == Streams(7).get("estimate", 3).random()
    True
    """

    def __init__(self, seed: int = 0):
        if int(seed) < 0:
            raise ValueError("seed must be nonnegative")
        self.seed = int(seed)

    def get(self, purpose: str, *keys) -> np.random.Generator:
        """Generator for ``purpose``; keys are integers or strings."""
        spawn_key = (purpose_code(purpose),) + tuple(purpose_code(k) if isinstance(k, str) else int(k) for k in keys)
        ss = np.random.SeedSequence(self.seed, spawn_key=spawn_key)
        return np.random.Generator(np.random.Philox(ss))

    def derive_seed(self, *parts) -> int:
        """Integer seed for a sub-experiment, stable across runs."""
        keys = tuple(purpose_code(str(p)) for p in parts)
        ss = np.random.SeedSequence(self.seed, spawn_key=keys)
        return int(ss.generate_state(1, dtype=np.uint32)[0])

    def __repr__(self):
        return f"Streams(seed={self.seed})"


def as_streams(rng) -> Streams:
    if isinstance(rng, Streams):
        return rng
    if rng is None:
        return Streams(0)
    return Streams(int(rng))
