"""Expected set utility ``u(S) = E[g(X_S)]``, by simulation or exact enumeration.

Evaluators are callables ``S -> (estimate, stderr)``; solvers accept any of
them, so the same algorithm runs against Monte Carlo estimates in
experiments and against exact values in the oracle tests.
"""
from __future__ import annotations

import math
from typing import Iterable

import numpy as np

from .errors import CapacityError
from .instance import Instance
from .rng import Streams
from .valuefns import Modular, Power, ValueFunction, batch_evaluate

DEFAULT_CAP = 10**7
_ROWS_PER_CALL = 1 << 18


def is_modular(g) -> bool:
    return isinstance(g, Modular) or (isinstance(g, Power) and g.a == 1)


def realizations(instance: Instance, S, reps: int, streams: Streams, purpose: str = "eval") -> np.ndarray:
    """``reps`` joint draws of the items in ``S`` (columns in ascending id order).

    Each item reads its own stream, so two sets sharing an item see the same
    draws for it.
    """
    ids = sorted(S)
    X = np.empty((reps, len(ids)))
    for col, i in enumerate(ids):
        X[:, col] = instance[i].dist.sample(streams.get(purpose, i), reps)
    return X


def mc_utility(instance: Instance, g, S, reps: int, streams: Streams, purpose: str = "eval") -> tuple[float, float]:
    if reps < 1:
        raise ValueError("reps must be >= 1")
    vals = batch_evaluate(g, realizations(instance, S, reps, streams, purpose))
    se = float(vals.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
    return float(vals.mean()), se


def _joint_support(instance: Instance, ids, cap: int):
    vals, probs = [], []
    size = 1
    for i in ids:
        sup = instance[i].dist.support()
        if sup is None:
            raise CapacityError(f"item {i} has infinite support; exact utility unavailable")
        vals.append(sup[0])
        probs.append(sup[1])
        size *= len(sup[0])
        if size > cap:
            raise CapacityError(f"joint support of {len(ids)} items exceeds cap {cap}")
    if not ids:
        return np.zeros((1, 0)), np.ones(1)
    grids = np.meshgrid(*vals, indexing="ij")
    pgrids = np.meshgrid(*probs, indexing="ij")
    X = np.stack([gr.ravel() for gr in grids], axis=1)
    w = np.prod(np.stack([pg.ravel() for pg in pgrids], axis=1), axis=1)
    return X, w


def exact_utilities(instance: Instance, g, sets: Iterable, cap: int = DEFAULT_CAP) -> list[float]:
    """Exact ``u(S)`` for many sets, batching the enumeration across sets."""
    sets = [sorted(S) for S in sets]
    if is_modular(g):
        return [math.fsum(instance[i].dist.mean() for i in S) for S in sets]
    out = [0.0] * len(sets)
    pending: list[tuple[int, np.ndarray, np.ndarray]] = []
    rows = 0

    def flush():
        nonlocal pending, rows
        if not pending:
            return
        width = max(X.shape[1] for _, X, _ in pending)
        big = np.zeros((rows, width))
        pos = 0
        bounds = []
        for idx, X, w in pending:
            big[pos:pos + len(X), :X.shape[1]] = X
            bounds.append((idx, pos, pos + len(X), w))
            pos += len(X)
        vals = batch_evaluate(g, big)
        for idx, a, b, w in bounds:
            out[idx] = float(np.dot(vals[a:b], w))
        pending, rows = [], 0

    for idx, S in enumerate(sets):
        X, w = _joint_support(instance, S, cap)
        pending.append((idx, X, w))
        rows += len(X)
        if rows >= _ROWS_PER_CALL:
            flush()
    flush()
    return out


def exact_utility(instance: Instance, g, S, cap: int = DEFAULT_CAP) -> float:
    return exact_utilities(instance, g, [S], cap)[0]


class ExactUtility:
    """Cached exact evaluator; returns ``(u(S), 0.0)``."""

    def __init__(self, instance: Instance, g, cap: int = DEFAULT_CAP):
        self.instance, self.g, self.cap = instance, g, cap
        self._cache: dict[frozenset, float] = {}

    def __call__(self, S):
        key = frozenset(S)
        if key not in self._cache:
            self._cache[key] = exact_utility(self.instance, self.g, key, self.cap)
        return self._cache[key], 0.0

    def many(self, sets):
        keys = [frozenset(S) for S in sets]
        todo = [k for k in dict.fromkeys(keys) if k not in self._cache]
        for k, v in zip(todo, exact_utilities(self.instance, self.g, todo, self.cap)):
            self._cache[k] = v
        return [self._cache[k] for k in keys]


class MonteCarloUtility:
    """Monte Carlo evaluator drawing from the ``purpose`` streams.

    Repeated calls reuse the same per-item draws (common random numbers),
    which makes comparisons between overlapping sets much less noisy.
    """

    def __init__(self, instance: Instance, g: ValueFunction, reps: int, streams: Streams, purpose: str = "eval"):
        self.instance, self.g, self.reps, self.streams, self.purpose = instance, g, reps, streams, purpose

    def __call__(self, S):
        return mc_utility(self.instance, self.g, S, self.reps, self.streams, self.purpose)
