"""Symmetric monotone group-value functions and property testers.

All functions act on a nonnegative vector and are symmetric, so a shorter
vector is read as zero-padded: ``g(x) == g(x, 0, ..., 0)``. Each variant
evaluates a whole matrix of realizations at once through :meth:`batch`,
one realization per row.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, InvalidParameterError, UnboundedSupportError

DR_TOL = 1e-9


class ValueFunction:
    tag = "abstract"
    #: curvature known in closed form, or None
    analytic_alpha: float | None = None

    def batch(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x) -> float:
        return evaluate(self, x)

    def sup_norms(self, b: float, k: int) -> tuple[float, float]:
        raise NotImplementedError


@dataclass(frozen=True)
class Modular(ValueFunction):
    tag = "modular"
    analytic_alpha = 0.0

    def batch(self, X):
        return X.sum(axis=1)

    def sup_norms(self, b, k):
        return k * b, b


@dataclass(frozen=True)
class Power(ValueFunction):
    """Total production ``(sum x)^a``; ``a = 0.5`` is the square root."""

    a: float = 0.5

    def __post_init__(self):
        if not 0 < self.a <= 1:
            raise InvalidParameterError(f"power exponent must be in (0,1], got {self.a}")

    @property
    def tag(self):
        return f"power:{self.a:g}"

    @property
    def analytic_alpha(self):
        return 0.0 if self.a == 1 else None

    def batch(self, X):
        return X.sum(axis=1) ** self.a

    def sup_norms(self, b, k):
        return (k * b) ** self.a, b ** self.a


@dataclass(frozen=True)
class Saturating(ValueFunction):
    """Total production ``p s / (v0 + s)`` with ``s = sum x`` (MNL revenue form)."""

    p: float = 1.0
    v0: float = 1.0

    def __post_init__(self):
        if not (self.p > 0 and self.v0 > 0):
            raise InvalidParameterError("saturating function needs p > 0 and v0 > 0")

    @property
    def tag(self):
        return f"sat:{self.p:g}:{self.v0:g}"

    def batch(self, X):
        s = X.sum(axis=1)
        return self.p * s / (self.v0 + s)

    def sup_norms(self, b, k):
        return self.p * k * b / (self.v0 + k * b), self.p * b / (self.v0 + b)


@dataclass(frozen=True)
class TopR(ValueFunction):
    """Sum of the ``r`` largest entries; ``r = 1`` is the max (best-shot)."""

    r: int = 1

    def __post_init__(self):
        if int(self.r) != self.r or self.r < 1:
            raise InvalidParameterError(f"top-r needs an integer r >= 1, got {self.r}")

    @property
    def tag(self):
        return f"topr:{self.r}"

    @property
    def analytic_alpha(self):
        return 1.0 if self.r == 1 else None

    def batch(self, X):
        if X.shape[1] == 0:
            return np.zeros(X.shape[0])
        if self.r == 1:
            return X.max(axis=1)
        if X.shape[1] <= self.r:
            return X.sum(axis=1)
        part = np.partition(X, X.shape[1] - self.r, axis=1)
        return part[:, -self.r:].sum(axis=1)

    def sup_norms(self, b, k):
        return min(self.r, k) * b, b


@dataclass(frozen=True)
class CES(ValueFunction):
    """Constant elasticity of substitution ``(sum x^r)^(1/r)``."""

    r: float = 2.0

    def __post_init__(self):
        if not self.r > 1:
            raise InvalidParameterError(f"CES degree must be > 1, got {self.r}")

    @property
    def tag(self):
        return f"ces:{self.r:g}"

    def batch(self, X):
        if self.r == 2:
            return np.sqrt((X * X).sum(axis=1))
        return (X ** self.r).sum(axis=1) ** (1.0 / self.r)

    def sup_norms(self, b, k):
        return k ** (1.0 / self.r) * b, b


SUCCESS_MAPS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "min": lambda x: np.minimum(x, 1.0),
    "exp": lambda x: -np.expm1(-x),
}


@dataclass(frozen=True)
class SuccessProbability(ValueFunction):
    """``1 - prod(1 - p(x_i))`` for a named increasing ``p`` with ``p(0) = 0``."""

    pfn: str = "min"

    def __post_init__(self):
        if self.pfn not in SUCCESS_MAPS:
            raise InvalidParameterError(f"unknown success map {self.pfn!r}; choose from {sorted(SUCCESS_MAPS)}")

    @property
    def tag(self):
        return f"succ:{self.pfn}"

    def p(self, x):
        return SUCCESS_MAPS[self.pfn](np.asarray(x, dtype=float))

    def batch(self, X):
        return 1.0 - np.prod(1.0 - self.p(X), axis=1)

    def sup_norms(self, b, k):
        pb = float(self.p(b))
        return 1.0 - (1.0 - pb) ** k, pb


@dataclass(frozen=True)
class Combination(ValueFunction):
    """Nonnegative linear combination of other value functions."""

    terms: tuple  # of (weight, ValueFunction)

    def __post_init__(self):
        terms = tuple((float(w), g) for w, g in self.terms)
        if not terms or any(w < 0 for w, _ in terms):
            raise InvalidParameterError("combination needs nonnegative weights")
        object.__setattr__(self, "terms", terms)

    @property
    def tag(self):
        return "+".join(f"{w:g}*{g.tag}" for w, g in self.terms)

    @property
    def analytic_alpha(self):
        alphas = [g.analytic_alpha for w, g in self.terms if w > 0]
        if alphas and all(a == 0.0 for a in alphas):
            return 0.0
        return None

    def batch(self, X):
        return sum(w * g.batch(X) for w, g in self.terms)

    def sup_norms(self, b, k):
        # sup of a sum is at most the sum of sups
        sups = [g.sup_norms(b, k) for _, g in self.terms]
        return (sum(w * s[0] for (w, _), s in zip(self.terms, sups)),
                sum(w * s[1] for (w, _), s in zip(self.terms, sups)))


def linear_combination(terms) -> Combination:
    return Combination(tuple(terms))


def parse_value_fn(text: str) -> ValueFunction:
    """Parse a configuration tag such as ``ces:2``, ``topr:1`` or ``succ:exp``."""
    name, _, rest = text.strip().lower().partition(":")
    args = [a for a in rest.split(":") if a] if rest else []
    try:
        if name in ("modular", "sum"):
            return Modular()
        if name == "sqrt":
            return Power(0.5)
        if name == "power":
            return Power(float(args[0]) if args else 0.5)
        if name in ("sat", "mnl"):
            return Saturating(*(float(a) for a in args))
        if name == "max":
            return TopR(1)
        if name == "topr":
            return TopR(int(args[0]) if args else 1)
        if name == "ces":
            return CES(float(args[0]) if args else 2.0)
        if name == "succ":
            return SuccessProbability(args[0] if args else "min")
    except (ValueError, TypeError) as exc:
        raise InvalidParameterError(f"bad value-function text {text!r}: {exc}") from exc
    raise InvalidParameterError(f"unknown value function {text!r}")


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------


def _as_matrix(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    return arr


def batch_evaluate(g, X) -> np.ndarray:
    """Evaluate ``g`` row-wise; plain callables are applied row by row."""
    X = _as_matrix(X)
    if isinstance(g, ValueFunction):
        return g.batch(X)
    return np.array([float(g(row)) for row in X])


def evaluate(g, x) -> float:
    arr = np.asarray(x, dtype=float).ravel()
    if np.any(arr < 0):
        raise DomainError("value functions are defined on nonnegative vectors")
    return float(batch_evaluate(g, arr.reshape(1, -1))[0])


def marginal(g, x, z: float) -> float:
    x = list(np.asarray(x, dtype=float).ravel())
    return evaluate(g, x + [float(z)]) - evaluate(g, x)


def g_sup_norms(g: ValueFunction, support_bound: float, k: int) -> tuple[float, float]:
    """Suprema of ``g`` over ``[0, b]^k`` and of ``g(x, 0, ...)`` over ``[0, b]``."""
    if not math.isfinite(support_bound):
        raise UnboundedSupportError("support bound must be finite; truncate the distribution first")
    if support_bound < 0 or k < 1:
        raise InvalidParameterError("need support_bound >= 0 and k >= 1")
    return tuple(float(v) for v in g.sup_norms(float(support_bound), int(k)))


# --------------------------------------------------------------------------
# curvature and property testers
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CurvatureInfo:
    alpha: float | None
    source: str  # "analytic" | "sampled-estimate"

    @property
    def known(self):
        return self.alpha is not None


def _random_vector(rng, max_len=6):
    n = int(rng.integers(0, max_len + 1))
    kind = rng.random()
    if kind < 0.6:
        v = rng.random(n)
    elif kind < 0.9:
        v = rng.exponential(1.0, n)
    else:
        v = rng.integers(0, 3, n).astype(float)
    return v


def _random_subvector(rng, y):
    mask = rng.random(len(y)) < 0.5
    x = y[mask]
    return x[rng.permutation(len(x))]


def _insert(rng, v, z):
    pos = int(rng.integers(0, len(v) + 1))
    return np.insert(v, pos, z)


def curvature_of(g, trials: int = 10_000, rng: np.random.Generator | None = None) -> CurvatureInfo:
    """Curvature in closed form when known, else a sampled lower estimate.

    The estimate is the largest observed ``1 - (g(y,z) - g(y)) / (g(x,z) - g(x))``
    over random triples with ``x`` a subvector of ``y``.
    """
    alpha = getattr(g, "analytic_alpha", None)
    if alpha is not None:
        return CurvatureInfo(float(alpha), "analytic")
    rng = rng if rng is not None else np.random.default_rng(0)
    best = 0.0
    for _ in range(trials):
        y = _random_vector(rng)
        if len(y) == 0:
            y = rng.random(1)
        x = _random_subvector(rng, y)
        z = float(rng.random() * 2.0)
        mx = evaluate(g, np.append(x, z)) - evaluate(g, x)
        if mx <= 1e-12:
            continue
        my = evaluate(g, np.append(y, z)) - evaluate(g, y)
        best = max(best, 1.0 - my / mx)
    return CurvatureInfo(min(max(best, 0.0), 1.0), "sampled-estimate")


@dataclass
class PropertyReport:
    passed: bool
    trials: int
    property: str
    counterexample: dict | None = None

    def __bool__(self):
        return self.passed


def check_dr_property(g, trials: int = 1000, rng: np.random.Generator | None = None,
                      tol: float = DR_TOL) -> PropertyReport:
    """Randomized test of symmetry and diminishing returns over subvectors.

    Each trial draws ``y``, a reordered subvector ``x`` of ``y`` and ``z``, and
    checks ``g(x, z) - g(x) >= g(y, z) - g(y) - tol``; ``z`` is inserted at
    a random position, which is harmless for symmetric ``g``. A permutation
    of ``y`` is also checked, since the property presumes symmetry.
    """
    if trials < 1:
        raise InvalidParameterError("trials must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    for t in range(trials):
        y = _random_vector(rng)
        perm = y[rng.permutation(len(y))]
        gy = evaluate(g, y)
        if abs(evaluate(g, perm) - gy) > tol * max(1.0, abs(gy)):
            return PropertyReport(False, t + 1, "symmetry", {"y": y.tolist(), "permuted": perm.tolist()})
        x = _random_subvector(rng, y)
        z = float(rng.exponential(1.0)) if rng.random() < 0.3 else float(rng.random())
        mx = evaluate(g, _insert(rng, x, z)) - evaluate(g, x)
        my = evaluate(g, _insert(rng, y, z)) - gy
        if mx < my - tol:
            return PropertyReport(False, t + 1, "diminishing-returns",
                                  {"x": x.tolist(), "y": y.tolist(), "z": z, "marginal_x": mx, "marginal_y": my})
    return PropertyReport(True, trials, "diminishing-returns")


def check_value_ordered_dr(g, trials: int = 1000, rng: np.random.Generator | None = None,
                           tol: float = DR_TOL) -> PropertyReport:
    """Test the sufficient condition for extended diminishing returns.

    Whenever ``g(x) <= g(y)`` the marginal value of any ``z`` must be at least
    as large at ``x`` as at ``y``. Top-r with ``r >= 2`` fails this check even
    though it has the (weaker) extended property.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    for t in range(trials):
        x, y = _random_vector(rng), _random_vector(rng)
        gx, gy = evaluate(g, x), evaluate(g, y)
        if gx > gy:
            x, y, gx, gy = y, x, gy, gx
        z = float(rng.exponential(1.0)) if rng.random() < 0.3 else float(rng.random())
        mx = evaluate(g, np.append(x, z)) - gx
        my = evaluate(g, np.append(y, z)) - gy
        if mx < my - tol:
            return PropertyReport(False, t + 1, "value-ordered-dr",
                                  {"x": x.tolist(), "y": y.tolist(), "z": z, "marginal_x": mx, "marginal_y": my})
    return PropertyReport(True, trials, "value-ordered-dr")


def standard_variants() -> list[ValueFunction]:
    """One instance of every built-in variant with the extended DR property."""
    return [Modular(), Power(0.5), Saturating(1.0, 1.0), TopR(1), TopR(2), CES(2.0),
            SuccessProbability("min"), SuccessProbability("exp")]
