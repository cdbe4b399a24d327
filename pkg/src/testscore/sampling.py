"""Sufficient sample sizes for score estimation and greedy guarantee factors."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidParameterError, UndefinedBoundError

D_MAX = 1.7  # cap on the relative cost of any feasible set
P_GENERAL = 1.0 - math.exp(-1.0)
Q_GENERAL = 1.0 + D_MAX + 2.0 * math.sqrt(D_MAX)


@dataclass(frozen=True)
class AccuracySpec:
    """Relative error ``epsilon`` with failure probability ``delta``."""

    epsilon: float
    delta: float

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise InvalidParameterError(f"epsilon must lie in (0,1], got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise InvalidParameterError(f"delta must lie in (0,1), got {self.delta}")


def _round_to_batches(t: float, k: int) -> int:
    """Ceil ``t``, then up to a whole number of size-``k`` batches (at least one)."""
    T = max(math.ceil(t - 1e-9), 1)
    # the 1e-9 slack absorbs float error in products that should be integral
    return max(k * math.ceil(T / k), k)


def _check_k(k):
    if int(k) != k or k < 1:
        raise InvalidParameterError(f"k must be a positive integer, got {k}")
    return int(k)


def hoeffding_samples(k: int, g_sup: float, r: float, acc: AccuracySpec) -> int:
    """Samples for ``(eps, delta)``-accuracy from the range of ``g`` on ``k`` copies."""
    k = _check_k(k)
    if r <= 0:
        raise UndefinedBoundError("score must be positive")
    if g_sup <= 0:
        raise InvalidParameterError("g_sup must be positive")
    t = 0.5 * k * g_sup**2 / (acc.epsilon**2 * r**2) * math.log(1.0 / acc.delta)
    return _round_to_batches(t, k)


def mcdiarmid_samples(k: int, g1_sup: float, r: float, acc: AccuracySpec) -> int:
    """Samples for ``(eps, delta)``-accuracy from the single-coordinate range."""
    k = _check_k(k)
    if r <= 0:
        raise UndefinedBoundError("score must be positive")
    if g1_sup <= 0:
        raise InvalidParameterError("g1_sup must be positive")
    t = 0.5 * k**2 * g1_sup**2 / (acc.epsilon**2 * r**2) * math.log(1.0 / acc.delta)
    return _round_to_batches(t, k)


def curvature_samples(g1_sup: float, mu1: float, alpha: float, acc: AccuracySpec) -> int:
    """Sample size that holds for every ``k`` when ``g`` has curvature ``alpha``."""
    if not 0 <= alpha <= 1:
        raise InvalidParameterError("alpha must lie in [0,1]")
    if alpha == 1:
        raise UndefinedBoundError("curvature 1 gives no k-free bound")
    if mu1 <= 0:
        raise UndefinedBoundError("single-copy mean must be positive")
    t = 0.5 * g1_sup**2 / ((1 - alpha) ** 2 * acc.epsilon**2 * mu1**2) * math.log(1.0 / acc.delta)
    return max(math.ceil(t - 1e-9), 1)


def _spread(k: int, g_sup: float, g1_sup: float) -> float:
    return min(k * g_sup**2, k**2 * g1_sup**2)


def topset_samples(ks, g_sup, g1_sup, r_cut: float, n: int, acc: AccuracySpec) -> list[int]:
    """Per-item samples so the estimated top set is ``eps``-accurate w.p. ``1 - delta``.

    ``g_sup`` and ``g1_sup`` are scalars or per-item sequences.
    """
    if r_cut <= 0:
        raise UndefinedBoundError("score at the budget cut must be positive")
    if n < 1:
        raise InvalidParameterError("n must be >= 1")
    gs, g1s = _per_item(g_sup, len(ks)), _per_item(g1_sup, len(ks))
    log = math.log(2 * n / acc.delta)
    return [_round_to_batches(2 * _spread(_check_k(k), a, b) / (acc.epsilon**2 * r_cut**2) * log, int(k))
            for k, a, b in zip(ks, gs, g1s)]


def gap_samples(ks, g_sup, g1_sup, Delta: float, n: int, delta: float) -> list[int]:
    """Per-item samples so the estimated ranking finds the true top set w.p. ``1 - delta``.

    ``Delta`` is half the smaller of the two score gaps around the cut.
    """
    if Delta <= 0:
        raise UndefinedBoundError("score gap must be positive")
    if not 0 < delta < 1:
        raise InvalidParameterError("delta must lie in (0,1)")
    gs, g1s = _per_item(g_sup, len(ks)), _per_item(g1_sup, len(ks))
    log = math.log(2 * n / delta)
    return [_round_to_batches(0.5 * _spread(_check_k(k), a, b) / Delta**2 * log, int(k))
            for k, a, b in zip(ks, gs, g1s)]


def _per_item(v, n):
    if isinstance(v, (int, float)):
        return [float(v)] * n
    v = list(v)
    if len(v) != n:
        raise InvalidParameterError("per-item sequence has the wrong length")
    return v


# --------------------------------------------------------------------------
# guarantee factors
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class General:
    pass


@dataclass(frozen=True)
class BetaCosts:
    beta: float

    def __post_init__(self):
        if not 0 <= self.beta <= 0.5:
            raise InvalidParameterError(f"beta must lie in [0, 1/2], got {self.beta}")


@dataclass(frozen=True)
class Curvature:
    alpha: float
    beta: float | None = None
    d: float | None = None  # relative cost of the fitting prefix plus one

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise InvalidParameterError(f"alpha must lie in [0,1], got {self.alpha}")
        if self.beta is not None and not 0 <= self.beta <= 1:
            raise InvalidParameterError(f"beta must lie in [0,1], got {self.beta}")
        if self.d is not None and self.d <= 0:
            raise InvalidParameterError("d must be positive")


GuaranteeRegime = General | BetaCosts | Curvature


def q_beta(beta: float) -> float:
    if beta >= 0.5:
        return math.inf
    return (4 + 3 * beta / (1 - beta)) * (1 + beta / (1 - 2 * beta))


def _saturation(x: float) -> float:
    """``(1 - e^-x) / x`` with its limit 1 at 0."""
    return 1.0 if x < 1e-12 else -math.expm1(-x) / x


def guarantee_factor(regime, epsilon: float = 0.0) -> float:
    """Worst-case ratio of the greedy output to the optimum, in [0, 1]."""
    if not 0 <= epsilon < 1:
        raise InvalidParameterError("epsilon must lie in [0,1)")
    e = 1.0 - epsilon
    if isinstance(regime, General):
        f = e * P_GENERAL / (e * P_GENERAL + 2 * Q_GENERAL)
    elif isinstance(regime, BetaCosts):
        q = q_beta(regime.beta)
        f = 0.0 if math.isinf(q) else e * P_GENERAL / (e * P_GENERAL + q)
    elif isinstance(regime, Curvature):
        a = regime.alpha
        if regime.beta is None:
            d = D_MAX if regime.d is None else regime.d
            f = e * (1 - a) * _saturation(a * d) * 5 / 17
        else:
            b = regime.beta
            if b >= 0.5:
                return 0.0
            x = (1 - 2 * b) / (1 - b)
            # (1 - e^{-a x}) / a = x * saturation(a x)
            f = e * (1 - a) * (1 - b) * x * _saturation(a * x)
    else:
        raise InvalidParameterError(f"unknown regime {regime!r}")
    return min(max(f, 0.0), 1.0)
