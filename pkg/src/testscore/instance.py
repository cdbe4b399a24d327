"""Items, value distributions and budgeted instances.

An item has a positive cost and a random value drawn from one of a small set
of distribution families. An :class:`Instance` is an ordered list of items
plus a budget; items costing more than the budget are rejected up front.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DomainError,
    InfeasibleItemError,
    InvalidParameterError,
    UnboundedSupportError,
)


# --------------------------------------------------------------------------
# value distributions
# --------------------------------------------------------------------------


class ValueDistribution:
    tag: str = ""

    def mean(self) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        raise NotImplementedError

    def support(self):
        """``(values, probabilities)`` for finite-support variants, else None."""
        return None

    def sup(self) -> float:
        """Essential supremum of the distribution (may be ``inf``)."""
        raise NotImplementedError

    def params(self) -> list:
        raise NotImplementedError


@dataclass(frozen=True)
class Bernoulli(ValueDistribution):
    p: float
    tag = "bernoulli"

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise InvalidParameterError(f"Bernoulli mean must be in [0,1], got {self.p}")

    def mean(self):
        return float(self.p)

    def sample(self, rng, count):
        return (rng.random(count) < self.p).astype(float)

    def support(self):
        if self.p == 0.0:
            return np.array([0.0]), np.array([1.0])
        if self.p == 1.0:
            return np.array([1.0]), np.array([1.0])
        return np.array([0.0, 1.0]), np.array([1.0 - self.p, self.p])

    def sup(self):
        return 1.0 if self.p > 0 else 0.0

    def params(self):
        return [self.p]


@dataclass(frozen=True)
class Exponential(ValueDistribution):
    mu: float
    tag = "exponential"

    def __post_init__(self):
        if not (self.mu > 0 and math.isfinite(self.mu)):
            raise InvalidParameterError(f"Exponential mean must be > 0, got {self.mu}")

    def mean(self):
        return float(self.mu)

    def sample(self, rng, count):
        return rng.exponential(self.mu, count)

    def sup(self):
        return math.inf

    def quantile(self, q):
        return -self.mu * math.log1p(-q)

    def params(self):
        return [self.mu]


@dataclass(frozen=True)
class ParetoI(ValueDistribution):
    """Type I Pareto with density ``a x_m^a / x^(a+1)`` on ``[x_m, inf)``."""

    shape: float
    scale: float
    tag = "pareto"

    def __post_init__(self):
        if not self.shape > 1:
            raise InvalidParameterError(f"Pareto shape must be > 1 for a finite mean, got {self.shape}")
        if not self.scale > 0:
            raise InvalidParameterError(f"Pareto scale must be > 0, got {self.scale}")

    def mean(self):
        return self.shape * self.scale / (self.shape - 1.0)

    def sample(self, rng, count):
        # numpy's pareto is the Lomax form; shift by one to get Type I
        return self.scale * (rng.pareto(self.shape, count) + 1.0)

    def sup(self):
        return math.inf

    def quantile(self, q):
        return self.scale * (1.0 - q) ** (-1.0 / self.shape)

    def params(self):
        return [self.shape, self.scale]


@dataclass(frozen=True)
class Deterministic(ValueDistribution):
    value: float
    tag = "deterministic"

    def __post_init__(self):
        if not (self.value >= 0 and math.isfinite(self.value)):
            raise InvalidParameterError(f"deterministic value must be finite and >= 0, got {self.value}")

    def mean(self):
        return float(self.value)

    def sample(self, rng, count):
        return np.full(count, float(self.value))

    def support(self):
        return np.array([float(self.value)]), np.array([1.0])

    def sup(self):
        return float(self.value)

    def params(self):
        return [self.value]


@dataclass(frozen=True)
class Empirical(ValueDistribution):
    """Uniform distribution over a fixed list of observed values."""

    values: tuple
    tag = "empirical"

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise InvalidParameterError("empirical distribution needs at least one value")
        if any(not (v >= 0 and math.isfinite(v)) for v in vals):
            raise InvalidParameterError("empirical values must be finite and >= 0")
        object.__setattr__(self, "values", vals)

    def mean(self):
        return math.fsum(self.values) / len(self.values)

    def sample(self, rng, count):
        arr = np.asarray(self.values)
        return arr[rng.integers(0, len(arr), count)]

    def support(self):
        vals, counts = np.unique(np.asarray(self.values), return_counts=True)
        return vals, counts / counts.sum()

    def sup(self):
        return max(self.values)

    def params(self):
        return list(self.values)


DISTRIBUTIONS = {
    "bernoulli": lambda ps: Bernoulli(*ps),
    "exponential": lambda ps: Exponential(*ps),
    "pareto": lambda ps: ParetoI(*ps),
    "deterministic": lambda ps: Deterministic(*ps),
    "empirical": lambda ps: Empirical(tuple(ps)),
}


def make_distribution(tag: str, params: Sequence[float]) -> ValueDistribution:
    try:
        factory = DISTRIBUTIONS[tag]
    except KeyError:
        raise InvalidParameterError(f"unknown distribution tag {tag!r}") from None
    return factory([float(p) for p in params])


def dist_mean(dist: ValueDistribution) -> float:
    return dist.mean()


def sample_values(dist: ValueDistribution, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` i.i.d. draws from ``dist`` using the given stream."""
    if count < 0:
        raise InvalidParameterError("count must be >= 0")
    return dist.sample(rng, int(count))


def pareto_from_mean(mean: float, shape: float) -> ParetoI:
    """Type I Pareto with the given shape whose mean equals ``mean``."""
    if not shape > 1:
        raise InvalidParameterError(f"Pareto shape must be > 1, got {shape}")
    if not mean > 0:
        raise InvalidParameterError(f"Pareto mean must be > 0, got {mean}")
    return ParetoI(shape, mean * (shape - 1.0) / shape)


def support_bound(dist: ValueDistribution, truncation_quantile: float | None = None) -> float:
    """Upper end of the support, optionally truncated at a quantile.

    Bounded distributions return their supremum. Unbounded ones raise unless
    a truncation quantile is given.
    """
    b = dist.sup()
    if math.isfinite(b):
        return b
    if truncation_quantile is None:
        raise UnboundedSupportError(f"{dist.tag} has unbounded support; pass a truncation quantile")
    if not 0 < truncation_quantile < 1:
        raise InvalidParameterError("truncation quantile must lie in (0,1)")
    return dist.quantile(truncation_quantile)


# --------------------------------------------------------------------------
# items and instances
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Item:
    id: int
    cost: float
    dist: ValueDistribution

    def __post_init__(self):
        if not (self.cost > 0 and math.isfinite(self.cost)):
            raise InvalidParameterError(f"item {self.id}: cost must be positive, got {self.cost}")


def replication_count(item: Item, budget: float) -> int:
    """Number of copies of ``item`` that fit in ``budget``: floor(B / c)."""
    if item.cost > budget:
        raise InfeasibleItemError(f"item {item.id} costs {item.cost} > budget {budget}")
    return max(math.floor(budget / item.cost), 1)


@dataclass(frozen=True)
class Instance:
    items: tuple
    budget: float
    seed: int | None = None
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        items = tuple(self.items)
        object.__setattr__(self, "items", items)
        if not (self.budget > 0 and math.isfinite(self.budget)):
            raise InvalidParameterError(f"budget must be positive, got {self.budget}")
        index = {}
        for pos, it in enumerate(items):
            if it.id in index:
                raise InvalidParameterError(f"duplicate item id {it.id}")
            if it.cost > self.budget:
                raise InfeasibleItemError(f"item {it.id} costs {it.cost} > budget {self.budget}")
            index[it.id] = pos
        object.__setattr__(self, "_index", index)

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __getitem__(self, item_id) -> Item:
        try:
            return self.items[self._index[item_id]]
        except KeyError:
            raise KeyError(f"unknown item id {item_id}") from None

    def __contains__(self, item_id):
        return item_id in self._index

    @property
    def ids(self):
        return [it.id for it in self.items]

    def k(self, item_id) -> int:
        return replication_count(self[item_id], self.budget)

    def cost(self, ids: Iterable[int]) -> float:
        return math.fsum(self[i].cost for i in ids)

    def feasible(self, ids: Iterable[int]) -> bool:
        return self.cost(ids) <= self.budget


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------


def to_text(inst: Instance) -> str:
    """Line-oriented format; floats use ``repr`` so round-trips are exact."""
    lines = ["# testscore instance v1", f"budget {inst.budget!r}"]
    if inst.seed is not None:
        lines.append(f"seed {inst.seed}")
    for it in inst.items:
        params = " ".join(repr(float(p)) for p in it.dist.params())
        lines.append(f"item {it.id} {it.cost!r} {it.dist.tag} {params}")
    return "\n".join(lines) + "\n"


def from_text(text: str) -> Instance:
    budget = None
    seed = None
    items = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            if parts[0] == "budget":
                budget = float(parts[1])
            elif parts[0] == "seed":
                seed = int(parts[1])
            elif parts[0] == "item":
                dist = make_distribution(parts[3], parts[4:])
                items.append(Item(int(parts[1]), float(parts[2]), dist))
            else:
                raise DomainError(f"unknown record {parts[0]!r}")
        except (IndexError, ValueError) as exc:
            raise DomainError(f"line {lineno}: {exc}") from exc
    if budget is None:
        raise DomainError("instance text has no budget line")
    return Instance(tuple(items), budget, seed)


def to_json(inst: Instance) -> str:
    doc = {
        "budget": inst.budget,
        "seed": inst.seed,
        "items": [
            {"id": it.id, "cost": it.cost, "dist": it.dist.tag, "params": [float(p) for p in it.dist.params()]}
            for it in inst.items
        ],
    }
    return json.dumps(doc, indent=1)


def from_json(text: str) -> Instance:
    doc = json.loads(text)
    items = tuple(
        Item(int(r["id"]), float(r["cost"]), make_distribution(r["dist"], r["params"])) for r in doc["items"]
    )
    return Instance(items, float(doc["budget"]), doc.get("seed"))


def load_instance(path) -> Instance:
    with open(path) as fh:
        text = fh.read()
    return from_json(text) if text.lstrip().startswith("{") else from_text(text)


def save_instance(inst: Instance, path, fmt: str = "text") -> None:
    with open(path, "w") as fh:
        fh.write(to_json(inst) if fmt == "json" else to_text(inst))
