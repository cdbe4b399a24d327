"""Set selection: score greedy (batch and single-pass), lazy greedy benchmark, exact oracle."""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .errors import DomainError, InvalidParameterError, ProtocolError
from .instance import Instance, Item
from .rng import Streams, as_streams
from .scores import score_map
from .utility import ExactUtility, MonteCarloUtility
from .valuefns import batch_evaluate

BRUTE_FORCE_MAX_N = 20


@dataclass(frozen=True)
class Solution:
    selected: tuple
    total_cost: float
    utility_estimate: float
    utility_stderr: float
    winner: str
    candidates: tuple = ()  # ((ids, estimate, stderr), ...)

    def as_row(self, algorithm: str, seed, n: int, budget: float, value_fn: str) -> list:
        return [algorithm, seed, n, repr(budget), value_fn, ";".join(str(i) for i in self.selected),
                repr(self.total_cost), repr(self.utility_estimate), repr(self.utility_stderr)]


SOLUTION_HEADER = ["algorithm", "seed", "n", "B", "value_fn", "selected", "cost",
                   "utility_estimate", "utility_stderr"]


@dataclass(frozen=True)
class StreamStats:
    peak_buffer_items: int
    updates: int
    final_buffer: tuple


def rank_order(ids: Iterable, r_hat: dict) -> list:
    """Ids by descending score, ties by ascending id."""
    return sorted(ids, key=lambda i: (-r_hat[i], i))


def budget_cut(costs: list, budget: float) -> int:
    """Length of the longest prefix whose total cost fits the budget."""
    # fsum keeps prefix feasibility identical to Instance.feasible
    for pos in range(len(costs)):
        if math.fsum(costs[: pos + 1]) > budget:
            return pos
    return len(costs)


def _evaluator(instance, utility, g, reps, streams, purpose):
    if utility is not None:
        return utility
    if g is None:
        raise InvalidParameterError("need a value function or a utility evaluator")
    return MonteCarloUtility(instance, g, reps, streams, purpose)


def _pick_better(instance: Instance, named_sets, evaluate) -> Solution:
    """Evaluate the candidates and keep the first one with the highest estimate."""
    cands = []
    for name, S in named_sets:
        S = tuple(sorted(S))
        est, se = evaluate(S)
        cands.append((name, S, est, se))
    best = max(cands, key=lambda c: c[2])  # max keeps the first on ties
    name, S, est, se = best
    return Solution(S, instance.cost(S), est, se, name, tuple((c[1], c[2], c[3]) for c in cands))


# --------------------------------------------------------------------------
# batch greedy
# --------------------------------------------------------------------------


def tsg_candidates(instance: Instance, scores) -> tuple[tuple, tuple | None, int, list]:
    """The two greedy candidate sets built from the score ranking.

    Returns ``(S_star, S_star_star, cut, order)``; ``S_star_star`` is None
    when every item fits.
    """
    r_hat = score_map(scores)
    missing = [i for i in instance.ids if i not in r_hat]
    if missing:
        raise InvalidParameterError(f"no score for items {missing[:5]}")
    order = rank_order(instance.ids, r_hat)
    costs = [instance[i].cost for i in order]
    B = instance.budget
    cut = budget_cut(costs, B)
    if cut == len(order):
        return tuple(order), None, cut, order

    def fill(start: list, scan: Iterable[int]) -> list:
        chosen = list(start)
        for p in scan:
            if math.fsum([costs[q] for q in chosen] + [costs[p]]) <= B:
                chosen.append(p)
        return chosen

    rest = range(cut + 1, len(order))
    s1 = fill(list(range(cut)), rest)
    s2 = fill([cut], list(range(cut)) + list(rest))
    return tuple(order[p] for p in s1), tuple(order[p] for p in s2), cut, order


def tsg(instance: Instance, scores, eval_reps: int = 10_000, rng=None, *, utility=None) -> Solution:
    """Greedy selection by score, returning the better of two candidate sets.

    The first candidate takes the longest top-ranked prefix that fits and
    then any later item that still fits. The second starts from the first
    item that did not fit and fills greedily from the remaining ranking.
    """
    if len(instance) == 0:
        raise DomainError("empty instance")
    if eval_reps < 1:
        raise InvalidParameterError("eval_reps must be >= 1")
    streams = as_streams(rng)
    g = getattr(scores, "g", None)
    evaluate = _evaluator(instance, utility, g, eval_reps, streams, "eval")
    s1, s2, _, _ = tsg_candidates(instance, scores)
    if s2 is None:
        return _pick_better(instance, [("S_star", s1)], evaluate)
    return _pick_better(instance, [("S_star", s1), ("S_star_star", s2)], evaluate)


def naive_greedy(instance: Instance, scores, *, utility=None, eval_reps: int = 10_000, rng=None) -> Solution:
    """First candidate only; kept as the baseline the two-set rule improves on."""
    s1, _, _, _ = tsg_candidates(instance, scores)
    evaluate = _evaluator(instance, utility, getattr(scores, "g", None), eval_reps, as_streams(rng), "eval")
    return _pick_better(instance, [("S_star", s1)], evaluate)


# --------------------------------------------------------------------------
# single-pass greedy
# --------------------------------------------------------------------------


class StreamBuffer:
    """Score-ordered buffer holding at most one item beyond what fits."""

    def __init__(self, budget: float):
        self.budget = budget
        self.items: list[tuple[float, int, float]] = []  # (r_hat, id, cost), best first
        self.seen: set = set()
        self.peak = 0
        self.updates = 0

    def cost(self) -> float:
        return math.fsum(c for _, _, c in self.items)

    def _trim(self):
        # keep the shortest best-first prefix whose cost exceeds the budget
        pos = budget_cut([e[2] for e in self.items], self.budget)
        del self.items[pos + 1:]

    def _insert(self, entry):
        self.items.append(entry)
        self.items.sort(key=lambda e: (-e[0], e[1]))
        self.peak = max(self.peak, len(self.items))
        self._trim()
        self.updates += 1

    def update(self, item_id, cost: float, r_hat: float):
        if item_id in self.seen:
            raise ProtocolError(f"item {item_id} arrived twice")
        self.seen.add(item_id)
        if cost > self.budget:
            raise ProtocolError(f"item {item_id} costs {cost} > budget {self.budget}")
        entry = (float(r_hat), item_id, float(cost))
        if self.cost() <= self.budget:
            self._insert(entry)
        elif r_hat > min(e[0] for e in self.items):
            self._insert(entry)

    def ids(self) -> tuple:
        return tuple(e[1] for e in self.items)


def streaming_candidates(buffer: StreamBuffer) -> list:
    ids = buffer.ids()
    if buffer.cost() <= buffer.budget:
        return [("S_star", ids)]
    low = ids[-1]  # buffer is kept best first
    return [("S_star", ids[:-1]), ("singleton", (low,))]


def streaming_tsg(stream: Iterable[Item], budget: float, score_fn: Callable, eval_reps: int = 10_000,
                  rng=None, *, g=None, utility=None, instance: Instance | None = None):
    """Single pass over ``stream``; returns ``(Solution, StreamStats)``.

    ``score_fn`` maps an item to its score. Only the buffer is kept, so the
    final comparison needs either ``utility`` or ``g`` with ``instance``.
    """
    buf = StreamBuffer(budget)
    arrived = []
    for it in stream:
        buf.update(it.id, it.cost, score_fn(it))
        arrived.append(it)
    if not arrived:
        raise DomainError("empty stream")
    if instance is None:
        instance = Instance(tuple(arrived), budget)
    evaluate = _evaluator(instance, utility, g, eval_reps, as_streams(rng), "eval")
    sol = _pick_better(instance, streaming_candidates(buf), evaluate)
    return sol, StreamStats(buf.peak, buf.updates, buf.ids())


def buffer_bound(instance: Instance) -> int:
    """Buffer size guaranteed by the trimming rule."""
    return math.ceil(2 * instance.budget / min(it.cost for it in instance.items)) + 1


# --------------------------------------------------------------------------
# lazy greedy benchmark
# --------------------------------------------------------------------------


class _SampledMarginals:
    """Marginal gains from fresh joint draws per call."""

    def __init__(self, instance: Instance, g, reps: int, streams: Streams):
        self.instance, self.g, self.reps, self.streams = instance, g, reps, streams
        self.calls = 0

    def __call__(self, S: list, i, pass_idx: int) -> float:
        self.calls += 1
        key = (pass_idx, self.calls)
        cols = [self.instance[j].dist.sample(self.streams.get("celf", *key, j), self.reps) for j in (*S, i)]
        X = np.column_stack(cols)
        with_i = batch_evaluate(self.g, X)
        without = batch_evaluate(self.g, X[:, :-1]) if S else batch_evaluate(self.g, np.zeros((self.reps, 0)))
        return float(np.mean(with_i - without))


class _ExactMarginals:
    def __init__(self, utility):
        self.utility = utility

    def __call__(self, S, i, pass_idx):
        return self.utility(tuple(S) + (i,))[0] - self.utility(tuple(S))[0]


def lazy_greedy(instance: Instance, marginal, per_cost: bool, pass_idx: int = 0) -> list:
    """Lazy-forward greedy under the budget, ranking by gain or gain per cost."""
    B = instance.budget
    # equal ratios prefer the cheaper item, which leaves more room later
    def tie(i):
        return instance[i].cost if per_cost else 0.0

    heap = [(-math.inf, tie(i), i, -1) for i in instance.ids]
    heapq.heapify(heap)
    chosen: list = []
    while heap:
        _, _, i, stamp = heapq.heappop(heap)
        c = instance[i].cost
        if instance.cost(chosen + [i]) > B:
            continue  # can never fit again as spending only grows
        if stamp == len(chosen):
            chosen.append(i)
            continue
        gain = marginal(chosen, i, pass_idx)
        prio = gain / c if per_cost else gain
        heapq.heappush(heap, (-prio, tie(i), i, len(chosen)))
    return chosen


def celf(instance: Instance, g, N_eval: int = 1000, rng=None, *, utility=None) -> Solution:
    """Better of the benefit and cost-benefit lazy greedy passes.

    Marginals come from ``N_eval`` fresh joint draws per evaluation unless
    an exact ``utility`` evaluator is passed.
    """
    if N_eval < 1:
        raise InvalidParameterError("N_eval must be >= 1")
    streams = as_streams(rng)
    marginal = _ExactMarginals(utility) if utility is not None else _SampledMarginals(instance, g, N_eval, streams)
    a = lazy_greedy(instance, marginal, per_cost=False, pass_idx=0)
    b = lazy_greedy(instance, marginal, per_cost=True, pass_idx=1)
    evaluate = _evaluator(instance, utility, g, N_eval, streams, "celf-final")
    sol = _pick_better(instance, [("celf", a), ("celf", b)], evaluate)
    return sol


# --------------------------------------------------------------------------
# exact oracle
# --------------------------------------------------------------------------


def feasible_subsets(instance: Instance) -> list[tuple]:
    ids = sorted(instance.ids)
    costs = [instance[i].cost for i in ids]
    out = []
    for mask in range(1 << len(ids)):
        S = tuple(ids[b] for b in range(len(ids)) if mask >> b & 1)
        if math.fsum(costs[b] for b in range(len(ids)) if mask >> b & 1) <= instance.budget:
            out.append(S)
    return out


def brute_force(instance: Instance, g, *, utility: ExactUtility | None = None, rel_tol: float = 1e-12) -> Solution:
    """Exhaustive optimum over feasible subsets with exact utilities.

    Ties within ``rel_tol`` go to the lexicographically smallest id tuple.
    """
    if len(instance) > BRUTE_FORCE_MAX_N:
        raise InvalidParameterError(f"brute force limited to {BRUTE_FORCE_MAX_N} items")
    ev = utility if utility is not None else ExactUtility(instance, g)
    sets = feasible_subsets(instance)
    vals = ev.many(sets)
    top = max(vals)
    tol = rel_tol * max(abs(top), 1.0)
    best = min(S for S, v in zip(sets, vals) if v >= top - tol)
    u = vals[sets.index(best)]
    return Solution(best, instance.cost(best), u, 0.0, "exact")


# --------------------------------------------------------------------------
# diagnostics
# --------------------------------------------------------------------------


def epsilon_diagnostic(instance: Instance, scores, true_scores) -> float:
    """Smallest ranking error consistent with the estimated order.

    With the estimated top set being the fitting prefix plus the first item
    that does not fit, returns the least ``eps >= 0`` such that every true
    score in it is at least ``(1 - eps)`` times every true score outside.
    """
    r_hat = score_map(scores)
    r = score_map(true_scores)
    order = rank_order(instance.ids, r_hat)
    cut = budget_cut([instance[i].cost for i in order], instance.budget)
    top, rest = order[: cut + 1], order[cut + 1:]
    if not rest:
        return 0.0
    best_rest = max(r[i] for i in rest)
    if best_rest <= 0:
        return 0.0
    return max(0.0, 1.0 - min(r[i] for i in top) / best_rest)
