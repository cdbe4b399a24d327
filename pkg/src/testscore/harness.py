"""Experiment orchestration: synthetic instances, TSG vs CELF runs, sweeps, self-checks."""
from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import io
import logging
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError
from .instance import Bernoulli, Deterministic, Exponential, Instance, Item, pareto_from_mean
from .rng import Streams
from .sampling import AccuracySpec, General, guarantee_factor, hoeffding_samples, mcdiarmid_samples
from .scores import estimate_item_score, estimate_scores, exact_score_table, q_factor, verify_sandwich
from .solvers import brute_force, buffer_bound, celf, streaming_tsg, tsg, tsg_candidates
from .utility import ExactUtility, MonteCarloUtility
from .valuefns import Modular, parse_value_fn, standard_variants

log = logging.getLogger(__name__)

TEST_REPS = 50_000
SWEEP_AXES = {"lambda": "lam", "N": "N", "dist": "dist", "value_fn": "value_fn"}


@dataclass(frozen=True)
class SyntheticConfig:
    n: int = 100
    B: float = 30.0
    value_fn: str = "modular"
    dist: str = "bernoulli"  # bernoulli | exponential | pareto:<shape> | deterministic
    lam: float = 0.0
    N: int = 250
    instances: int = 20
    seed: int = 0
    cost_mode: str = "correlated"
    test_reps: int = TEST_REPS

    def __post_init__(self):
        if self.n < 1 or not self.B > 0 or self.N < 1 or self.lam < 0 or self.instances < 0:
            raise InvalidParameterError(f"invalid synthetic config {self}")
        if self.cost_mode not in ("correlated", "independent"):
            raise InvalidParameterError(f"cost_mode must be correlated or independent, got {self.cost_mode!r}")
        _family(self.dist, 0.5)  # fail early on a bad family tag

    def with_(self, **kw) -> "SyntheticConfig":
        return dataclasses.replace(self, **kw)


def _family(tag: str, mu: float):
    name, _, arg = tag.partition(":")
    if name == "bernoulli":
        return Bernoulli(mu)
    if name == "exponential":
        return Exponential(max(mu, 1e-12))
    if name == "pareto":
        return pareto_from_mean(max(mu, 1e-12), float(arg or 2.0))
    if name == "deterministic":
        return Deterministic(mu)
    raise InvalidParameterError(f"unknown distribution family {tag!r}")


def generate_synthetic(cfg: SyntheticConfig, instance_index: int) -> Instance:
    """Means uniform on [0,1]; costs ``1 + lam * mu`` (or an independent uniform draw)."""
    rng = Streams(cfg.seed).get("generate", instance_index)
    mu = rng.random(cfg.n)
    cost_base = mu if cfg.cost_mode == "correlated" else rng.random(cfg.n)
    items = tuple(Item(i + 1, 1.0 + cfg.lam * float(cost_base[i]), _family(cfg.dist, float(mu[i])))
                  for i in range(cfg.n))
    return Instance(items, cfg.B, cfg.seed)


@dataclass(frozen=True)
class ComparisonRow:
    seed: int
    instance: int
    n: int
    B: float
    value_fn: str
    dist: str
    lam: float
    N: int
    cost_mode: str
    tsg_value: float
    celf_value: float
    ratio: float
    tsg_set_size: int
    celf_set_size: int
    tsg_time: float = 0.0
    celf_time: float = 0.0


ROW_FIELDS = [f.name for f in dataclasses.fields(ComparisonRow)]
TIME_FIELDS = ("tsg_time", "celf_time")


def _ratio(a: float, b: float) -> float:
    if b > 0:
        return a / b
    return 1.0 if a == 0 else math.inf


def compare_on_instance(inst: Instance, g, N: int, streams: Streams, test_reps: int = TEST_REPS):
    """Run both algorithms with ``N``-sample inputs and score them on one shared test stream."""
    t0 = time.perf_counter()
    scores = estimate_scores(inst, g, N, streams)
    a = tsg(inst, scores, eval_reps=N, rng=streams)
    t1 = time.perf_counter()
    c = celf(inst, g, N_eval=N, rng=streams)
    t2 = time.perf_counter()
    test = MonteCarloUtility(inst, g, test_reps, streams, "test")
    return a, c, test(a.selected)[0], test(c.selected)[0], t1 - t0, t2 - t1


def run_comparison(cfg: SyntheticConfig) -> list[ComparisonRow]:
    g = parse_value_fn(cfg.value_fn)
    root = Streams(cfg.seed)
    rows = []
    for idx in range(cfg.instances):
        inst = generate_synthetic(cfg, idx)
        streams = Streams(root.derive_seed("instance", idx))
        a, c, va, vc, ta, tc = compare_on_instance(inst, g, cfg.N, streams, cfg.test_reps)
        rows.append(ComparisonRow(cfg.seed, idx, cfg.n, cfg.B, cfg.value_fn, cfg.dist, cfg.lam, cfg.N,
                                  cfg.cost_mode, va, vc, _ratio(va, vc), len(a.selected), len(c.selected), ta, tc))
        log.info("instance %d: tsg %.4f celf %.4f", idx, va, vc)
    return rows


def rows_to_csv(rows, deterministic: bool = False) -> str:
    """CSV text; deterministic output drops the timestamp line and wall times."""
    buf = io.StringIO()
    if not deterministic:
        buf.write(f"# generated {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}\n")
    fields = [f for f in ROW_FIELDS if not (deterministic and f in TIME_FIELDS)]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        d = dataclasses.asdict(r)
        w.writerow([repr(d[f]) if isinstance(d[f], float) else d[f] for f in fields])
    return buf.getvalue()


def read_rows(text: str) -> list[dict]:
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


@dataclass(frozen=True)
class Summary:
    count: int
    median: float
    q1: float
    q3: float
    minimum: float
    mean: float

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1


def summarize(ratios) -> Summary:
    r = np.asarray([float(x) for x in ratios], dtype=float)
    if r.size == 0:
        return Summary(0, math.nan, math.nan, math.nan, math.nan, math.nan)
    q1, med, q3 = np.percentile(r, [25, 50, 75])
    return Summary(int(r.size), float(med), float(q1), float(q3), float(r.min()), float(r.mean()))


def _cell_value(axis: str, v):
    if axis == "lambda":
        return float(v)
    if axis == "N":
        return int(v)
    return str(v)


def sweep(base: SyntheticConfig, axis: str, values, out_dir=None, deterministic: bool = False) -> dict:
    """Run one comparison per axis value; returns ``{value: rows}``.

    Each cell gets a seed derived from the base seed and the cell, so
    adding cells never changes existing ones. With ``out_dir`` a CSV per
    cell and ``summary.csv`` are written.
    """
    if axis not in SWEEP_AXES:
        raise InvalidParameterError(f"unknown sweep axis {axis!r}; choose from {sorted(SWEEP_AXES)}")
    values = list(values)
    if not values:
        raise InvalidParameterError("sweep needs at least one value")
    root = Streams(base.seed)
    results = {}
    for v in values:
        v = _cell_value(axis, v)
        cfg = base.with_(**{SWEEP_AXES[axis]: v, "seed": root.derive_seed("cell", axis, v)})
        results[v] = run_comparison(cfg)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        for v, rows in results.items():
            with open(os.path.join(out_dir, f"cell_{axis}_{v}.csv"), "w") as fh:
                fh.write(rows_to_csv(rows, deterministic))
        with open(os.path.join(out_dir, "summary.csv"), "w") as fh:
            fh.write(summary_csv(axis, results))
    return results


def summary_csv(axis: str, results: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["axis", "value", "instances", "median_ratio", "q1", "q3", "iqr", "min_ratio"])
    for v, rows in results.items():
        s = summarize(r.ratio for r in rows)
        w.writerow([axis, v, s.count, repr(s.median), repr(s.q1), repr(s.q3), repr(s.iqr), repr(s.minimum)])
    return buf.getvalue()


# --------------------------------------------------------------------------
# small finite-support corpora for exact checks
# --------------------------------------------------------------------------


def max_fit_count(costs, budget: float) -> int:
    total, count = 0.0, 0
    for c in sorted(costs):
        total = math.fsum([total, c])
        if total > budget:
            break
        count += 1
    return count


def random_oracle_instance(rng: np.random.Generator, n_range=(4, 10), fit_range=(2, 6),
                           equal_costs: bool = False, budget: float = 1.0) -> Instance:
    """Small Bernoulli/deterministic instance whose largest feasible set has a size in ``fit_range``."""
    while True:
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        if equal_costs:
            m = int(rng.integers(fit_range[0], fit_range[1] + 1))
            # budget admits exactly m copies of the common cost
            costs = np.full(n, budget / (m + rng.uniform(0.0, 0.9)))
        else:
            costs = budget * rng.uniform(0.05, 1.0, n)
        if not fit_range[0] <= max_fit_count(costs, budget) <= fit_range[1]:
            continue
        items = []
        for i in range(n):
            if rng.random() < 0.7:
                dist = Bernoulli(float(rng.uniform(0.05, 0.95)))
            else:
                dist = Deterministic(float(rng.uniform(0.0, 1.0)))
            items.append(Item(i + 1, float(costs[i]), dist))
        return Instance(tuple(items), budget)


def random_cost_profile(rng: np.random.Generator, n: int = 12, budget: float = 1.0) -> list[float]:
    kind = rng.integers(3)
    if kind == 0:
        return list(budget * rng.uniform(0.01, 1.0, n))
    if kind == 1:
        # just above B/k, capped so a k = 1 item still fits
        return list(np.minimum(budget / rng.integers(1, 40, n) * rng.uniform(1.0, 1.05, n), budget))
    return list(budget * np.exp(-rng.uniform(0, 5, n)))


def random_feasible_set(rng: np.random.Generator, costs, budget: float) -> list[int]:
    """Random maximal-by-scan feasible subset of cost indices."""
    chosen, total = [], 0.0
    for i in rng.permutation(len(costs)):
        if math.fsum([total, costs[i]]) <= budget:
            chosen.append(int(i))
            total = math.fsum([total, costs[i]])
    return chosen


def near_worst_relative_cost_profile(budget: float = 1.0, eps: float = 1e-8) -> list[float]:
    """Costs just above ``B/2, B/3, B/7, B/43, B/1807`` whose sum fits the budget.

    Replication counts are ``1, 2, 6, 42, 1806`` so the relative cost of the
    whole set is close to the supremum of the relative-cost cap.
    """
    return [budget / s + eps for s in (2, 3, 7, 43, 1807)]


# --------------------------------------------------------------------------
# self-check suite
# --------------------------------------------------------------------------


@dataclass
class VerifyReport:
    checks: list = field(default_factory=list)  # (name, passed, detail)
    warnings: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.checks)

    def add(self, name, ok, detail=""):
        self.checks.append((name, bool(ok), detail))

    def lines(self) -> list[str]:
        out = [f"{'PASS' if ok else 'FAIL'} {name}: {detail}" for name, ok, detail in self.checks]
        out += [f"WARN {w}" for w in self.warnings]
        return out


def verify_suite(corpus_size: int = 50, seed: int = 0, q_fn=q_factor, mc_reps: int = 20_000) -> VerifyReport:
    """Run the invariant checks on a corpus of ``corpus_size`` random cases."""
    rep = VerifyReport()
    if corpus_size <= 0:
        rep.warnings.append("corpus size 0: nothing checked")
        return rep
    streams = Streams(seed)

    rng = streams.get("verify-dcap")
    worst = 0.0
    for _ in range(corpus_size):
        costs = random_cost_profile(rng)
        S = random_feasible_set(rng, costs, 1.0)
        worst = max(worst, math.fsum(1.0 / math.floor(1.0 / costs[i]) for i in S))
    rep.add("relative-cost-cap", worst <= 1.7, f"max d(S) = {worst:.4f}")

    rng = streams.get("verify-corpus")
    variants = standard_variants()
    bound = guarantee_factor(General())
    worst_ratio, sandwich_fail, stream_fail = math.inf, 0, 0
    for t in range(corpus_size):
        inst = random_oracle_instance(rng)
        g = variants[t % len(variants)]
        ex = ExactUtility(inst, g)
        scores = exact_score_table(inst, g)
        opt = brute_force(inst, g, utility=ex).utility_estimate
        got = tsg(inst, scores, utility=ex).utility_estimate
        if opt > 0:
            worst_ratio = min(worst_ratio, got / opt)
        S = list(brute_force(inst, g, utility=ex).selected) or [inst.ids[0]]
        sw = verify_sandwich(inst, g, S, mc_reps, Streams(streams.derive_seed("sandwich", t)), q_fn=q_fn)
        sandwich_fail += not sw.passed
        order = rng.permutation(inst.ids)
        if len(set(scores.as_dict().values())) == len(inst):
            _, stats = streaming_tsg([inst[i] for i in order], inst.budget, lambda it: scores.r_hat(it.id),
                                     utility=ex, instance=inst)
            _, s2, cut, ranked = tsg_candidates(inst, scores)
            expect = tuple(ranked[: cut + 1]) if s2 is not None else tuple(ranked)
            stream_fail += (stats.final_buffer != expect) or stats.peak_buffer_items > buffer_bound(inst)
    rep.add("approximation-vs-oracle", worst_ratio >= bound, f"min ratio {worst_ratio:.4f} (bound {bound:.4f})")
    rep.add("sketch-sandwich", sandwich_fail == 0, f"{sandwich_fail} failures")
    rep.add("streaming-agreement", stream_fail == 0, f"{stream_fail} mismatches")

    rng = streams.get("verify-coverage")
    acc = AccuracySpec(0.2, 0.1)
    g = Modular()
    for name, T in (("hoeffding", hoeffding_samples(2, 2.0, 1.0, acc)), ("mcdiarmid", mcdiarmid_samples(2, 1.0, 1.0, acc))):
        hits = 0
        for _ in range(corpus_size):
            r_hat = estimate_item_score((rng.random(T) < 0.5).astype(float), 2, g)[0]
            hits += abs(r_hat - 1.0) <= 0.2
        # lenient normal-approximation floor; the acceptance suite runs the exact binomial test
        floor = (1 - acc.delta) * corpus_size - 3 * math.sqrt(corpus_size * acc.delta * (1 - acc.delta))
        rep.add(f"coverage-{name}", hits >= floor, f"T={T} coverage {hits}/{corpus_size}")
    return rep
