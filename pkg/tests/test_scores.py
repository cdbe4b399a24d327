from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from testscore.errors import CapacityError, DomainError
from testscore.harness import random_cost_profile, random_feasible_set, random_oracle_instance
from testscore.instance import Bernoulli, Deterministic, Empirical, Exponential, Instance, Item, pareto_from_mean
from testscore.rng import Streams
from testscore.scores import (
    ScoreTable,
    curvature_sketch_factors,
    estimate_scores,
    exact_score,
    exact_score_table,
    relative_cost,
    score_sketch,
    verify_sandwich,
)
from testscore.utility import exact_utility
from testscore.valuefns import CES, Modular, Power, SuccessProbability, TopR, batch_evaluate, standard_variants


def product_oracle(values, probs, k, g):
    """E[g] by brute force over the full product support."""
    total = 0.0
    for combo in itertools.product(range(len(values)), repeat=k):
        w = math.prod(probs[j] for j in combo)
        total += w * float(batch_evaluate(g, np.array([[values[j] for j in combo]]))[0])
    return total


def test_modular_deterministic_score():
    inst = Instance((Item(1, 3, Deterministic(0.5)),), 30)
    for N in (1, 7, 100):
        assert estimate_scores(inst, Modular(), N, 1)[1].r_hat == 5.0
    assert exact_score(inst[1], Modular(), 30) == 5.0


@pytest.mark.parametrize("k", [1, 2, 5, 30])
def test_max_of_identical_values(k):
    inst = Instance((Item(1, 30 / k, Deterministic(0.8)),), 30)
    assert estimate_scores(inst, TopR(1), 50, 0)[1].r_hat == pytest.approx(0.8, abs=1e-15)


def test_exact_score_examples():
    assert exact_score(Item(1, 10, Bernoulli(0.5)), TopR(1), 30) == pytest.approx(0.875, abs=1e-15)
    assert exact_score(Item(1, 15, Bernoulli(0.4)), CES(2), 30) == pytest.approx(0.4 * 0.6 * 2 + 0.16 * math.sqrt(2))
    assert exact_score(Item(1, 7, Exponential(0.3)), Modular(), 30) == pytest.approx(4 * 0.3)


@pytest.mark.parametrize("g", standard_variants(), ids=lambda g: g.tag)
def test_exact_score_matches_product_oracle(g):
    rng = np.random.default_rng(8)
    for _ in range(5):
        vals = tuple(rng.integers(0, 4, rng.integers(1, 4)) * 0.5)
        d = Empirical(vals)
        k = int(rng.integers(1, 6))
        v, p = d.support()
        assert exact_score(Item(1, 1.0, d), g, float(k)) == pytest.approx(product_oracle(v, p, k, g), rel=1e-12, abs=1e-14)


def test_exact_score_capacity():
    d = Empirical(tuple(range(50)))
    with pytest.raises(CapacityError):
        exact_score(Item(1, 1, d), TopR(1), 40, cap=10**6)
    with pytest.raises(CapacityError):
        exact_score(Item(1, 1, Exponential(1.0)), TopR(1), 4)


@pytest.mark.parametrize("g", [TopR(1), CES(2), Power(0.5), SuccessProbability("exp")], ids=lambda g: g.tag)
def test_exact_score_nondecreasing_in_k(g):
    item = Item(1, 1.0, Empirical((0.0, 0.3, 1.0, 1.0)))
    vals = [exact_score(item, g, float(k)) for k in range(1, 9)]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_estimator_bernoulli_max():
    inst = Instance((Item(1, 10, Bernoulli(0.5)),), 30)
    t = estimate_scores(inst, TopR(1), 300_000, 3)
    assert abs(t[1].r_hat - 0.875) <= 0.01
    assert t[1].m == 100_000 and not t[1].degraded


def test_estimator_consistency_within_4_se():
    rng = np.random.default_rng(0)
    for g in (TopR(1), CES(2), Power(0.5)):
        inst = random_oracle_instance(rng)
        exact = exact_score_table(inst, g)
        for it in inst.items:
            k = inst.k(it.id)
            single = Instance((it,), inst.budget)
            e = estimate_scores(single, g, 100_000 * k, Streams(5))[it.id]
            se = e.stderr if e.stderr > 0 else 1e-12
            assert abs(e.r_hat - exact[it.id].r_hat) <= 4 * se + 1e-12


def test_degraded_estimation():
    inst = Instance((Item(1, 1, Bernoulli(0.5)),), 10)
    e = estimate_scores(inst, Modular(), 3, 0)[1]
    assert e.degraded and e.m == 1 and e.k == 10


def test_batches_use_draw_order():
    inst = Instance((Item(1, 10, Exponential(1.0)),), 30)
    e = estimate_scores(inst, TopR(1), 10, Streams(4))[1]
    x = inst[1].dist.sample(Streams(4).get("estimate", 1), 10)
    assert e.m == 3
    assert e.r_hat == pytest.approx(np.mean([x[0:3].max(), x[3:6].max(), x[6:9].max()]))


def test_estimates_are_reproducible():
    inst = random_oracle_instance(np.random.default_rng(1))
    a = estimate_scores(inst, CES(2), 40, 7).as_dict()
    b = estimate_scores(inst, CES(2), 40, 7).as_dict()
    assert a == b


def test_score_table_csv_round_trip():
    inst = random_oracle_instance(np.random.default_rng(2))
    t = estimate_scores(inst, TopR(1), 5, 1)
    back = ScoreTable.from_csv(t.to_csv())
    assert t.to_csv().splitlines()[0] == "item_id,cost,k,m,r_hat,degraded"
    for i in inst.ids:
        assert back[i].r_hat == t[i].r_hat and back[i].degraded == t[i].degraded


def test_relative_cost():
    inst = Instance(tuple(Item(i, 3, Bernoulli(0.5)) for i in range(10)), 30)
    assert relative_cost(inst, range(10)) == 1.0
    assert relative_cost(inst, []) == 0.0
    inst2 = Instance((Item(1, 3.5, Bernoulli(.5)), Item(2, 2.05, Bernoulli(.5)), Item(3, 0.45, Bernoulli(.5))), 6)
    assert relative_cost(inst2, [1, 2, 3]) == pytest.approx(1 + 1 / 2 + 1 / 13)
    with pytest.raises(KeyError):
        relative_cost(inst2, [9])


def test_sketch_examples():
    inst = Instance((Item(1, 1, Deterministic(2)),), 1)
    sk = score_sketch(inst, {1: 2.0}, [1])
    assert (sk.v_min, sk.v_max, sk.v_avg, sk.d) == (2, 2, 2, 1)
    assert sk.p_factor == pytest.approx(1 - 1 / math.e)
    assert sk.q_factor == 4.0
    inst2 = Instance((Item(1, 1, Deterministic(1)), Item(2, 1, Deterministic(1))), 2)
    sk2 = score_sketch(inst2, {1: 1.0, 2: 3.0}, [1, 2])
    assert sk2.v_avg == 2.0 and sk2.d == 1.0
    with pytest.raises(DomainError):
        score_sketch(inst2, {1: 1.0, 2: 3.0}, [])


def test_q_factor_at_cap():
    from testscore.scores import q_factor

    assert q_factor(1.7) == pytest.approx(2.7 + 2 * math.sqrt(1.7))
    assert q_factor(1.7) == pytest.approx(5.3077, abs=1e-4)


def test_curvature_sketch_factors():
    assert curvature_sketch_factors(1.0, 0.0) == (1.0, 1.0)
    p, _ = curvature_sketch_factors(1.0, 1 - 1e-12)
    assert p == pytest.approx(1 - 1 / math.e, abs=1e-9)
    p, q = curvature_sketch_factors(2.0, 0.5)
    assert p == pytest.approx(2 * (1 - math.exp(-1)))
    assert q == 4.0
    assert math.isinf(curvature_sketch_factors(1.0, 1.0)[1])


def test_average_score_chain_and_d_cap():
    rng = np.random.default_rng(9)
    for _ in range(200):
        inst = random_oracle_instance(rng)
        r = {i: float(rng.random()) for i in inst.ids}
        S = random_feasible_set(rng, [inst[i].cost for i in inst.ids], inst.budget)
        S = [inst.ids[j] for j in S]
        if not S:
            continue
        sk = score_sketch(inst, r, S)
        assert sk.v_min <= sk.v_avg <= sk.v_max
        assert 0 < sk.d <= 1.7


def test_cost_regularity_bounds():
    rng = np.random.default_rng(10)
    B = 1.0
    for _ in range(2000):
        beta = float(rng.uniform(0.02, 0.4))
        small = rng.random() < 0.5
        if not small:
            kmax = int(rng.integers(int(math.ceil(1 / beta)), 60))
            kmin = max(1, math.ceil((1 - beta) * kmax))
        # enough items that a maximal set is stopped by the budget
        costs = []
        while math.fsum(costs) <= 2 * B:
            if small:
                costs.append(float(rng.uniform(0.001, beta * B)))
            else:
                # cost in (B/(k+1), B/k] gives replication count exactly k
                costs.append(B / (int(rng.integers(kmin, kmax + 1)) + float(rng.uniform(0.0, 0.999))))
        S = random_feasible_set(rng, costs, B)
        d = math.fsum(1.0 / math.floor(B / costs[i]) for i in S)
        assert 1 - beta / (1 - beta) - 1e-12 <= d <= 1 + beta / (1 - beta) + 1e-12


def test_sandwich_modular_deterministic_closed_form():
    inst = Instance((Item(1, 0.3, Deterministic(0.2)), Item(2, 0.5, Deterministic(0.9))), 1.0)
    rep = verify_sandwich(inst, Modular(), [1, 2], 1000, 0)
    assert rep.u_hat == pytest.approx(1.1)
    assert rep.lower <= 1.1 <= rep.upper and rep.passed
    # modular average-score factors are exact
    assert rep.avg_lower == pytest.approx(1.1) and rep.avg_upper == pytest.approx(1.1)


def test_average_score_bounds_reject_at_nominal_rate():
    from scipy.stats import binomtest

    # for modular g the average-score bounds equal u(S), so misses are pure sampling noise
    rng = np.random.default_rng(13)
    checked = missed = 0
    for t in range(400):
        inst = random_oracle_instance(rng)
        S = [inst.ids[j] for j in random_feasible_set(rng, [it.cost for it in inst.items], inst.budget)]
        rep = verify_sandwich(inst, Modular(), S, 20_000, Streams(t))
        assert rep.passed and rep.avg_passed is not None
        if rep.se > 1e-9:
            checked += 1
            missed += not rep.avg_passed
    assert checked > 300
    assert binomtest(missed, checked, 0.0027, alternative="greater").pvalue >= 0.01


def test_sandwich_singleton():
    inst = Instance((Item(1, 0.3, Bernoulli(0.4)),), 1.0)
    rep = verify_sandwich(inst, TopR(1), [1], 20_000, 1)
    assert rep.passed and rep.u_hat <= rep.upper


def test_sandwich_rejects_infeasible():
    inst = Instance((Item(1, 0.6, Bernoulli(0.4)), Item(2, 0.6, Bernoulli(0.4))), 1.0)
    with pytest.raises(DomainError):
        verify_sandwich(inst, TopR(1), [1, 2], 100, 0)


def test_sandwich_with_unbounded_items_uses_estimates():
    inst = Instance((Item(1, 0.3, Exponential(0.5)), Item(2, 0.4, pareto_from_mean(0.5, 3.0))), 1.0)
    rep = verify_sandwich(inst, CES(2), [1, 2], 50_000, 2, score_samples=50_000)
    assert rep.passed and not rep.exact_scores


def test_sandwich_detects_faulty_upper_factor():
    inst = Instance((Item(1, 0.3, Bernoulli(0.6)), Item(2, 0.4, Bernoulli(0.7))), 1.0)
    rep = verify_sandwich(inst, Modular(), [1, 2], 20_000, 3, q_fn=lambda d: 0.05)
    assert not rep.passed


def test_lower_sketch_against_exact_utility():
    rng = np.random.default_rng(12)
    for g in standard_variants():
        for _ in range(20):
            inst = random_oracle_instance(rng)
            r = exact_score_table(inst, g).as_dict()
            S = [inst.ids[j] for j in random_feasible_set(rng, [inst[i].cost for i in inst.ids], inst.budget)]
            sk = score_sketch(inst, r, S)
            u = exact_utility(inst, g, S)
            assert sk.p_factor * sk.v_min <= u + 1e-12
            assert u <= sk.q_factor * sk.v_max + 1e-12
