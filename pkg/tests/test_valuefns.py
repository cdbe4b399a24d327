from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from testscore.errors import DomainError, InvalidParameterError, UnboundedSupportError
from testscore.valuefns import (
    CES,
    Modular,
    Power,
    Saturating,
    SuccessProbability,
    TopR,
    batch_evaluate,
    check_dr_property,
    check_value_ordered_dr,
    curvature_of,
    evaluate,
    g_sup_norms,
    linear_combination,
    marginal,
    parse_value_fn,
    standard_variants,
)

VARIANTS = standard_variants()
IDS = [g.tag for g in VARIANTS]


def test_evaluate_examples():
    assert evaluate(CES(2), [3, 4]) == 5.0
    assert evaluate(TopR(2), [5, 3, 1]) == 8.0
    assert evaluate(SuccessProbability("min"), [0.5, 0.5]) == 0.75
    assert evaluate(Modular(), []) == 0.0
    assert evaluate(Power(0.5), [1, 3]) == 2.0
    assert math.isclose(evaluate(Saturating(2.0, 1.0), [1, 2]), 2 * 3 / 4)
    assert math.isclose(evaluate(SuccessProbability("exp"), [1.0]), 1 - math.exp(-1))


def test_marginal_examples():
    assert marginal(Modular(), [1, 1], 2) == 2.0
    assert marginal(TopR(1), [5], 3) == 0.0
    assert marginal(TopR(1), [5], 7) == 2.0


def test_negative_entries_rejected():
    with pytest.raises(DomainError):
        evaluate(Modular(), [1, -0.5])


@pytest.mark.parametrize("g", VARIANTS, ids=IDS)
def test_empty_vector_equals_zero_padding(g):
    assert evaluate(g, []) == evaluate(g, [0.0, 0.0, 0.0])
    x = [0.3, 1.7]
    for j in range(4):
        assert evaluate(g, x + [0.0] * j) == pytest.approx(evaluate(g, x), abs=1e-15)


@pytest.mark.parametrize("g", VARIANTS, ids=IDS)
def test_symmetry(g):
    rng = np.random.default_rng(11)
    for _ in range(1000):
        x = rng.exponential(1.0, rng.integers(1, 7))
        base = evaluate(g, x)
        perm = evaluate(g, rng.permutation(x))
        assert perm == pytest.approx(base, rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("g", VARIANTS, ids=IDS)
def test_monotone(g):
    rng = np.random.default_rng(12)
    for _ in range(1000):
        x = list(rng.random(rng.integers(0, 6)))
        z = float(rng.exponential())
        assert evaluate(g, x + [z]) >= evaluate(g, x) - 1e-12


@pytest.mark.parametrize("g", VARIANTS, ids=IDS)
def test_dr_property_holds(g):
    rep = check_dr_property(g, 1000, np.random.default_rng(5))
    assert rep.passed, rep.counterexample


def test_dr_tester_catches_non_symmetric_convex_map():
    def first_squared(x):
        return (x[0] if len(x) else 0.0) ** 2

    rep = check_dr_property(first_squared, 1000, np.random.default_rng(0))
    assert not rep.passed
    assert rep.counterexample is not None


def test_dr_tester_catches_convex_symmetric_map():
    rep = check_dr_property(lambda x: float(np.sum(x)) ** 2, 1000, np.random.default_rng(0))
    assert not rep.passed and rep.property == "diminishing-returns"


def test_value_ordered_condition_per_variant():
    rng = np.random.default_rng(3)
    for g in (Modular(), Power(0.5), Saturating(1, 1), TopR(1), CES(2), SuccessProbability("min"),
              SuccessProbability("exp")):
        assert check_value_ordered_dr(g, 2000, rng).passed, g.tag
    assert not check_value_ordered_dr(TopR(2), 5000, rng).passed


def test_curvature_analytic_values():
    assert curvature_of(Modular()).alpha == 0.0
    assert curvature_of(Modular()).source == "analytic"
    assert curvature_of(Power(1.0)).alpha == 0.0
    assert curvature_of(TopR(1)).alpha == 1.0


def test_curvature_sampled_for_max():
    info = curvature_of(lambda x: float(np.max(x)) if len(x) else 0.0, 10_000, np.random.default_rng(1))
    assert info.source == "sampled-estimate"
    assert info.alpha >= 0.99


def test_curvature_sampled_is_lower_estimate():
    info = curvature_of(Power(0.5), 2000, np.random.default_rng(2))
    assert info.source == "sampled-estimate"
    assert 0.0 < info.alpha <= 1.0


@pytest.mark.parametrize("g", [Modular(), TopR(1), Power(1.0)], ids=["modular", "max", "power1"])
def test_curvature_sandwich(g):
    alpha = curvature_of(g).alpha
    rng = np.random.default_rng(4)
    for _ in range(1000):
        y = rng.random(rng.integers(1, 6))
        x = y[rng.random(len(y)) < 0.5]
        z = float(rng.random())
        mx, my = marginal(g, x, z), marginal(g, y, z)
        assert (1 - alpha) * mx <= my + 1e-12
        assert my <= mx + 1e-9


@pytest.mark.parametrize("g,b,k,expected", [
    (Modular(), 1, 4, (4, 1)),
    (TopR(1), 1, 4, (1, 1)),
    (CES(2), 1, 4, (2, 1)),
    (TopR(3), 2, 2, (4, 2)),
    (SuccessProbability("min"), 1, 3, (1, 1)),
    (Power(0.5), 1, 4, (2, 1)),
])
def test_sup_norms(g, b, k, expected):
    assert g_sup_norms(g, b, k) == pytest.approx(expected)


@pytest.mark.parametrize("g", VARIANTS, ids=IDS)
def test_sup_norms_dominate_grid(g):
    b, k = 1.5, 3
    gs, g1 = g_sup_norms(g, b, k)
    grid = np.array(np.meshgrid(*[np.linspace(0, b, 7)] * k)).reshape(k, -1).T
    assert batch_evaluate(g, grid).max() <= gs + 1e-12
    assert batch_evaluate(g, np.linspace(0, b, 50).reshape(-1, 1)).max() <= g1 + 1e-12


def test_sup_norms_refuse_unbounded():
    with pytest.raises(UnboundedSupportError):
        g_sup_norms(Modular(), math.inf, 2)


@pytest.mark.parametrize("tag,expected", [("modular", Modular()), ("sqrt", Power(0.5)), ("power:0.3", Power(0.3)),
                                          ("ces:2", CES(2.0)), ("topr:1", TopR(1)), ("max", TopR(1)),
                                          ("succ:exp", SuccessProbability("exp")), ("sat:2:1", Saturating(2, 1))])
def test_parse_value_fn(tag, expected):
    assert parse_value_fn(tag) == expected


@pytest.mark.parametrize("bad", ["median", "ces:1", "power:2", "succ:tanh", "topr:0", "ces:x"])
def test_parse_value_fn_rejects(bad):
    with pytest.raises(InvalidParameterError):
        parse_value_fn(bad)


def test_linear_combination():
    g = linear_combination([(2.0, Modular()), (1.0, TopR(1))])
    assert evaluate(g, [1, 3]) == 2 * 4 + 3
    assert g.analytic_alpha is None
    assert linear_combination([(1, Modular()), (3, Power(1.0))]).analytic_alpha == 0.0
    assert check_dr_property(g, 500, np.random.default_rng(0)).passed


@given(st.lists(st.floats(0, 10), max_size=8))
def test_batch_matches_rowwise(x):
    for g in VARIANTS:
        row = batch_evaluate(g, np.array([x]) if x else np.zeros((1, 0)))[0]
        assert row == evaluate(g, x)
