import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from immax.data import Dataset
from immax.margins import (
    BoundDomainError,
    NotSeparableError,
    compare_margins,
    geometric_margin,
    ldam_margins,
    lemma_d3_identity_check,
    margin_bound_binary,
    margin_bound_multi,
    optimal_separable_margins,
    ordering_verdict,
    renyi_d3,
    rho_heuristic,
)
from immax.models import BinaryLinear
from oracles import renyi3, rho_direction_pgd, separable_margins_grid

counts = st.integers(1, 10**6)
radii = st.floats(0.1, 10)


def test_separable_examples():
    assert optimal_separable_margins(5, 5).as_tuple() == (1.0, 1.0)
    np.testing.assert_allclose(optimal_separable_margins(8, 1).as_tuple(), (4 / 3, 2 / 3), rtol=1e-14)
    np.testing.assert_allclose(optimal_separable_margins(1, 8).as_tuple(), (2 / 3, 4 / 3), rtol=1e-14)
    # grid oracle on the same instance
    np.testing.assert_allclose(separable_margins_grid(8, 1, 1, 1, 1), (4 / 3, 2 / 3), atol=1e-6)


def test_separable_rejects_nonpositive():
    with pytest.raises(ValueError):
        optimal_separable_margins(0, 3)


@given(mp=counts, mm=counts, rp=radii, rm=radii, geom=st.floats(0.1, 5))
def test_separable_matches_grid(mp, mm, rp, rm, geom):
    res = optimal_separable_margins(mp, mm, rp, rm, geom)
    grid = separable_margins_grid(mp, mm, rp, rm, geom)
    assert res.rho_plus + res.rho_minus == pytest.approx(2 * geom, rel=1e-12)
    np.testing.assert_allclose(res.as_tuple(), grid, atol=1e-3 * geom)


@given(mp=counts, mm=counts, geom=st.floats(0.1, 5))
def test_ordering_follows_counts(mp, mm, geom):
    ours = optimal_separable_margins(mp, mm, rho_geom=geom)
    theirs = ldam_margins(mp, mm, geom)
    if mp == mm:
        assert ordering_verdict(ours.as_tuple(), theirs) == "equal margins"
        return
    assert np.sign(ours.rho_plus - ours.rho_minus) == np.sign(mp - mm)
    assert np.sign(theirs[0] - theirs[1]) == -np.sign(mp - mm)


def test_ldam_examples():
    np.testing.assert_allclose(ldam_margins(16, 1), (2 / 3, 4 / 3), rtol=1e-14)
    assert ldam_margins(7, 7, 2.0) == (2.0, 2.0)
    out = compare_margins(16, 1)
    assert out["ordering_verdict"] == "opposite ordering"
    assert out["ours"]["rho_plus"] > out["ours"]["rho_minus"]
    assert out["ldam"]["rho_plus"] < out["ldam"]["rho_minus"]


def test_compare_margins_8_1():
    out = compare_margins(8, 1)
    q = 8 ** 0.25
    np.testing.assert_allclose([out["ldam"]["rho_plus"], out["ldam"]["rho_minus"]],
                               [2 / (1 + q), 2 * q / (1 + q)], rtol=1e-14)
    assert out["ldam"]["rho_plus"] == pytest.approx(0.7457, abs=1e-4)
    assert out["ldam"]["rho_minus"] == pytest.approx(1.2543, abs=1e-4)


def test_ordering_verdicts():
    assert ordering_verdict((2, 1), (1, 2)) == "opposite ordering"
    assert ordering_verdict((2, 1), (3, 1)) == "same ordering"
    assert ordering_verdict((1, 1), (1, 1)) == "equal margins"
    assert ordering_verdict((1, 1), (1, 2)) == "partial tie"


def test_geometric_margin():
    ds = Dataset(np.array([[1.0, 0.0], [-2.0, 0.0]]), np.array([0, 1]), 2)
    assert geometric_margin(BinaryLinear(2, [1.0, 0.0]), ds) == 1.0
    assert geometric_margin(BinaryLinear(2, [10.0, 0.0]), ds) == 1.0
    with pytest.raises(NotSeparableError, match="not separable"):
        geometric_margin(BinaryLinear(2, [-1.0, 0.0]), ds)
    with pytest.raises(ValueError):
        geometric_margin(BinaryLinear(2), ds)


def test_rho_heuristic_examples():
    np.testing.assert_allclose(rho_heuristic([1, 1], [1, 1]).direction, [0.5, 0.5])
    np.testing.assert_allclose(rho_heuristic([8, 1], [1, 1]).direction, [2 / 3, 1 / 3], rtol=1e-14)
    m = np.array([100, 30, 7, 1])
    np.testing.assert_allclose(rho_heuristic(m, np.ones(4)).direction, np.cbrt(m) / np.cbrt(m).sum())


@given(st.lists(st.tuples(st.floats(1, 500), st.floats(0.2, 5)), min_size=2, max_size=6))
def test_rho_heuristic_is_simplex_minimizer(pairs):
    m, r = map(np.array, zip(*pairs))
    heur = rho_heuristic(m, r)
    oracle = rho_direction_pgd(m, r)
    np.testing.assert_allclose(heur.direction, oracle, atol=1e-6)
    assert heur.direction.sum() == pytest.approx(1.0, abs=1e-14)


def test_renyi_examples():
    assert renyi_d3([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert renyi_d3([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.5 * math.log(20 / 9), rel=1e-14)
    assert renyi_d3([1, 0], [0.5, 0.5]) == pytest.approx(math.log(2), rel=1e-14)
    assert renyi_d3([0.5, 0.5], [1.0, 0.0]) == math.inf
    with pytest.raises(ValueError):
        renyi_d3([0.5, 0.6], [0.5, 0.5])


@given(st.lists(st.floats(0.01, 1), min_size=2, max_size=6), st.data())
def test_renyi_nonnegative_and_matches_oracle(p, data):
    q = data.draw(st.lists(st.floats(0.01, 1), min_size=len(p), max_size=len(p)))
    p = np.array(p) / sum(p)
    q = np.array(q) / sum(q)
    d = renyi_d3(p, q)
    assert d >= 0
    assert d == pytest.approx(max(0.0, renyi3(p, q)), rel=1e-10, abs=1e-14)


def test_divergence_identity_examples():
    one = lemma_d3_identity_check([7], [2.0], [0.5])
    assert one["lhs"] == pytest.approx(7 * 4 / 0.25)
    assert one["rhs"] == pytest.approx(one["lhs"], rel=1e-14)
    m, r = np.array([50, 20, 5]), np.array([1.0, 2.0, 0.5])
    heur = rho_heuristic(m, r)
    rho = 3.0 * heur.direction
    out = lemma_d3_identity_check(m, r, rho)
    assert out["rhs"] == pytest.approx(heur.r_bar ** 2 / 9.0, rel=1e-13)


@given(st.lists(st.tuples(st.floats(1, 1e3), st.floats(0.1, 10), st.floats(0.05, 5)),
                min_size=1, max_size=6))
def test_divergence_identity_random(triples):
    m, r, rho = map(np.array, zip(*triples))
    out = lemma_d3_identity_check(m, r, rho)
    assert out["abs_diff"] <= 1e-10 * out["lhs"]


# ---------------------------------------------------------------------------
# margin bounds; expected values are hand arithmetic re-done in each test


def test_binary_bound_examples():
    assert margin_bound_binary(0, 0, 200, 0.05) == pytest.approx(math.sqrt(math.log(20) / 400), rel=1e-14)
    assert margin_bound_binary(0, 0, 200, 0.05) == pytest.approx(0.0865409, abs=1e-7)
    assert margin_bound_binary(0, 0, 200, 1.0) == 0.0
    v = margin_bound_binary(0.2, 0.1, 100, 0.1)
    assert v == pytest.approx(0.4 + math.sqrt(math.log(10) / 200), rel=1e-14)
    assert v == pytest.approx(0.507298, abs=1e-6)


def test_binary_bound_uniform():
    r, rho = (2.0, 3.0), (0.5, 0.1)
    expected = (0.1 + 4 * 0.02 + math.sqrt(math.log(math.log2(8)) / 500)
                + math.sqrt(math.log(math.log2(60)) / 500) + math.sqrt(math.log(4 / 0.05) / 1000))
    assert margin_bound_binary(0.1, 0.02, 500, 0.05, True, r, rho) == pytest.approx(expected, rel=1e-14)
    emp = margin_bound_binary(0.1, 0.02, 500, 0.05, True, r, rho, empirical=True)
    assert emp > margin_bound_binary(0.1, 0.02, 500, 0.05, True, r, rho)
    with pytest.raises(BoundDomainError):
        margin_bound_binary(0, 0, 10, 0.1, True, (1.0, 1.0), (2.0, 0.5))
    with pytest.raises(ValueError):
        margin_bound_binary(0, 0, 10, 0.0)


def test_multi_bound_examples():
    assert margin_bound_multi(0, 0, 3, 400, 0.1) == pytest.approx(math.sqrt(math.log(10) / 800))
    # complexity term alone, confidence vanishing as m grows
    big = margin_bound_multi(0, 0.05, 2, 10 ** 12, 0.5)
    assert big == pytest.approx(0.4, abs=1e-6)
    a = margin_bound_multi(0, 0.05, 4, 100, 1.0)
    b = margin_bound_multi(0, 0.10, 4, 100, 1.0)
    assert b == pytest.approx(2 * a, rel=1e-14)


def test_multi_bound_uniform():
    r, rho = [1.0, 2.0, 4.0], [0.5, 0.5, 0.5]
    loglog = sum(math.sqrt(math.log(math.log2(2 * rk / pk)) / 300) for rk, pk in zip(r, rho))
    expected = 0.05 + 4 * 3 * math.sqrt(6) * 0.01 + loglog + math.sqrt(math.log(8 / 0.1) / 600)
    assert margin_bound_multi(0.05, 0.01, 3, 300, 0.1, True, r, rho) == pytest.approx(expected, rel=1e-14)
