import math

import numpy as np
import pytest

from gaussian_utils import RngStream
from oracle_utils import (
    ConfigurationError,
    DomainError,
    FiniteSumOracle,
    FunctionOracle,
    ProblemMeta,
    QueryCounter,
    RgoHandle,
    UnsupportedOperationError,
    combine_quadratics,
    linear_tilt,
    regularized_oracle,
    shift_to_shared_min,
)
from model_problems import l1_rgo, zero_rgo


def quadratic(center=1.0, L=1.0):
    c = np.atleast_1d(center)
    return FunctionOracle(lambda x: 0.5 * L * float((x - c) @ (x - c)), ProblemMeta(L, L, c.size),
                          gradient_fn=lambda x: L * (x - c), name="q")


def test_counters_match_calls():
    f = quadratic()
    for _ in range(3):
        f.value(np.zeros(1))
    f.gradient(np.zeros(1))
    f.gradient(np.ones(1))
    assert f.counter["value"] == 3
    assert f.counter["gradient"] == 2
    assert f.counter.snapshot() == {"gradient": 2, "value": 3}


def test_counter_never_decreases():
    counter = QueryCounter()
    with pytest.raises(DomainError):
        counter.add("value", -1)


def test_zeroth_order_oracle_has_no_gradient():
    f = FunctionOracle(lambda x: float(x @ x), ProblemMeta(2.0, 2.0, 1))
    assert not f.has_gradient
    with pytest.raises(UnsupportedOperationError):
        f.gradient(np.zeros(1))


def test_problem_meta_validation():
    assert ProblemMeta(4.0, 1.0, 3).kappa == 4.0
    with pytest.raises(DomainError):
        ProblemMeta(1.0, 2.0, 1)
    with pytest.raises(DomainError):
        ProblemMeta(1.0, 0.0, 1)
    with pytest.raises(DomainError):
        ProblemMeta(1.0, 1.0, 0)


def test_regularized_oracle_adds_quadratic():
    f = quadratic(center=0.0, L=2.0)
    r = regularized_oracle(f, np.array([1.0]), 0.5)
    x = np.array([3.0])
    assert r.value(x) == pytest.approx(0.5 * 2.0 * 9.0 + 4.0 / 1.0)
    assert r.gradient(x)[0] == pytest.approx(6.0 + 4.0)
    assert r.meta.L == pytest.approx(4.0)
    assert r.meta.mu == pytest.approx(4.0)
    assert r.counter is f.counter


def test_combine_quadratics_constant_difference():
    rng = np.random.default_rng(0)
    lam1, v1, lam2, v2 = 0.3, rng.standard_normal(3), 2.0, rng.standard_normal(3)
    lam, v = combine_quadratics(lam1, v1, lam2, v2)
    diffs = []
    for _ in range(5):
        x = rng.standard_normal(3)
        both = (x - v1) @ (x - v1) / (2 * lam1) + (x - v2) @ (x - v2) / (2 * lam2)
        merged = (x - v) @ (x - v) / (2 * lam)
        diffs.append(both - merged)
    assert np.ptp(diffs) < 1e-10


def test_combine_quadratics_rejects_nonpositive():
    with pytest.raises(DomainError):
        combine_quadratics(0.0, [1.0], 1.0, [0.0])


def test_shift_to_shared_min_keeps_sum():
    f = quadratic(center=1.0)
    g = l1_rgo(1.0, 1)
    x_star = np.zeros(1)
    f_shift, g_shift = shift_to_shared_min(f, g, x_star)
    assert f_shift.gradient(x_star)[0] == pytest.approx(0.0)
    for x in (-2.0, -0.3, 0.0, 0.7, 4.0):
        point = np.array([x])
        assert f_shift.value(point) + g_shift.value(point) == pytest.approx(f.value(point) + g.value(point))
    # (x^2 + 1)/2 and |x| - x
    assert f_shift.value(np.array([2.0])) == pytest.approx(2.5)
    assert g_shift.value(np.array([-1.0])) == pytest.approx(2.0)


def test_shift_needs_gradient():
    f = FunctionOracle(lambda x: float(x @ x), ProblemMeta(2.0, 2.0, 1))
    with pytest.raises(UnsupportedOperationError):
        shift_to_shared_min(f, zero_rgo(1), np.zeros(1))


def test_linear_tilt():
    f = linear_tilt(quadratic(center=0.0), np.array([2.0]))
    assert f.value(np.array([1.0])) == pytest.approx(0.5 - 2.0)
    assert f.gradient(np.array([1.0]))[0] == pytest.approx(-1.0)


def test_rgo_cap_is_enforced():
    handle = RgoHandle(lambda lam, v, rng, tol: v, 1, eta_cap=0.5)
    with pytest.raises(ConfigurationError):
        handle.draw(1.0, np.zeros(1), RngStream(0))
    with pytest.raises(DomainError):
        handle.draw(-1.0, np.zeros(1), RngStream(0))


def test_exact_rgo_reports_no_tv_and_counts():
    handle = zero_rgo(2)
    draw = handle.draw(0.5, np.ones(2), RngStream(3), tv_tol=0.1)
    assert draw.tv_spent == 0.0
    assert draw.x.shape == (2,)
    assert handle.counter["rgo"] == 1
    assert handle.exactness == "exact"


def test_tilted_rgo_prox():
    g = l1_rgo(1.0, 1)
    tilted = g.tilted(np.array([-1.0]))
    # prox of |x| - x at v = 0.5 with lam = 1: soft_threshold(1.5, 1) = 0.5
    assert tilted.prox(1.0, np.array([0.5]))[0] == pytest.approx(0.5)


def test_finite_sum_counts_summand_queries():
    fs = FiniteSumOracle.from_functions(
        [lambda x, c=c: 0.5 * float((x - c) @ (x - c)) for c in (0.0, 1.0, 2.0)],
        [lambda x, c=c: x - c for c in (0.0, 1.0, 2.0)], L=1.0, mu_total=1.0, dim=1)
    assert fs.n == 3
    value = fs.full_value(np.array([1.0]))
    assert value == pytest.approx((0.5 + 0.0 + 0.5) / 3)
    assert fs.counter["summand_value"] == 3
    assert fs.counter["full_value"] == 1
    assert fs.full_gradient(np.array([1.0]))[0] == pytest.approx(0.0)


def test_finite_sum_regularized_meta():
    fs = FiniteSumOracle.from_functions([lambda x: 0.5 * float(x @ x)] * 2, [lambda x: x] * 2,
                                        L=1.0, mu_total=1.0, dim=2)
    sub = fs.regularized(np.ones(2), 0.25)
    assert sub.meta.mu == pytest.approx(5.0)
    assert sub.meta.L == pytest.approx(5.0)
    assert sub.summand_value(0, np.ones(2)) == pytest.approx(1.0)


def test_finite_sum_dimension_mismatch():
    a = FunctionOracle(lambda x: 0.0, ProblemMeta(1.0, 1.0, 1))
    b = FunctionOracle(lambda x: 0.0, ProblemMeta(1.0, 1.0, 2))
    with pytest.raises(DomainError):
        FiniteSumOracle([a, b], 1.0)
