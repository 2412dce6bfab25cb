import math

import numpy as np
import pytest

from gaussian_utils import RngStream
from model_problems import ModelSpec, build_model, l1_rgo, zero_rgo
from oracle_utils import AnomalyError, ConfigurationError, DomainError, RgoDraw, RgoHandle
from reduction_utils import (
    ChainState,
    ReductionConfig,
    alternate_sample,
    coupled_step,
    iteration_count,
    warm_start_composite,
    warm_start_gaussian,
    warmness_bound,
)
from wellcond_sampler import XSampleConfig, make_xsample_rgo


def test_iteration_count_reference_value():
    assert iteration_count(1.0, 1.0, math.exp(math.e), 1.0 / math.e, constant_override=4.0) == 8


def test_iteration_count_inverse_in_eta():
    t1 = iteration_count(0.01, 1.0, 1024.0, 0.01)
    t2 = iteration_count(0.02, 1.0, 1024.0, 0.01)
    assert abs(t1 - 2 * t2) <= 2


def test_iteration_count_floors_log_beta():
    # beta = 1 would give log(0); the floor keeps log(log beta / eps) positive
    assert iteration_count(1.0, 1.0, 1.0, 0.1, constant_override=1.0) == math.ceil(math.log(math.e / 0.1))


def test_iteration_count_validation():
    with pytest.raises(DomainError):
        iteration_count(1.0, 1.0, 2.0, 1.5)
    with pytest.raises(DomainError):
        iteration_count(0.0, 1.0, 2.0, 0.1)


def test_reduction_config_validation():
    with pytest.raises(ConfigurationError) as e:
        ReductionConfig(eta=-1.0, T=3, beta=0.5, eps=2.0)
    assert len(e.value.problems) == 3
    cfg = ReductionConfig(eta=0.5, T=10, beta=2.0, eps=0.1)
    assert cfg.per_call_tolerance == pytest.approx(0.005)


def test_warmness_bound():
    assert warmness_bound(4.0, 6) == pytest.approx(64.0)
    assert warmness_bound(1e300, 10) == math.inf


def test_zero_iterations_returns_start():
    cfg = ReductionConfig(eta=1.0, T=0, beta=1.0, eps=0.1)
    x0 = np.array([0.25, -1.0])
    np.testing.assert_array_equal(alternate_sample(zero_rgo(2), 1.0, cfg, x0, RngStream(0)), x0)


def test_step_above_cap_is_rejected():
    capped = RgoHandle(lambda lam, v, rng, tol: v, 1, eta_cap=0.1)
    cfg = ReductionConfig(eta=1.0, T=3, beta=1.0, eps=0.1)
    with pytest.raises(ConfigurationError):
        alternate_sample(capped, 1.0, cfg, np.zeros(1), RngStream(0))


def test_gaussian_target_is_stationary():
    bundle = build_model(ModelSpec("gaussian", 1, {"eigenvalues": 1.0}))
    cfg = ReductionConfig(eta=1.0, T=3, beta=1.0, eps=0.1)
    rng = RngStream(1)
    out = np.array([alternate_sample(bundle.target_rgo, 1.0, cfg, rng.spawn(i).normal(1), rng.spawn(i))[0]
                    for i in range(4000)])
    assert abs(out.mean()) < 0.07
    assert out.var() == pytest.approx(1.0, abs=0.08)


def test_l1_target_matches_quadrature_variance():
    bundle = build_model(ModelSpec("lasso_gaussian", 1, {"mean": 0.0, "l1_weight": 1.0}))
    state = ChainState()
    cfg = ReductionConfig(eta=1.0, T=20, beta=1.0, eps=0.1)
    rng = RngStream(2)
    out = np.array([alternate_sample(bundle.target_rgo, 1.0, cfg, np.zeros(1), rng.spawn(i), state)[0]
                    for i in range(3000)])
    variance = bundle.truth.marginals[0].variance
    assert abs(out.mean()) < 4.0 * math.sqrt(variance / out.size)
    assert out.var() == pytest.approx(variance, rel=0.1)
    assert state.iterations == 20 * 3000
    assert state.tv_budget_spent == 0.0


def test_warm_start_gaussian_records_warmness():
    state = ChainState()
    x0 = warm_start_gaussian(np.zeros(6), 4.0, RngStream(0), mu=1.0, state=state)
    assert x0.shape == (6,)
    assert state.warmness == pytest.approx(64.0)


def test_warm_start_composite_with_zero_g_is_gaussian():
    rng = RngStream(3)
    draws = np.array([warm_start_composite(np.array([2.0]), 4.0, zero_rgo(1), rng)[0] for _ in range(4000)])
    assert draws.mean() == pytest.approx(2.0, abs=0.03)
    assert draws.var() == pytest.approx(0.25, rel=0.1)


def test_warm_start_composite_cap():
    capped = RgoHandle(lambda lam, v, rng, tol: v, 1, eta_cap=0.1)
    with pytest.raises(ConfigurationError):
        warm_start_composite(np.zeros(1), 1.0, capped, RngStream(0))


def test_coupled_step_from_same_point_coalesces():
    x1, x2, coalesced = coupled_step(l1_rgo(1.0, 1), 0.5, np.zeros(1), np.zeros(1), RngStream(4))
    assert coalesced
    np.testing.assert_array_equal(x1, x2)


def test_fallback_spend_stays_within_half_eps():
    bundle = build_model(ModelSpec("gaussian", 1, {"eigenvalues": 1.0}))
    f = bundle.oracle
    # a zero gate sends every call to the Metropolized fallback
    rgo = make_xsample_rgo(f, XSampleConfig(eta=0.1, grad_gate=1e-12, fallback_tv=0.5))
    cfg = ReductionConfig(eta=0.1, T=5, beta=1.0, eps=0.1)
    state = ChainState()
    alternate_sample(rgo, 1.0, cfg, np.zeros(1), RngStream(3), state)
    assert f.counter["fallback"] == 5
    assert 0.0 < state.tv_budget_spent <= 0.5 * cfg.eps * (1.0 + 1e-9)


def test_spend_above_half_eps_is_an_anomaly():
    greedy = RgoHandle(lambda lam, v, rng, tol: RgoDraw(v, 2.0 * tol), 1, exact=False, name="greedy")
    cfg = ReductionConfig(eta=1.0, T=3, beta=1.0, eps=0.1)
    state = ChainState()
    with pytest.raises(AnomalyError) as info:
        alternate_sample(greedy, 1.0, cfg, np.zeros(1), RngStream(0), state)
    assert info.value.diagnostics["spent"] == pytest.approx(0.1)
    assert state.iterations == 0
