import math

import numpy as np
import pytest
from scipy.stats import kstest

from gaussian_utils import RngStream
from model_problems import POTENTIALS_1D, ModelSpec, build_model, quadrature_moments_1d
from oracle_utils import AnomalyError, ConfigurationError, FunctionOracle, ProblemMeta, regularized_oracle
from reduction_utils import ChainState
from wellcond_sampler import (
    XSampleConfig,
    floored_log,
    gate_failure_rate,
    linearized_rejection,
    make_xsample_rgo,
    metropolized_fallback,
    sample_wellconditioned,
    sample_wellconditioned_zeroth,
    xsample,
    xsample_draw,
)


def logistic_model():
    return build_model(ModelSpec("custom_1d", 1, {"potential": "logistic_quadratic"}))


def test_floored_log():
    assert floored_log(1.0) == 1.0
    assert floored_log(math.e ** 3) == pytest.approx(3.0)


def test_config_from_meta():
    cfg = XSampleConfig.from_meta(ProblemMeta(1.0, 0.25, 2), 0.01)
    log_kappa = math.log(4.0)
    assert cfg.eta == pytest.approx(1.0 / (8.0 * 2.0 * log_kappa))
    assert cfg.grad_gate == pytest.approx(3.0 * 2.0 * log_kappa)
    assert 0 < cfg.fallback_tv < 0.01


def test_config_floors_log_kappa_at_one():
    cfg = XSampleConfig.from_meta(ProblemMeta(2.0, 2.0, 3), 0.1)
    assert cfg.eta == pytest.approx(1.0 / (8.0 * 2.0 * 3.0))


def test_config_validation():
    with pytest.raises(ConfigurationError):
        XSampleConfig(eta=0.0, grad_gate=1.0, fallback_tv=0.1)
    with pytest.raises(ConfigurationError):
        XSampleConfig(eta=0.1, grad_gate=1.0, fallback_tv=1.5)


def test_xsample_matches_quadrature():
    bundle = logistic_model()
    f = bundle.oracle
    cfg = XSampleConfig.from_meta(f.meta, 0.01)
    y = 0.3
    rng = RngStream(1)
    draws = [xsample(f, [y], cfg, rng)[0] for _ in range(5000)]
    value_1d = POTENTIALS_1D["logistic_quadratic"][0]
    half = 12.0 * math.sqrt(cfg.eta)
    q = quadrature_moments_1d(lambda x: -value_1d(x) - 0.5 * (x - y) ** 2 / cfg.eta, y - half, y + half)
    assert kstest(draws, q.cdf).pvalue > 0.001
    assert f.counter["xsample_calls"] == 5000
    assert f.counter["xsample_rounds"] / 5000 <= 2.0


def test_step_above_config_is_rejected():
    f = logistic_model().oracle
    cfg = XSampleConfig.from_meta(f.meta, 0.01)
    with pytest.raises(ConfigurationError):
        xsample_draw(f, [0.0], cfg, RngStream(0), eta=2.0 * cfg.eta)


def test_gate_failure_uses_fallback():
    f = logistic_model().oracle
    cfg = XSampleConfig.from_meta(f.meta, 0.1)
    draw = xsample_draw(f, [1000.0], cfg, RngStream(2))
    assert f.counter["fallback"] == 1
    assert draw.tv_spent == pytest.approx(cfg.fallback_tv)
    # the regularized target concentrates near y / (1 + eta) within a few sqrt(eta)
    assert abs(draw.x[0] - 1000.0 / (1.0 + cfg.eta)) < 10.0 * math.sqrt(cfg.eta)
    assert gate_failure_rate(f, np.array([[0.0], [1000.0]]), cfg) == pytest.approx(0.5)


def test_nonconvex_potential_is_an_anomaly():
    # concave f: the linearization lies above f, so the ratio exceeds 1
    f = FunctionOracle(lambda x: -0.5 * float(x @ x), ProblemMeta(1.0, 1.0, 1),
                       gradient_fn=lambda x: -x)
    with pytest.raises(AnomalyError):
        linearized_rejection(f, np.zeros(1), np.zeros(1), 0.5, RngStream(0), 100, "xsample")


def test_fallback_step_count_and_distribution():
    f = logistic_model().oracle
    target = regularized_oracle(f, np.array([0.3]), 0.5)
    rng = RngStream(3)
    draws = [metropolized_fallback(target, 1e-3, rng)[0] for _ in range(1500)]
    steps_per_call = math.ceil(10.0 * 1 * math.log(1.0 / 1e-3))
    assert f.counter["fallback_steps"] == 1500 * steps_per_call
    value_1d = POTENTIALS_1D["logistic_quadratic"][0]
    q = quadrature_moments_1d(lambda x: -value_1d(x) - (x - 0.3) ** 2, -6.0, 6.0)
    assert kstest(draws, q.cdf).pvalue > 0.001


def test_xsample_rgo_is_capped_and_approximate():
    f = logistic_model().oracle
    cfg = XSampleConfig.from_meta(f.meta, 0.01)
    rgo = make_xsample_rgo(f, cfg)
    assert rgo.eta_cap == cfg.eta
    assert rgo.exactness == "approximate"
    with pytest.raises(ConfigurationError):
        rgo.draw(2.0 * cfg.eta, np.zeros(1), RngStream(0))


def test_sample_wellconditioned_gaussian_moments():
    bundle = build_model(ModelSpec("gaussian", 2, {"eigenvalues": [1.0, 2.0]}))
    rng = RngStream(4)
    states = [ChainState() for _ in range(600)]
    out = np.array([sample_wellconditioned(bundle.oracle, bundle.truth.x_star, 0.1, rng.spawn(i), state=s,
                                           constant_override=1.0)
                    for i, s in enumerate(states)])
    np.testing.assert_allclose(out.mean(axis=0), [0.0, 0.0], atol=0.15)
    np.testing.assert_allclose(out.var(axis=0), [1.0, 0.5], rtol=0.2)
    assert states[0].warmness == pytest.approx(math.sqrt(2.0) ** 2)
    assert states[0].iterations > 0


def test_zeroth_order_sampler_never_queries_gradients():
    bundle = build_model(ModelSpec("gaussian", 1, {"eigenvalues": 1.0}))
    f = bundle.oracle
    rng = RngStream(5)
    out = np.array([sample_wellconditioned_zeroth(f, None, 0.1, rng.spawn(i), constant_override=1.0)[0]
                    for i in range(300)])
    assert f.counter["gradient"] == 0
    assert f.counter["value"] > 0
    assert abs(out.mean()) < 0.25
    assert out.var() == pytest.approx(1.0, rel=0.25)
