import math

import numpy as np
import pytest

from composite_sampler import (
    CompositeProblem,
    JointParams,
    approx_rejection_bounds,
    composite_sample,
    joint_start_warmness,
    make_composite_rgo,
    sample_joint_dist,
    theta_estimator,
    ysample,
    ysample_draw,
)
from gaussian_utils import RngStream
from model_problems import POTENTIALS_1D, ModelSpec, build_model, theta_reference_1d
from oracle_utils import (
    AnomalyError,
    ConfigurationError,
    FunctionOracle,
    ProblemMeta,
    RgoHandle,
    UnsupportedOperationError,
)
from reduction_utils import ChainState


def half_square():
    return FunctionOracle(lambda x: 0.5 * float(x @ x), ProblemMeta(1.0, 1.0, 1),
                          gradient_fn=lambda x: x.copy(), name="half_square")


def test_joint_params_formulas():
    params = JointParams.build(ProblemMeta(1.0, 1.0, 1), 0.05, k_constant=0.05)
    log_term = math.log(16.0 * 18.0 / 0.05)
    assert params.delta == pytest.approx(0.05 / 18.0)
    assert params.eta == pytest.approx(1.0 / (32.0 * log_term))
    assert params.ridge == pytest.approx(params.eta)
    assert params.omega_radius == pytest.approx(4.0 * math.sqrt(log_term))
    # eta L^2 omega^2 sits exactly on its 1/2 ceiling when delta = eps/18 and kappa = 1
    assert params.eta * params.omega_radius ** 2 == pytest.approx(0.5)
    expected_K = math.ceil(0.05 / params.eta * math.log(math.log(16.0) / (4.0 * params.delta)))
    assert params.K == expected_K


def test_joint_params_check_rejects_large_step():
    params = JointParams.build(ProblemMeta(1.0, 1.0, 1), 0.05)
    bad = JointParams(**{**params.__dict__, "eta": 2.0})
    with pytest.raises(ConfigurationError) as e:
        bad.check(ProblemMeta(1.0, 1.0, 1))
    assert len(e.value.problems) >= 2


def test_joint_params_eps_range():
    with pytest.raises(ConfigurationError):
        JointParams.build(ProblemMeta(1.0, 1.0, 1), 1.5)


def test_joint_start_warmness():
    assert joint_start_warmness(1.0, 1) == pytest.approx(2.0 * math.sqrt(2.0))


def test_approx_rejection_bounds():
    rounds, tv = approx_rejection_bounds(4.0, 0.1, 0.01)
    assert rounds == pytest.approx(1.0 / (0.9 / 4.0 - 0.02))
    assert tv == pytest.approx(0.1 + 0.08 / 0.9)
    with pytest.raises(ConfigurationError):
        approx_rejection_bounds(4.0, 0.1, 0.2)


def test_composite_problem_validation():
    bundle = build_model(ModelSpec("lasso_gaussian", 2, {}))
    wrong_g = build_model(ModelSpec("lasso_gaussian", 3, {})).rgo
    with pytest.raises(ConfigurationError) as e:
        CompositeProblem(bundle.oracle, wrong_g, np.zeros(2), 2.0)
    assert len(e.value.problems) == 2


def test_ysample_matches_gaussian_posterior():
    # exp(-y^2/2 - (y - x)^2/(2 eta)) is N(x/(1+eta), eta/(1+eta))
    f = half_square()
    eta, x = 0.2, 0.8
    rng = RngStream(1)
    draws = np.array([ysample(f, [x], eta, 1e-3, rng)[0] for _ in range(4000)])
    assert draws.mean() == pytest.approx(x / (1.0 + eta), abs=0.02)
    assert draws.var() == pytest.approx(eta / (1.0 + eta), rel=0.08)


def test_ysample_outside_radius_falls_back():
    f = half_square()
    draw = ysample_draw(f, [50.0], 0.2, 1e-3, RngStream(2), [0.0], radius=1.0)
    assert f.counter["ysample_fallback"] == 1
    assert draw.tv_spent == pytest.approx(1e-3)
    assert abs(draw.x[0] - 50.0 / 1.2) < 5.0


def test_theta_closed_form_for_quadratic():
    # y-dependence cancels: theta = sqrt(1 + eta) exp(-eta x^2 / (2 (1 + eta)) + eta x^2 / 2)
    f = half_square()
    eta, x = 0.1, 0.5
    theta = theta_estimator(f, None, [x], eta, RngStream(3))
    expected = math.sqrt(1.0 + eta) * math.exp(-eta * x * x / (2.0 * (1.0 + eta)) + 0.5 * eta * x * x)
    assert theta == pytest.approx(expected, rel=1e-10)
    assert theta == pytest.approx(theta_reference_1d(lambda t: 0.5 * t ** 2, 1.0, eta, x), rel=1e-6)


def test_theta_is_unbiased():
    f = build_model(ModelSpec("custom_1d", 1, {"potential": "logistic_quadratic"})).oracle
    value_1d = POTENTIALS_1D["logistic_quadratic"][0]
    eta, x = 0.1, 0.5
    rng = RngStream(3)
    thetas = np.array([theta_estimator(f, None, [x], eta, rng) for _ in range(20000)])
    reference = theta_reference_1d(value_1d, f.meta.L, eta, x)
    se = thetas.std() / math.sqrt(thetas.size)
    assert abs(thetas.mean() - reference) <= 4.0 * se + 1e-9
    assert thetas.max() <= 4.0


def test_theta_overflow_is_an_anomaly():
    f = half_square()
    with pytest.raises(AnomalyError):
        theta_estimator(f, None, [1000.0], 0.5, RngStream(0), y=[1000.0])


def test_joint_chain_counts_iterations():
    bundle = build_model(ModelSpec("lasso_gaussian", 1, {"mean": 0.0}))
    params = JointParams.build(bundle.oracle.meta, 0.1, k_constant=0.01)
    state = ChainState()
    x = sample_joint_dist(bundle.oracle, bundle.rgo, np.zeros(1), params.delta, params, RngStream(4), state=state)
    assert x.shape == (1,)
    assert state.iterations == params.K
    assert bundle.oracle.counter["joint_iterations"] == params.K
    assert bundle.oracle.counter["rgo"] == params.K + 1


def test_composite_sample_lasso_moments():
    bundle = build_model(ModelSpec("lasso_gaussian", 1, {"mean": 1.0, "l1_weight": 1.0}))
    prob = CompositeProblem(bundle.oracle, bundle.rgo, bundle.truth.x_star, 0.05)
    rng = RngStream(5)
    out = np.array([composite_sample(prob, rng.spawn(i), k_constant=0.05)[0] for i in range(400)])
    marginal = bundle.truth.marginals[0]
    se = math.sqrt(marginal.variance / out.size)
    assert abs(out.mean() - marginal.mean) <= 4.0 * se
    assert out.var() == pytest.approx(marginal.variance, rel=0.3)


def test_composite_rgo_needs_prox():
    no_prox = RgoHandle(lambda lam, v, rng, tol: v, 1)
    with pytest.raises(UnsupportedOperationError):
        make_composite_rgo(half_square(), no_prox)


def test_accelerated_composite_counts_outer_calls():
    from validate_utils import accelerated_iterations

    iterations, tally, inner = accelerated_iterations(2.0, seed=5, path="composite_accel")
    assert iterations >= 1
    assert tally > 0
    assert inner >= 1
