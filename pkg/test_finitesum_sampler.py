import math

import numpy as np
import pytest
from scipy.stats import kstest, norm

import finitesum_sampler
from finitesum_sampler import (
    FilterDecision,
    MrwParams,
    _dp_is_exact,
    accelerated_eta,
    accelerated_finitesum_sample,
    coupled_mrw_run,
    filter_acceptance_probability,
    finitesum_mrw,
    gamma_estimator,
    inefficient_mrw_step,
    make_finitesum_rgo,
    mrw_filter_probability,
    sample_finitesum,
    step_size_bound,
    subsample_indices,
    subset_size_bound,
    subset_size_tail,
    theorem_params,
)
from gaussian_utils import RngStream
from model_problems import ModelSpec, build_model
from oracle_utils import AnomalyError, ConfigurationError, DomainError, FunctionOracle, ProblemMeta
from reduction_utils import ChainState


def quadratic_sum(n=5, d=1, **params):
    return build_model(ModelSpec("quadratic_finitesum", d, {"n": n, **params}))


@pytest.mark.parametrize("gap, expected", [
    (2.0, 1.0),
    (0.0, 0.75),
    (-0.2, 0.75 * math.exp(-0.1)),
    (-2.0, math.exp(-2.0)),
])
def test_filter_three_cases(gap, expected):
    # gap = F(x) - F(y)
    assert mrw_filter_probability(gap, 0.0) == pytest.approx(expected)


def test_gamma_with_every_summand_is_exact():
    bundle = quadratic_sum()
    fs = bundle.oracle
    x, y = np.array([0.3]), np.array([-0.4])
    gamma = gamma_estimator(fs, x, y, np.arange(fs.n), 1.0)
    full = fs.as_function_oracle()
    assert gamma == pytest.approx(math.exp(0.5 * (full.value(x) - full.value(y))))


def test_gamma_is_unbiased():
    fs = quadratic_sum().oracle
    x, y = np.array([0.5]), np.array([-0.5])
    full = fs.as_function_oracle()
    target = math.exp(0.5 * (full.value(x) - full.value(y)))
    rng = RngStream(1)
    draws = np.array([gamma_estimator(fs, x, y, subsample_indices(fs.n, 0.4, rng), 0.4) for _ in range(20000)])
    se = draws.std() / math.sqrt(draws.size)
    assert abs(draws.mean() - target) <= 4.0 * se


def test_acceptance_without_cap_is_scaled_root_ratio():
    fs = quadratic_sum().oracle
    x, y = np.array([0.2]), np.array([0.1])
    full = fs.as_function_oracle()
    expected = min(1.0, 0.75 * math.exp(0.5 * (full.value(x) - full.value(y))))
    assert filter_acceptance_probability(fs, x, y, 0.4, fs.n) == pytest.approx(expected)
    # with cap 0 only the empty subset counts
    assert filter_acceptance_probability(fs, x, y, 0.4, 0) == pytest.approx(0.75 * 0.6 ** fs.n)


def test_subset_tail_below_chernoff_bound():
    for n, p in ((100, 0.1), (50, 0.3), (1000, 0.02)):
        assert subset_size_tail(n, p) <= subset_size_bound(n, p)


def test_capped_subset_cannot_be_accepted():
    with pytest.raises(AnomalyError):
        FilterDecision(gamma=1.0, subset=np.arange(3), accepted=True, capped=True)


def test_theorem_params():
    meta = ProblemMeta(2.0, 1.0, 2)
    params = theorem_params(meta, 100, 0.1)
    assert params.delta == pytest.approx(0.05)
    assert params.cap == math.floor(2.0 * params.p * 100)
    assert params.h <= step_size_bound(2.0, 2, params.c_x, params.c_xi, params.r_x)
    assert params.p == pytest.approx(min(1.0, 5.0 * math.log(12.0 * params.K / 0.05) / 100))
    with pytest.raises(DomainError):
        theorem_params(meta, 100, 1.5)


def test_mrw_params_validation():
    with pytest.raises(ConfigurationError) as e:
        MrwParams(h=-1.0, p=1.5, K=0, cap=-1, delta=0.1)
    assert len(e.value.problems) == 4
    with pytest.raises(ConfigurationError):
        MrwParams(h=1.0, p=0.5, K=10, cap=5, delta=0.1, c_x=1.0, c_xi=1.0, r_x=1.0, L=1.0, dim=1)


def test_finitesum_mrw_counts_and_query_bound():
    fs = quadratic_sum(n=40).oracle
    params = MrwParams.with_cap(h=0.01, p=0.2, K=200, n=40)
    decisions = []
    finitesum_mrw(fs, params, np.zeros(1), RngStream(2), decisions=decisions)
    assert len(decisions) == 200
    assert fs.counter["mrw_iterations"] == 200
    assert fs.counter["summand_value"] <= 2 * params.cap * params.K
    assert fs.counter["full_value"] == 0
    assert fs.counter["mrw_capped"] == sum(d.capped for d in decisions)
    assert not any(d.capped and d.accepted for d in decisions)


def test_exact_filter_walk_keeps_gaussian_stationary():
    f = FunctionOracle(lambda x: 0.5 * float(x @ x), ProblemMeta(1.0, 1.0, 1), gradient_fn=lambda x: x)
    rng = RngStream(3)
    out = []
    for _ in range(3000):
        x = rng.normal(1)
        for _ in range(5):
            x = inefficient_mrw_step(f, x, 1.0, rng)
        out.append(x[0])
    assert kstest(out, norm.cdf).pvalue > 0.001


def test_coupling_with_every_summand_never_diverges():
    fs = quadratic_sum().oracle
    params = MrwParams.with_cap(h=1e-4, p=1.0, K=50, n=fs.n)
    run = coupled_mrw_run(fs, params, np.zeros(1), RngStream(4))
    assert not run.diverged
    assert max(run.disagreement_probability) < 1e-12
    assert run.inexact_steps == 0


def test_acceptance_polynomial_regime():
    assert _dp_is_exact(np.array([1.1, 0.9]))
    # 0.75 * 1.5 * 1.2 > 1: the clamp would act per subset
    assert not _dp_is_exact(np.array([1.5, 1.2]))
    # a nonpositive factor is a guard rejection in filter_step
    assert not _dp_is_exact(np.array([-0.1, 1.0]))


def test_sample_finitesum_records_iterations():
    bundle = quadratic_sum(n=10)
    fs = bundle.oracle
    state = ChainState()
    x = sample_finitesum(fs, bundle.truth.x_star, 0.1, RngStream(5), state=state, iter_constant=0.01)
    expected = theorem_params(fs.meta, fs.n, 0.1, iter_constant=0.01)
    assert x.shape == (1,)
    assert state.iterations == expected.K
    assert fs.counter["mrw_iterations"] == expected.K


def test_accelerated_eta_never_below_one_over_L():
    meta = ProblemMeta(4.0, 1.0, 2)
    assert accelerated_eta(meta, 1, 0.1) >= 0.25
    assert accelerated_eta(meta, 10 ** 6, 0.1) > 0.25


def test_accelerated_finitesum_counts_outer_calls():
    from validate_utils import accelerated_iterations

    iterations, tally, inner = accelerated_iterations(2.0, seed=5, path="finitesum_accel")
    assert iterations >= 1
    assert tally > 0
    assert inner >= 1


def test_rgo_calls_on_one_stream_draw_fresh_subsets(monkeypatch):
    seen = []
    original = finitesum_sampler.subsample_indices

    def recording(n, p, rng):
        subset = original(n, p, rng)
        seen.append(tuple(subset.tolist()))
        return subset

    monkeypatch.setattr(finitesum_sampler, "subsample_indices", recording)
    bundle = quadratic_sum(n=400, d=2)
    rgo = make_finitesum_rgo(bundle.oracle, eta_cap=1.0, iter_constant=0.01)
    rng = RngStream(7)
    rgo.draw(0.5, np.zeros(2), rng, 0.05)
    first = list(seen)
    seen.clear()
    rgo.draw(0.5, np.zeros(2), rng, 0.05)
    assert len(first) == len(seen) > 0
    assert sum(a == b for a, b in zip(first, seen)) == 0


def test_accelerated_finitesum_matches_gaussian_truth():
    bundle = quadratic_sum(n=5, d=2)
    truth = bundle.truth
    draws = np.array([
        accelerated_finitesum_sample(bundle.oracle, 0.1, RngStream(31, i), x_star=truth.x_star,
                                     constant_override=1.0, iter_constant=0.05)
        for i in range(300)
    ])
    assert draws.shape == (300, 2)
    se = np.sqrt(np.diag(truth.cov) / len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - truth.mean) < 4.0 * se)
    np.testing.assert_allclose(draws.var(axis=0, ddof=1), np.diag(truth.cov), atol=0.3)
