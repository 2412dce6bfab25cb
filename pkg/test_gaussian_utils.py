import math

import numpy as np
import pytest
from scipy.stats import kstest, norm, truncnorm

from gaussian_utils import (
    RngStream,
    TruncatedGaussian1D,
    log_gaussian_normalizer,
    log_interval_mass,
    maximal_coupling_gaussian,
    sample_gaussian,
    sample_l1_quadratic_1d,
    sample_truncated_gaussian_1d,
    subgaussian_radius,
)
from model_problems import quadrature_moments_1d
from oracle_utils import DomainError, UnderflowError


def test_streams_replay_and_differ():
    a = RngStream(42, 3).normal(5)
    b = RngStream(42, 3).normal(5)
    c = RngStream(42, 4).normal(5)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


def test_spawned_children_are_distinct():
    parent = RngStream(1)
    x = parent.spawn(0).normal(4)
    y = parent.spawn(1).normal(4)
    assert not np.allclose(x, y)
    np.testing.assert_array_equal(x, RngStream(1).spawn(0).normal(4))


def test_uniform_open_never_zero():
    rng = RngStream(5)
    assert all(0.0 < rng.uniform_open() <= 1.0 for _ in range(1000))


def test_sample_gaussian_rejects_bad_variance():
    with pytest.raises(DomainError):
        sample_gaussian(RngStream(0), [0.0], 0.0)


def test_log_gaussian_normalizer():
    assert log_gaussian_normalizer(1.0, 2) == pytest.approx(math.log(2 * math.pi))


def test_subgaussian_radius_grows_as_delta_shrinks():
    assert subgaussian_radius(3, 1.0, 1e-6) > subgaussian_radius(3, 1.0, 1e-2)


def test_log_interval_mass_tails():
    assert log_interval_mass(-math.inf, math.inf) == pytest.approx(0.0)
    assert log_interval_mass(10.0, 11.0) == pytest.approx(math.log(norm.sf(10.0) - norm.sf(11.0)), rel=1e-6)
    assert log_interval_mass(-11.0, -10.0) == pytest.approx(log_interval_mass(10.0, 11.0))


def test_truncated_draws_stay_in_bounds():
    rng = RngStream(7)
    tg = TruncatedGaussian1D(5.0, 1.0, -1.0, 1.0)
    draws = np.array([sample_truncated_gaussian_1d(rng, tg) for _ in range(2000)])
    assert draws.min() >= -1.0 and draws.max() <= 1.0
    a, b = tg.standardized()
    assert kstest(draws, truncnorm(a, b, loc=5.0, scale=1.0).cdf).pvalue > 0.001


def test_truncated_gaussian_far_tail():
    rng = RngStream(8)
    tg = TruncatedGaussian1D(0.0, 1.0, 9.0, 9.5)
    draws = np.array([sample_truncated_gaussian_1d(rng, tg) for _ in range(2000)])
    assert draws.min() >= 9.0 and draws.max() <= 9.5
    assert kstest(draws, truncnorm(9.0, 9.5).cdf).pvalue > 0.001


def test_truncated_gaussian_matches_scipy():
    rng = RngStream(9)
    tg = TruncatedGaussian1D(0.5, 0.7, -0.2, 1.5)
    draws = [sample_truncated_gaussian_1d(rng, tg) for _ in range(5000)]
    a, b = tg.standardized()
    assert kstest(draws, truncnorm(a, b, loc=tg.mean, scale=tg.sd).cdf).pvalue > 0.001


def test_truncated_gaussian_underflow():
    with pytest.raises(UnderflowError):
        sample_truncated_gaussian_1d(RngStream(0), TruncatedGaussian1D(0.0, 1.0, 50.0, 51.0))


def test_truncated_gaussian_validation():
    with pytest.raises(DomainError):
        TruncatedGaussian1D(0.0, 1.0, 1.0, 0.0)
    with pytest.raises(DomainError):
        TruncatedGaussian1D(0.0, -1.0)


def test_l1_quadratic_matches_quadrature():
    rng = RngStream(10)
    v, lam, reg = 1.0, 0.5, 2.0
    draws = [sample_l1_quadratic_1d(rng, v, lam, reg) for _ in range(5000)]
    q = quadrature_moments_1d(lambda x: -0.5 * (x - v) ** 2 / lam - reg * np.abs(x), -8.0, 8.0)
    assert kstest(draws, q.cdf).pvalue > 0.001


def test_l1_quadratic_without_weight_is_gaussian():
    rng = RngStream(11)
    draws = [sample_l1_quadratic_1d(rng, 0.3, 2.0, 0.0) for _ in range(3000)]
    assert kstest(draws, norm(0.3, math.sqrt(2.0)).cdf).pvalue > 0.001


def test_maximal_coupling():
    rng = RngStream(12)
    same = [maximal_coupling_gaussian(rng, [0.0], [0.0], 1.0) for _ in range(100)]
    assert all(np.array_equal(a, b) for a, b in same)
    far = [maximal_coupling_gaussian(rng, [0.0], [20.0], 1.0) for _ in range(100)]
    assert not any(np.array_equal(a, b) for a, b in far)
    # TV(N(0,1), N(1,1)) = 2 Phi(1/2) - 1
    pairs = [maximal_coupling_gaussian(rng, [0.0], [1.0], 1.0) for _ in range(4000)]
    meet = np.mean([np.array_equal(a, b) for a, b in pairs])
    assert meet == pytest.approx(2.0 * norm.cdf(-0.5), abs=0.03)
