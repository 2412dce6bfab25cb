"""
Seeded random streams, Gaussian / truncated Gaussian draws and Gaussian integral helpers.
"""

import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.special import log_ndtr, ndtri_exp

from oracle_utils import DomainError, UnderflowError, as_point

logger = logging.getLogger(__name__)

TAIL_SD = 8.0
MIN_INTERVAL_MASS = 1e-300


class RngStream:
    """
    Counter-based random stream identified by (seed, stream_id).

    Equal identifiers replay identical draws; distinct stream ids (and spawned
    children) are independent. Single owner, not thread-safe.
    """

    def __init__(self, seed: int, stream_id: int = 0, _key: Tuple[int, ...] = None):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._key = _key if _key is not None else (self.stream_id,)
        seed_seq = np.random.SeedSequence(self.seed, spawn_key=self._key)
        self.generator = np.random.Generator(np.random.Philox(seed_seq))

    def spawn(self, child_id: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, _key=self._key + (int(child_id),))

    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def uniform(self) -> float:
        return float(self.generator.random())

    def uniform_open(self) -> float:
        """Uniform on (0, 1]."""
        return 1.0 - float(self.generator.random())

    def random(self, size=None):
        return self.generator.random(size)

    def integers(self, high: int, size=None):
        return self.generator.integers(0, high, size=size)

    def exponential(self, scale: float = 1.0) -> float:
        return float(self.generator.exponential(scale))

    @property
    def state(self):
        return self.generator.bit_generator.state

    def __repr__(self):
        return f"RngStream(seed={self.seed}, key={self._key})"


def sample_gaussian(rng: RngStream, mean, variance: float) -> np.ndarray:
    """mean + sqrt(variance) * z with z standard normal per coordinate."""
    if not variance > 0:
        raise DomainError(f"❌ Gaussian variance must be positive, got {variance}")
    mean = as_point(mean)
    return mean + math.sqrt(variance) * rng.normal(mean.shape)


def log_gaussian_normalizer(lam: float, d: int) -> float:
    """log of the integral of exp(-||x||^2 / (2 lam)) over R^d."""
    if not lam > 0:
        raise DomainError(f"❌ lambda must be positive, got {lam}")
    return 0.5 * d * math.log(2.0 * math.pi * lam)


def subgaussian_radius(d: int, mu: float, delta: float) -> float:
    """Radius that a draw from a mu-strongly logconcave density exceeds (around its mode) w.p. at most delta."""
    if not (mu > 0 and 0 < delta < 1):
        raise DomainError(f"❌ need mu > 0 and delta in (0, 1), got mu={mu}, delta={delta}")
    t = math.log(1.0 / delta) / d
    return math.sqrt(d / mu) * (2.0 + 2.0 * max(t ** 0.25, math.sqrt(t)))


@dataclass(frozen=True)
class TruncatedGaussian1D:
    mean: float
    variance: float
    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        if not self.variance > 0:
            raise DomainError(f"❌ truncated Gaussian variance must be positive, got {self.variance}")
        if not self.lower < self.upper:
            raise DomainError(f"❌ need lower < upper, got [{self.lower}, {self.upper}]")

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)

    def standardized(self) -> Tuple[float, float]:
        return (self.lower - self.mean) / self.sd, (self.upper - self.mean) / self.sd


def _log_diff_exp(log_hi: float, log_lo: float) -> float:
    """log(exp(log_hi) - exp(log_lo)) for log_hi >= log_lo."""
    if log_lo == -math.inf:
        return log_hi
    return log_hi + math.log1p(-math.exp(log_lo - log_hi))


def log_interval_mass(a: float, b: float) -> float:
    """log P(a <= Z <= b) for standard normal Z, accurate in both tails."""
    if a > 0:
        a, b = -b, -a
    return _log_diff_exp(float(log_ndtr(b)), float(log_ndtr(a)))


def _inverse_cdf(rng: RngStream, a: float, b: float) -> float:
    # a <= 0 here, so Phi(a) is resolved in log space without cancellation
    log_pa = float(log_ndtr(a))
    log_mass = _log_diff_exp(float(log_ndtr(b)), log_pa)
    log_u = math.log(rng.uniform_open())
    log_p = float(np.logaddexp(log_pa, log_u + log_mass))
    z = float(ndtri_exp(min(log_p, 0.0)))
    return min(max(z, a), b)


def _tail_rejection(rng: RngStream, a: float, b: float) -> float:
    """Standard normal restricted to [a, b] with a > TAIL_SD, by rejection."""
    if b - a < 1.0 / a:
        # narrow slab: uniform proposal, density ratio exp((a^2 - z^2) / 2)
        while True:
            z = a + (b - a) * rng.uniform()
            if math.log(rng.uniform_open()) <= 0.5 * (a * a - z * z):
                return z
    rate = 0.5 * (a + math.sqrt(a * a + 4.0))
    while True:
        z = a + rng.exponential(1.0 / rate)
        if z > b:
            continue
        if math.log(rng.uniform_open()) <= -0.5 * (z - rate) ** 2:
            return z


def sample_truncated_gaussian_1d(rng: RngStream, tg: TruncatedGaussian1D) -> float:
    a, b = tg.standardized()
    if a == -math.inf and b == math.inf:
        return tg.mean + tg.sd * float(rng.normal())
    log_mass = log_interval_mass(a, b)
    if log_mass < math.log(MIN_INTERVAL_MASS):
        raise UnderflowError(
            f"❌ truncated Gaussian interval mass exp({log_mass:.1f}) below {MIN_INTERVAL_MASS:g}: "
            f"mean={tg.mean}, variance={tg.variance}, bounds=[{tg.lower}, {tg.upper}]")
    if a > TAIL_SD:
        z = _tail_rejection(rng, a, b)
    elif b < -TAIL_SD:
        z = -_tail_rejection(rng, -b, -a)
    elif a > 0:
        z = -_inverse_cdf(rng, -b, -a)
    else:
        z = _inverse_cdf(rng, a, b)
    x = tg.mean + tg.sd * z
    return min(max(x, tg.lower), tg.upper)


def l1_branch_log_weights(v: float, lam: float, reg: float) -> Tuple[float, float]:
    """Log masses (up to a shared constant) of the x >= 0 and x < 0 branches."""
    sd = math.sqrt(lam)
    log_plus = -v * reg + float(log_ndtr((v - reg * lam) / sd))
    log_minus = v * reg + float(log_ndtr(-(v + reg * lam) / sd))
    return log_plus, log_minus


def sample_l1_quadratic_1d(rng: RngStream, v: float, lam: float, reg: float) -> float:
    """
    Exact draw from the density proportional to exp(-(x - v)^2 / (2 lam) - reg |x|).

    The density is a two-component mixture of truncated Gaussians: N(v - reg lam, lam)
    on [0, inf) and N(v + reg lam, lam) on (-inf, 0).
    """
    if not lam > 0:
        raise DomainError(f"❌ lambda must be positive, got {lam}")
    if reg < 0:
        raise DomainError(f"❌ l1 weight must be nonnegative, got {reg}")
    if reg == 0:
        return v + math.sqrt(lam) * float(rng.normal())
    log_plus, log_minus = l1_branch_log_weights(v, lam, reg)
    p_plus = math.exp(log_plus - float(np.logaddexp(log_plus, log_minus)))
    if rng.uniform() < p_plus:
        return sample_truncated_gaussian_1d(rng, TruncatedGaussian1D(v - reg * lam, lam, 0.0, math.inf))
    return sample_truncated_gaussian_1d(rng, TruncatedGaussian1D(v + reg * lam, lam, -math.inf, 0.0))


def maximal_coupling_gaussian(rng: RngStream, mean1, mean2, variance: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Draw (y1, y2) with y1 ~ N(mean1, variance I), y2 ~ N(mean2, variance I) and
    P(y1 == y2) equal to one minus their total variation distance.
    """
    mean1, mean2 = as_point(mean1), as_point(mean2)

    def log_density(y, m):
        diff = y - m
        return -0.5 * float(diff @ diff) / variance

    y1 = sample_gaussian(rng, mean1, variance)
    if math.log(rng.uniform_open()) + log_density(y1, mean1) <= log_density(y1, mean2):
        return y1, y1.copy()
    while True:
        y2 = sample_gaussian(rng, mean2, variance)
        if math.log(rng.uniform_open()) + log_density(y2, mean2) > log_density(y2, mean1):
            return y1, y2
