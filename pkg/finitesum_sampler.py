"""
Zeroth-order sampler for exp(-F) with F = (1/n) sum_i f_i.

finitesum_mrw is a Metropolized random walk whose filter is built from a random
subset of summands: the product estimator gamma is unbiased for
sqrt(exp(F(x) - F(y))) and the walk accepts when tau <= (3/4) gamma. The exact
three-case filter (exact_mrw / inefficient_mrw_step) is the full-evaluation
reference it is coupled against.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np
from scipy.stats import binom

from gaussian_utils import RngStream, sample_gaussian
from my_config import MY_CONFIG
from optimize_utils import agd_minimize, finite_difference_oracle, svrg_minimize
from oracle_utils import (
    AnomalyError,
    ConfigurationError,
    DomainError,
    FiniteSumOracle,
    FunctionOracle,
    ProblemMeta,
    RgoDraw,
    RgoHandle,
    as_point,
    regularized_oracle,
)
from reduction_utils import (
    ChainState,
    ReductionConfig,
    alternate_sample,
    warm_start_gaussian,
    warmness_bound,
)

logger = logging.getLogger(__name__)

ACCEPT_SCALE = 0.75
GAMMA_BOUND = 4.0 / 3.0


def _log_floor(value: float) -> float:
    return max(math.log(value), 1.0) if value > 0 else 1.0


def step_size_bound(L: float, d: int, c_x: float, c_xi: float, r_x: float) -> float:
    """Largest step for which every gamma factor stays near 1: 1/(98 C_x^2 L^2 R_x^2 + 7 L C_xi^2 d)."""
    return 1.0 / (98.0 * c_x * c_x * L * L * r_x * r_x + 7.0 * L * c_xi * c_xi * d)


@dataclass
class MrwParams:
    h: float
    p: float
    K: int
    cap: int
    delta: float
    c_x: Optional[float] = None
    c_xi: Optional[float] = None
    r_x: Optional[float] = None
    radius: Optional[float] = None
    L: Optional[float] = None
    dim: Optional[int] = None

    def __post_init__(self):
        problems = []
        if not self.h > 0:
            problems.append(f"step h must be positive, got {self.h}")
        if not 0 < self.p <= 1:
            problems.append(f"inclusion probability must lie in (0, 1], got {self.p}")
        if int(self.K) != self.K or self.K < 1:
            problems.append(f"K must be a positive integer, got {self.K}")
        if self.cap < 0:
            problems.append(f"subset cap must be nonnegative, got {self.cap}")
        if None not in (self.c_x, self.c_xi, self.r_x, self.L, self.dim):
            hbound = step_size_bound(self.L, self.dim, self.c_x, self.c_xi, self.r_x)
            if self.h > hbound * (1.0 + 1e-12):
                problems.append(f"step h={self.h:.3e} exceeds the gamma-regime bound {hbound:.3e}")
        if problems:
            raise ConfigurationError("❌ invalid MRW parameters: " + "; ".join(problems), problems)
        self.K = int(self.K)

    @classmethod
    def with_cap(cls, h: float, p: float, K: int, n: int, delta: float = 0.0, **kwargs) -> "MrwParams":
        """Parameters with the subset cap floor(2pn)."""
        return cls(h=h, p=p, K=K, cap=int(math.floor(2.0 * p * n)), delta=delta, **kwargs)


@dataclass
class FilterDecision:
    gamma: float
    subset: np.ndarray
    accepted: bool
    capped: bool
    guarded: bool = False

    def __post_init__(self):
        if self.capped and self.accepted:
            raise AnomalyError("❌ a capped subset can never be accepted")


def theorem_params(meta: ProblemMeta, n: int, eps: float,
                   step_constant: Optional[float] = None,
                   iter_constant: Optional[float] = None,
                   radius_constant: Optional[float] = None) -> MrwParams:
    """
    Parameters that drive finitesum_mrw within eps TV of exp(-F).

    1/h = c_h L kappa d log^2(n kappa d / eps) (capped by the gamma-regime bound),
    K = c_K kappa^2 d log^3(n kappa d / eps), p = 5 log(12 K / delta) / n, delta = eps/2.
    """
    if not 0 < eps < 1:
        raise DomainError(f"❌ eps must lie in (0, 1), got {eps}")
    c_h = MY_CONFIG.MRW_STEP_CONSTANT if step_constant is None else step_constant
    c_K = MY_CONFIG.MRW_ITER_CONSTANT if iter_constant is None else iter_constant
    c_R = MY_CONFIG.MRW_RADIUS_CONSTANT if radius_constant is None else radius_constant
    L, mu, kappa, d = meta.L, meta.mu, meta.kappa, meta.dim

    delta = 0.5 * eps
    log_term = _log_floor(n * kappa * d / eps)
    K = max(1, int(math.ceil(c_K * kappa * kappa * d * log_term ** 3)))
    p = min(1.0, 5.0 * math.log(12.0 * K / delta) / n)
    c_xi = 1.0 + math.sqrt(math.log(K / delta) / d)
    c_x = math.sqrt(math.log(n * K / delta))
    r_x = math.sqrt(d * math.log(kappa * K / delta) / mu)
    h = min(1.0 / (c_h * L * kappa * d * log_term ** 2), step_size_bound(L, d, c_x, c_xi, r_x))
    radius = c_R * math.sqrt(d * _log_floor(kappa / eps) / mu)
    return MrwParams.with_cap(h=h, p=p, K=K, n=n, delta=delta, c_x=c_x, c_xi=c_xi, r_x=r_x,
                              radius=radius, L=L, dim=d)


def subsample_indices(n: int, p: float, rng: RngStream) -> np.ndarray:
    """Each of the n indices kept independently with probability p."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"❌ inclusion probability must lie in [0, 1], got {p}")
    return np.flatnonzero(rng.random(n) < p)


def subset_size_bound(n: int, p: float) -> float:
    """Chernoff bound exp(-3pn/14) on P(|S| > 2pn)."""
    return math.exp(-3.0 * p * n / 14.0)


def subset_size_tail(n: int, p: float) -> float:
    """Exact P(|S| > floor(2pn)) for |S| ~ Binomial(n, p)."""
    return float(binom.sf(math.floor(2.0 * p * n), n, p))


def _gamma_factors(values_x: np.ndarray, values_y: np.ndarray, n: int, p: float) -> np.ndarray:
    # 1 + (exp(t/2) - 1)/p with t = (f_i(x) - f_i(y))/n, expm1 keeps small t accurate
    t = (values_x - values_y) / n
    return 1.0 + np.expm1(0.5 * t) / p


def gamma_from_factors(factors: np.ndarray) -> float:
    """Product of the factors, summed in log space with explicit sign tracking."""
    if factors.size == 0:
        return 1.0
    if np.any(factors == 0):
        return 0.0
    sign = -1.0 if np.count_nonzero(factors < 0) % 2 else 1.0
    return sign * math.exp(float(np.sum(np.log(np.abs(factors)))))


def _subset_values(fs: FiniteSumOracle, x: np.ndarray, y: np.ndarray, subset: np.ndarray):
    values_x = np.array([fs.summand_value(int(i), x) for i in subset])
    values_y = np.array([fs.summand_value(int(i), y) for i in subset])
    return values_x, values_y


def gamma_estimator(fs: FiniteSumOracle, x, y, subset, p: float) -> float:
    """Unbiased estimate of sqrt(exp(F(x) - F(y))) from the summands in subset."""
    x, y = as_point(x), as_point(y)
    subset = np.asarray(subset, dtype=int)
    values_x, values_y = _subset_values(fs, x, y, subset)
    return gamma_from_factors(_gamma_factors(values_x, values_y, fs.n, p))


def filter_step(fs: FiniteSumOracle, x: np.ndarray, y: np.ndarray, tau: float, params: MrwParams,
                subset_rng: RngStream) -> FilterDecision:
    """Draw S, and accept y when |S| <= cap and tau <= (3/4) gamma."""
    subset = subsample_indices(fs.n, params.p, subset_rng)
    if subset.size > params.cap:
        return FilterDecision(gamma=math.nan, subset=subset, accepted=False, capped=True)
    values_x, values_y = _subset_values(fs, x, y, subset)
    factors = _gamma_factors(values_x, values_y, fs.n, params.p)
    if np.any(factors <= 0):
        return FilterDecision(gamma=gamma_from_factors(factors), subset=subset, accepted=False,
                              capped=False, guarded=True)
    gamma = gamma_from_factors(factors)
    return FilterDecision(gamma=gamma, subset=subset, accepted=tau <= ACCEPT_SCALE * gamma, capped=False)


def finitesum_mrw(fs: FiniteSumOracle, params: MrwParams, x0, rng: RngStream,
                  subset_rng: Optional[RngStream] = None,
                  decisions: Optional[List[FilterDecision]] = None) -> np.ndarray:
    """
    K iterations of the subsampled-filter random walk; returns the last iterate.

    Per iteration the chain stream supplies the proposal noise and then tau; the
    subsets come from subset_rng. By default that is a child of rng keyed by a draw
    from rng, so repeated calls on one chain stream see fresh subsets. Only summand values
    are queried, at most 2 |S| <= 4pn of them per iteration.

    Args:
        fs: finite-sum oracle
        params: step, inclusion probability, iteration count and cap
        x0: warm-start draw
        rng: chain stream
        subset_rng: stream for the summand subsets
        decisions: when given, every FilterDecision is appended to it
    """
    if subset_rng is None:
        subset_rng = rng.spawn(int(rng.integers(2 ** 31)))
    x = as_point(x0).copy()
    sd = math.sqrt(2.0 * params.h)
    accepted = capped = guard_events = above_bound = 0
    for k in range(params.K):
        y = x + sd * rng.normal(x.shape)
        tau = rng.uniform()
        decision = filter_step(fs, x, y, tau, params, subset_rng)
        if decisions is not None:
            decisions.append(decision)
        if decision.capped:
            capped += 1
        elif decision.guarded:
            guard_events += 1
            if guard_events == 1:
                logger.warning(f"nonpositive gamma factor at iteration {k} (h={params.h:.3e}); "
                               f"the step is outside its valid regime, rejecting")
            if guard_events > MY_CONFIG.MRW_MAX_GUARD_EVENTS:
                raise AnomalyError(
                    f"❌ {guard_events} nonpositive gamma factors in {k + 1} iterations, h={params.h:.3e} is too large",
                    {"h": params.h, "p": params.p, "iteration": k, "guard_events": guard_events})
        elif decision.gamma > GAMMA_BOUND:
            above_bound += 1
        if decision.accepted:
            x = y
            accepted += 1
    fs.counter.add("mrw_iterations", params.K)
    fs.counter.add("mrw_accepts", accepted)
    fs.counter.add("mrw_capped", capped)
    fs.counter.add("mrw_guard", guard_events)
    fs.counter.add("mrw_gamma_above_bound", above_bound)
    return x


## --- exact-filter walk -------------------------------------------------------

def mrw_filter_probability(value_x: float, value_y: float) -> float:
    """
    Three-case filter: 1 when sqrt(pi(y)/pi(x)) > 4/3, (3/4) sqrt(ratio) in the middle
    band [3/4, 4/3], and ratio (the plain Metropolis rule) below it.
    """
    log_root = 0.5 * (value_x - value_y)
    if log_root > math.log(GAMMA_BOUND):
        return 1.0
    if log_root >= math.log(ACCEPT_SCALE):
        return ACCEPT_SCALE * math.exp(log_root)
    return math.exp(2.0 * log_root)


def _full_oracle(F: Union[FunctionOracle, FiniteSumOracle]) -> FunctionOracle:
    return F.as_function_oracle() if isinstance(F, FiniteSumOracle) else F


def inefficient_mrw_step(F: Union[FunctionOracle, FiniteSumOracle], x, h: float,
                         rng: RngStream) -> np.ndarray:
    """One exact-filter step; evaluates F at both endpoints."""
    F = _full_oracle(F)
    x = as_point(x)
    y = x + math.sqrt(2.0 * h) * rng.normal(x.shape)
    tau = rng.uniform()
    return y if tau <= mrw_filter_probability(F.value(x), F.value(y)) else x


def exact_mrw(F: Union[FunctionOracle, FiniteSumOracle], h: float, K: int, x0,
              rng: RngStream) -> np.ndarray:
    """K exact-filter steps, one F value per step."""
    F = _full_oracle(F)
    x = as_point(x0).copy()
    value_x = F.value(x)
    sd = math.sqrt(2.0 * h)
    for _ in range(K):
        y = x + sd * rng.normal(x.shape)
        tau = rng.uniform()
        value_y = F.value(y)
        if tau <= mrw_filter_probability(value_x, value_y):
            x, value_x = y, value_y
    return x


def exact_mrw_params(meta: ProblemMeta, eps: float, step_constant: Optional[float] = None,
                     iter_constant: Optional[float] = None):
    """(h, K) for the exact-filter walk: h = 1/(c L kappa d), K = c kappa^2 d log(kappa d / eps)."""
    c_h = MY_CONFIG.EXACT_MRW_STEP_CONSTANT if step_constant is None else step_constant
    c_K = MY_CONFIG.EXACT_MRW_ITER_CONSTANT if iter_constant is None else iter_constant
    kappa, d = meta.kappa, meta.dim
    h = 1.0 / (c_h * meta.L * kappa * d)
    K = max(1, int(math.ceil(c_K * kappa * kappa * d * _log_floor(kappa * d / eps))))
    return h, K


def make_mrw_rgo(f: FunctionOracle, eta_cap: float, step_constant: Optional[float] = None,
                 iter_constant: Optional[float] = None, default_tol: float = 1e-3) -> RgoHandle:
    """
    Value-query RGO for f: the regularized target f + ||x - v||^2/(2 lam) has condition
    number at most 1 + lam L, so a short exact-filter walk from N(argmin, I/L_sub) suffices.
    """
    def sampler(lam, v, rng, tv_tol):
        tol = tv_tol if tv_tol > 0 else default_tol
        sub = regularized_oracle(f, v, lam)
        center = agd_minimize(finite_difference_oracle(sub), v, tol=1e-6 * math.sqrt(sub.meta.L),
                              raise_on_failure=False).x
        h, K = exact_mrw_params(sub.meta, tol, step_constant, iter_constant)
        x0 = sample_gaussian(rng, center, 1.0 / sub.meta.L)
        return RgoDraw(exact_mrw(sub, h, K, x0, rng), tol)

    return RgoHandle(sampler, f.dim, eta_cap=eta_cap, exact=False, counter=f.counter,
                     name=f"mrw[{f.name}]", value_fn=f.value_fn)


## --- coupling with the exact walk --------------------------------------------

def _acceptance_from_factors(factors: np.ndarray, p: float, cap: int) -> float:
    """
    P(accept) of the subsampled filter as a polynomial in the factors: coefficient j of
    prod_i ((1 - p) + p gamma_i z), summed up to degree cap, times ACCEPT_SCALE.

    Exact only inside the regime checked by _dp_is_exact: every factor positive and
    ACCEPT_SCALE * gamma_S <= 1 for every subset S. Outside it the guard rejections of
    filter_step are not subtracted and the clamp to [0, 1] is applied to the
    expectation, not per subset.
    """
    coeffs = np.zeros(cap + 1)
    coeffs[0] = 1.0
    for factor in factors:
        shifted = np.zeros_like(coeffs)
        shifted[1:] = coeffs[:-1]
        coeffs = (1.0 - p) * coeffs + p * factor * shifted
    return min(1.0, max(0.0, ACCEPT_SCALE * float(np.sum(coeffs))))


def _dp_is_exact(factors: np.ndarray) -> bool:
    # the largest gamma_S takes every factor above 1
    return bool(np.all(factors > 0)) and ACCEPT_SCALE * float(np.prod(np.maximum(factors, 1.0))) <= 1.0


def filter_acceptance_probability(fs: FiniteSumOracle, x, y, p: float, cap: int) -> float:
    """Probability over S that the subsampled filter accepts y given x and y; see _acceptance_from_factors."""
    x, y = as_point(x), as_point(y)
    values_x = np.array([fs.summand_value(i, x) for i in range(fs.n)])
    values_y = np.array([fs.summand_value(i, y) for i in range(fs.n)])
    return _acceptance_from_factors(_gamma_factors(values_x, values_y, fs.n, p), p, cap)


@dataclass
class CoupledRun:
    diverged: bool
    divergence_step: Optional[int] = None
    disagreement_probability: List[float] = field(default_factory=list)
    inexact_steps: int = 0


def coupled_mrw_run(fs: FiniteSumOracle, params: MrwParams, x0, rng: RngStream) -> CoupledRun:
    """
    Run the subsampled walk and the exact walk in lockstep with shared proposal noise
    and a shared tau. tau is compared against each walk's exact acceptance
    probability, so the two accept decisions differ with probability equal to the
    gap between them; the run diverges at the first disagreement.
    Steps where the subsampled acceptance probability is only approximate are
    counted in inexact_steps.
    """
    x = as_point(x0).copy()
    sd = math.sqrt(2.0 * params.h)
    gaps = []
    inexact = 0
    for k in range(params.K):
        y = x + sd * rng.normal(x.shape)
        tau = rng.uniform()
        values_x = np.array([fs.summand_value(i, x) for i in range(fs.n)])
        values_y = np.array([fs.summand_value(i, y) for i in range(fs.n)])
        alpha_exact = mrw_filter_probability(float(np.mean(values_x)), float(np.mean(values_y)))
        factors = _gamma_factors(values_x, values_y, fs.n, params.p)
        alpha_sub = _acceptance_from_factors(factors, params.p, params.cap)
        if not _dp_is_exact(factors):
            inexact += 1
        gaps.append(abs(alpha_exact - alpha_sub))
        accept_exact, accept_sub = tau <= alpha_exact, tau <= alpha_sub
        if accept_exact != accept_sub:
            return CoupledRun(diverged=True, divergence_step=k, disagreement_probability=gaps,
                              inexact_steps=inexact)
        if accept_exact:
            x = y
    return CoupledRun(diverged=False, disagreement_probability=gaps, inexact_steps=inexact)

## --- end: coupling ------


def sample_finitesum(fs: FiniteSumOracle, x_star, eps: float, rng: RngStream,
                     state: Optional[ChainState] = None,
                     params: Optional[MrwParams] = None,
                     subset_rng: Optional[RngStream] = None,
                     step_constant: Optional[float] = None,
                     iter_constant: Optional[float] = None,
                     radius_constant: Optional[float] = None) -> np.ndarray:
    """Warm start N(x*, I/L) followed by finitesum_mrw at the theorem parameters."""
    meta = fs.meta
    if x_star is None:
        x_star = svrg_minimize(fs, np.zeros(meta.dim)).x
    if params is None:
        params = theorem_params(meta, fs.n, eps, step_constant, iter_constant, radius_constant)
    x0 = warm_start_gaussian(x_star, meta.L, rng, mu=meta.mu, state=state)
    x = finitesum_mrw(fs, params, x0, rng, subset_rng=subset_rng)
    if state is not None:
        state.x = x
        state.iterations += params.K
    return x


def accelerated_eta(meta: ProblemMeta, n: int, eps: float) -> float:
    """max(1/L, sqrt(n / (L^2 d log^3(n kappa d / eps))))."""
    log_term = _log_floor(n * meta.kappa * meta.dim / eps)
    return max(1.0 / meta.L, math.sqrt(n / (meta.L ** 2 * meta.dim * log_term ** 3)))


def make_finitesum_rgo(fs: FiniteSumOracle, eta_cap: float, default_tol: float = 1e-3,
                       **constants) -> RgoHandle:
    """
    RGO for F: the summand-wise regularized problem F + ||x - v||^2/(2 lam) is
    minimized by svrg and then sampled with sample_finitesum.
    """
    def sampler(lam, v, rng, tv_tol):
        tol = tv_tol if tv_tol > 0 else default_tol
        sub = fs.regularized(v, lam)
        epoch = max(sub.n, int(math.ceil(MY_CONFIG.SVRG_EPOCH_CONSTANT * sub.meta.kappa)))
        center = svrg_minimize(sub, v, tol=1e-4 * math.sqrt(sub.meta.L), rng=rng,
                               epoch_length=epoch, raise_on_failure=False).x
        return RgoDraw(sample_finitesum(sub, center, tol, rng, **constants), tol)

    return RgoHandle(sampler, fs.dim, eta_cap=eta_cap, exact=False, counter=fs.counter,
                     name=f"finitesum[{fs.name}]")


def accelerated_finitesum_sample(fs: FiniteSumOracle, eps: float, rng: RngStream,
                                 x_star=None, state: Optional[ChainState] = None,
                                 constant_override: Optional[float] = None,
                                 **constants) -> np.ndarray:
    """
    Proximal reduction over F at the accelerated step; every RGO call samples a
    regularized finite sum whose condition number is at most 1 + eta L.
    """
    meta = fs.meta
    eta = accelerated_eta(meta, fs.n, eps)
    if x_star is None:
        x_star = svrg_minimize(fs, np.zeros(meta.dim)).x
    red = ReductionConfig.build(eta, meta.mu, warmness_bound(meta.kappa, meta.dim), eps,
                                constant_override)
    rgo = make_finitesum_rgo(fs, eta_cap=eta, **constants)
    x0 = warm_start_gaussian(x_star, meta.L, rng, mu=meta.mu, state=state)
    logger.debug(f"accelerated finite sum: n={fs.n}, eta={eta:.4g}, T={red.T}")
    return alternate_sample(rgo, meta.mu, red, x0, rng, state)
