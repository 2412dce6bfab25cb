"""
Composite sampler for exp(-f(x) - g(x)) with f well-conditioned and g reached
only through its RGO.

After moving the linear term so that f and g share the minimizer x*, an
alternating chain samples the x-marginal of

    exp(-f(y) - g(x) - ||x - y||^2 / (2 eta) - (eta L^2 / 2) ||x - x*||^2)

and an approximate rejection step with the unbiased estimator theta corrects it
to the target.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from gaussian_utils import RngStream
from my_config import MY_CONFIG
from optimize_utils import prox_grad_minimize
from oracle_utils import (
    AnomalyError,
    ConfigurationError,
    FunctionOracle,
    ProblemMeta,
    RgoDraw,
    RgoHandle,
    UnsupportedOperationError,
    as_point,
    combine_quadratics,
    regularized_oracle,
    shift_to_shared_min,
)
from reduction_utils import (
    ChainState,
    ReductionConfig,
    alternate_sample,
    warm_start_composite,
    warmness_bound,
)
from wellcond_sampler import linearized_rejection, metropolized_fallback

logger = logging.getLogger(__name__)

LOG_THETA_LIMIT = 700.0


@dataclass
class CompositeProblem:
    f: FunctionOracle
    g: RgoHandle
    x_star: np.ndarray
    eps: float

    def __post_init__(self):
        self.x_star = as_point(self.x_star)
        problems = []
        if not 0 < self.eps < 1:
            problems.append(f"eps must lie in (0, 1), got {self.eps}")
        if self.g.dim != self.f.dim:
            problems.append(f"f has dimension {self.f.dim} but g has {self.g.dim}")
        if self.x_star.size != self.f.dim:
            problems.append(f"x_star has {self.x_star.size} coordinates, expected {self.f.dim}")
        if problems:
            raise ConfigurationError("❌ invalid composite problem: " + "; ".join(problems), problems)

    @property
    def meta(self) -> ProblemMeta:
        return self.f.meta


@dataclass(frozen=True)
class JointParams:
    eta: float
    delta: float
    K: int
    omega_radius: float
    ridge: float
    r_delta: float
    ysample_radius: float
    eps: float

    @classmethod
    def build(cls, meta: ProblemMeta, eps: float, delta: Optional[float] = None,
              k_constant: Optional[float] = None, check: bool = True) -> "JointParams":
        """
        Step, iteration count and radii of the joint chain for a target eps.

        delta defaults to eps/18; C_K (k_constant) defaults to MY_CONFIG.JOINT_K_CONSTANT.
        """
        if not 0 < eps < 1:
            raise ConfigurationError(f"❌ eps must lie in (0, 1), got {eps}")
        delta = eps / 18.0 if delta is None else delta
        c_K = MY_CONFIG.JOINT_K_CONSTANT if k_constant is None else k_constant
        L, mu, kappa, d = meta.L, meta.mu, meta.kappa, meta.dim
        eta = 1.0 / (32.0 * L * kappa * d * math.log(16.0 * kappa / delta))
        K = int(math.ceil(c_K / (eta * mu) * max(math.log(d * math.log(16.0 * kappa) / (4.0 * delta)), 1.0)))
        omega = 4.0 * math.sqrt(d * math.log(288.0 * kappa / eps) / mu)
        r_delta = 4.0 * math.sqrt(d * math.log(16.0 * kappa / delta) / mu)
        params = cls(eta=eta, delta=delta, K=K, omega_radius=omega, ridge=eta * L * L,
                     r_delta=r_delta,
                     ysample_radius=math.sqrt(kappa * d * math.log(16.0 * kappa / delta)) * r_delta,
                     eps=eps)
        if check:
            params.check(meta)
        return params

    def check(self, meta: ProblemMeta) -> None:
        L, d = meta.L, meta.dim
        slack = 1.0 + 1e-9
        problems = []
        if self.eta * L > slack:
            problems.append(f"eta L = {self.eta * L:.3g} > 1")
        if self.eta * L * L * self.omega_radius ** 2 > 0.5 * slack:
            problems.append(f"eta L^2 omega^2 = {self.eta * L * L * self.omega_radius ** 2:.3g} > 1/2")
        if 400.0 * d * d * self.eta > self.omega_radius ** 2 * slack:
            problems.append(f"400 d^2 eta = {400.0 * d * d * self.eta:.3g} > omega^2")
        if self.K < 1:
            problems.append(f"K must be positive, got {self.K}")
        if problems:
            raise ConfigurationError("❌ joint chain parameters violate their preconditions: "
                                     + "; ".join(problems), problems)


def joint_start_warmness(kappa: float, d: int) -> float:
    """2 (1 + kappa)^(d/2)."""
    return 2.0 * warmness_bound(1.0 + kappa, d)


def approx_rejection_bounds(C: float, eps_prime: float, delta: float) -> Tuple[float, float]:
    """
    (expected proposal count, TV error) of rejection sampling with bound C from a
    delta-approximate proposal whose ratio estimate fails on mass eps_prime.
    """
    rate = (1.0 - eps_prime) / C - 2.0 * delta
    if not rate > 0:
        raise ConfigurationError(f"❌ acceptance rate bound {rate:.3g} is not positive")
    return 1.0 / rate, eps_prime + 2.0 * delta * C / (1.0 - eps_prime)


def ysample_draw(f: FunctionOracle, x, eta: float, delta: float, rng: RngStream, x_star,
                 radius: float, grad: Optional[np.ndarray] = None,
                 max_rounds: Optional[int] = None) -> RgoDraw:
    """ysample reporting the TV it spent."""
    x, x_star = as_point(x), as_point(x_star)
    max_rounds = MY_CONFIG.MAX_REJECTION_ROUNDS if max_rounds is None else max_rounds
    if np.linalg.norm(x - x_star) <= radius:
        grad = f.gradient(x) if grad is None else grad
        y, _ = linearized_rejection(f, x, grad, eta, rng, max_rounds, "ysample")
        return RgoDraw(y)
    logger.info(f"ysample at distance {np.linalg.norm(x - x_star):.3g} > {radius:.3g} from x*; "
                f"Metropolized fallback at tolerance {delta:.3g}")
    f.counter.add("ysample_fallback")
    f.counter.add("fallback_tv", delta)
    y = metropolized_fallback(regularized_oracle(f, x, eta), delta, rng, start_hint=x)
    return RgoDraw(y, delta)


def ysample(f: FunctionOracle, x, eta: float, delta: float, rng: RngStream, x_star=None,
            radius: Optional[float] = None) -> np.ndarray:
    """
    Sample exp(-f(y) - ||y - x||^2 / (2 eta)).

    Exact rejection from N(x - eta grad f(x), eta I) when x is within the radius
    of x* (defaults: x* = 0, radius from JointParams at the same delta), the
    Metropolized fallback at tolerance delta otherwise.
    """
    x = as_point(x)
    x_star = np.zeros_like(x) if x_star is None else x_star
    if radius is None:
        kappa, d = f.meta.kappa, f.dim
        log_term = math.log(16.0 * kappa / delta)
        radius = math.sqrt(kappa * d * log_term) * 4.0 * math.sqrt(d * log_term / f.meta.mu)
    return ysample_draw(f, x, eta, delta, rng, x_star, radius).x


def log_theta(f: FunctionOracle, x: np.ndarray, y: np.ndarray, grad: np.ndarray, eta: float,
              x_star: np.ndarray) -> float:
    # g(x) enters with both signs and cancels; E[theta] = p(x) / p_hat(x) needs
    # the minus sign on the gradient term
    L, d = f.meta.L, f.dim
    diff, offset = y - x, x - x_star
    return (-f.value(x)
            - eta / (2.0 * (1.0 + eta * L)) * float(grad @ grad)
            + 0.5 * d * math.log1p(eta * L)
            + f.value(y) - float(grad @ diff) - 0.5 * L * float(diff @ diff)
            + 0.5 * eta * L * L * float(offset @ offset))


def theta_estimator(f: FunctionOracle, g: Optional[RgoHandle], x, eta: float, rng: RngStream,
                    x_star=None, delta: float = 1e-3, radius: Optional[float] = None,
                    y=None) -> float:
    """
    Unbiased estimate of the density ratio p(x) / p_hat(x) from one ysample draw.

    p_hat is the x-marginal of the joint chain rescaled by (2 pi eta)^(-d/2); the
    estimate is accumulated in log space and exponentiated once.
    """
    x = as_point(x)
    x_star = np.zeros_like(x) if x_star is None else as_point(x_star)
    grad = f.gradient(x)
    if y is None:
        if radius is None:
            y = ysample(f, x, eta, delta, rng, x_star)
        else:
            y = ysample_draw(f, x, eta, delta, rng, x_star, radius, grad=grad).x
    value = log_theta(f, x, as_point(y), grad, eta, x_star)
    if not math.isfinite(value) or value > LOG_THETA_LIMIT:
        raise AnomalyError(f"❌ theta overflow: log theta = {value:.3g} at |x - x*| = "
                           f"{np.linalg.norm(x - x_star):.3g}",
                           {"x": x.tolist(), "log_theta": value})
    return math.exp(value)


def sample_joint_dist(f: FunctionOracle, g_rgo: RgoHandle, x_star, delta: float, params: JointParams,
                      rng: RngStream, x0=None, state: Optional[ChainState] = None) -> np.ndarray:
    """
    K alternating rounds on the joint density, started from one RGO call at
    exp(-((L + eta L^2)/2) ||x - x*||^2 - g(x)) unless x0 is given.

    The coupling quadratic and the ridge on ||x - x*||^2 are merged into a single
    RGO call.
    """
    x_star = as_point(x_star)
    L, d, kappa = f.meta.L, f.dim, f.meta.kappa
    eta = params.eta
    spent = 0.0
    if x0 is None:
        draw = g_rgo.draw(1.0 / (L + params.ridge), x_star, rng)
        x, spent = draw.x, draw.tv_spent
    else:
        x = as_point(x0).copy()
    y_tol = delta / (2.0 * params.K * d * max(math.log(d * kappa / delta), 1.0))
    for _ in range(params.K):
        y_draw = ysample_draw(f, x, eta, y_tol, rng, x_star, params.ysample_radius)
        lam, v = combine_quadratics(eta, y_draw.x, 1.0 / params.ridge, x_star)
        x_draw = g_rgo.draw(lam, v, rng)
        x = x_draw.x
        spent += y_draw.tv_spent + x_draw.tv_spent
    f.counter.add("joint_iterations", params.K)
    if state is not None:
        state.tv_budget_spent += spent
        state.iterations += params.K
    return x


def composite_sample_shared_min(prob: CompositeProblem, rng: RngStream,
                                params: Optional[JointParams] = None,
                                state: Optional[ChainState] = None,
                                k_constant: Optional[float] = None,
                                max_rounds: Optional[int] = None) -> np.ndarray:
    """
    Approximate rejection: propose from the joint chain at delta = eps/18 and accept
    a proposal inside the radius omega with probability theta / 4.

    Args:
        prob: problem whose f and g are both minimized at prob.x_star
        rng: chain stream
        params: joint-chain parameters, JointParams.build(meta, eps) by default
        state: optional ChainState for iterations and TV spend
        k_constant: C_K override used when params is None
        max_rounds: proposal cap, MY_CONFIG.MAX_ACCEPT_ROUNDS by default
    """
    f, g, x_star = prob.f, prob.g, prob.x_star
    params = JointParams.build(prob.meta, prob.eps, k_constant=k_constant) if params is None else params
    max_rounds = MY_CONFIG.MAX_ACCEPT_ROUNDS if max_rounds is None else max_rounds
    bound = MY_CONFIG.ACCEPT_CONSTANT
    thetas = []
    for rounds in range(1, max_rounds + 1):
        x = sample_joint_dist(f, g, x_star, params.delta, params, rng, state=state)
        f.counter.add("joint_calls")
        if np.linalg.norm(x - x_star) > params.omega_radius:
            f.counter.add("omega_misses")
            continue
        theta = theta_estimator(f, g, x, params.eta, rng, x_star, delta=params.delta,
                                radius=params.ysample_radius)
        thetas.append(theta)
        if theta > bound:
            f.counter.add("theta_above_bound")
            logger.warning(f"theta = {theta:.4g} > {bound} at |x - x*| = {np.linalg.norm(x - x_star):.3g}")
        if rng.uniform() <= theta / bound:
            f.counter.add("accept_rounds", rounds)
            return x
    raise AnomalyError(
        f"❌ approximate rejection accepted nothing in {max_rounds} rounds",
        {"rounds": max_rounds, "thetas": thetas, "eta": params.eta, "K": params.K,
         "omega_radius": params.omega_radius})


def composite_sample(prob: CompositeProblem, rng: RngStream, params: Optional[JointParams] = None,
                     state: Optional[ChainState] = None, k_constant: Optional[float] = None) -> np.ndarray:
    """Shift the linear term so f and g share x*, then run the shared-minimizer sampler."""
    f_shift, g_shift = shift_to_shared_min(prob.f, prob.g, prob.x_star)
    shifted = CompositeProblem(f_shift, g_shift, prob.x_star, prob.eps)
    return composite_sample_shared_min(shifted, rng, params=params, state=state, k_constant=k_constant)


def make_composite_rgo(f: FunctionOracle, g: RgoHandle, eta_cap: float = math.inf,
                       k_constant: Optional[float] = None, default_tol: float = 1e-2) -> RgoHandle:
    """
    RGO for f + g: the well-conditioned part f + ||x - v||^2/(2 lam) and g form a
    composite problem whose minimizer comes from prox_grad_minimize.
    """
    if not g.has_prox:
        raise UnsupportedOperationError(f"❌ composite RGO needs a proximal oracle for '{g.name}'")

    def sampler(lam, v, rng, tv_tol):
        tol = tv_tol if tv_tol > 0 else default_tol
        f_v = regularized_oracle(f, v, lam)
        x_v = prox_grad_minimize(f_v, g, v, raise_on_failure=False).x
        return RgoDraw(composite_sample(CompositeProblem(f_v, g, x_v, tol), rng, k_constant=k_constant), tol)

    return RgoHandle(sampler, f.dim, eta_cap=eta_cap, exact=False, counter=f.counter,
                     name=f"composite[{f.name}+{g.name}]")


def accelerated_composite_sample(prob: CompositeProblem, rng: RngStream,
                                 state: Optional[ChainState] = None,
                                 constant_override: Optional[float] = None,
                                 k_constant: Optional[float] = None) -> np.ndarray:
    """
    Proximal reduction over f + g at eta = 1/L; each RGO call runs composite_sample
    on a part with condition number at most 2.
    """
    meta = prob.meta
    L, mu = meta.L, meta.mu
    eta = 1.0 / L
    _, g_shift = shift_to_shared_min(prob.f, prob.g, prob.x_star)
    x0 = warm_start_composite(prob.x_star, L, g_shift, rng, mu=mu, state=state)
    red = ReductionConfig.build(eta, mu, warmness_bound(meta.kappa, meta.dim), prob.eps, constant_override)
    rgo = make_composite_rgo(prob.f, prob.g, eta_cap=eta, k_constant=k_constant)
    return alternate_sample(rgo, mu, red, x0, rng, state)
