"""
Sampler for a well-conditioned density exp(-f).

The RGO for f is an exact rejection sampler around the linearization of f at the
current y ("XSample"), guarded by a gradient-norm gate. When the gate fails a
Metropolized Langevin chain on the (constant condition number) RGO target is
used instead and its TV tolerance is charged to the chain.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from finitesum_sampler import make_mrw_rgo
from gaussian_utils import RngStream, sample_gaussian
from my_config import MY_CONFIG
from optimize_utils import agd_minimize, finite_difference_oracle
from oracle_utils import (
    AnomalyError,
    ConfigurationError,
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


def floored_log(value: float) -> float:
    """log(value) floored at 1."""
    return max(math.log(value), 1.0) if value > 0 else 1.0


@dataclass(frozen=True)
class XSampleConfig:
    eta: float
    grad_gate: float
    fallback_tv: float
    max_rejection_rounds: int = MY_CONFIG.MAX_REJECTION_ROUNDS

    def __post_init__(self):
        if not (self.eta > 0 and self.grad_gate > 0):
            raise ConfigurationError(f"❌ XSample needs eta > 0 and a positive gate, got {self.eta}, {self.grad_gate}")
        if not 0 < self.fallback_tv < 1:
            raise ConfigurationError(f"❌ fallback tolerance must lie in (0, 1), got {self.fallback_tv}")

    @classmethod
    def from_meta(cls, meta: ProblemMeta, eps: float) -> "XSampleConfig":
        """eta = 1/(8 L d log kappa), gate 3 sqrt(L) d log kappa; log kappa floored at 1."""
        d, L, kappa = meta.dim, meta.L, meta.kappa
        log_kappa = floored_log(kappa)
        fallback_tv = eps / (kappa * d * d * floored_log(kappa * d / eps) ** 3)
        return cls(eta=1.0 / (8.0 * L * d * log_kappa),
                   grad_gate=3.0 * math.sqrt(L) * d * log_kappa,
                   fallback_tv=fallback_tv)

    def with_fallback_tv(self, tv: float) -> "XSampleConfig":
        return dataclasses.replace(self, fallback_tv=tv)


def linearized_rejection(f: FunctionOracle, center: np.ndarray, grad: np.ndarray, eta: float,
                         rng: RngStream, max_rounds: int, label: str) -> Tuple[np.ndarray, int]:
    """
    Exact draw from exp(-f(x) - ||x - center||^2 / (2 eta)).

    Proposes from N(center - eta grad, eta I) and accepts with probability
    exp(f(center) + <grad, x - center> - f(x)), which convexity keeps <= 1.
    """
    f_center = f.value(center)
    mean = center - eta * grad
    slack = MY_CONFIG.ACCEPT_RATIO_SLACK * (1.0 + abs(f_center))
    for rounds in range(1, max_rounds + 1):
        x = sample_gaussian(rng, mean, eta)
        log_ratio = f_center + float(grad @ (x - center)) - f.value(x)
        if log_ratio > slack:
            raise AnomalyError(
                f"❌ {label}: acceptance ratio exp({log_ratio:.3e}) above 1, '{f.name}' is not convex",
                {"center": center.tolist(), "proposal": x.tolist(), "log_ratio": log_ratio})
        if math.log(rng.uniform_open()) <= log_ratio:
            f.counter.add(f"{label}_calls")
            f.counter.add(f"{label}_rounds", rounds)
            return x, rounds
    raise AnomalyError(
        f"❌ {label}: no acceptance in {max_rounds} rounds (acceptance rate < {1.0 / max_rounds:.1e}); "
        f"check the smoothness metadata of '{f.name}'",
        {"center": center.tolist(), "eta": eta, "rounds": max_rounds})


def metropolized_fallback(target: FunctionOracle, tv_tol: float, rng: RngStream,
                          start_hint: Optional[np.ndarray] = None,
                          step_constant: Optional[float] = None,
                          steps_constant: Optional[float] = None) -> np.ndarray:
    """
    Metropolis-adjusted Langevin chain on exp(-V) for a well-conditioned V.

    Runs c * d * log(d / tv_tol) steps with h = c_h / (L_target d), starting from
    N(argmin estimate, I / L_target).
    """
    L, d = target.meta.L, target.dim
    c_h = MY_CONFIG.FALLBACK_STEP_CONSTANT if step_constant is None else step_constant
    c_steps = MY_CONFIG.FALLBACK_STEPS_CONSTANT if steps_constant is None else steps_constant
    h = c_h / (L * d)
    n_steps = int(math.ceil(c_steps * d * floored_log(d / tv_tol)))

    hint = np.zeros(d) if start_hint is None else as_point(start_hint)
    argmin = agd_minimize(target, hint, tol=1e-4 * math.sqrt(L),
                          max_iter=MY_CONFIG.FALLBACK_ARGMIN_ITERS, raise_on_failure=False).x
    x = sample_gaussian(rng, argmin, 1.0 / L)
    v_x, g_x = target.value(x), target.gradient(x)
    accepted = 0
    for _ in range(n_steps):
        proposal = x - h * g_x + math.sqrt(2.0 * h) * rng.normal(d)
        v_p, g_p = target.value(proposal), target.gradient(proposal)
        forward = proposal - x + h * g_x
        backward = x - proposal + h * g_p
        log_alpha = v_x - v_p - (float(backward @ backward) - float(forward @ forward)) / (4.0 * h)
        if math.log(rng.uniform_open()) <= log_alpha:
            x, v_x, g_x = proposal, v_p, g_p
            accepted += 1
    target.counter.add("fallback_steps", n_steps)
    target.counter.add("fallback_accepts", accepted)
    logger.debug(f"MALA fallback: {n_steps} steps, acceptance {accepted / max(n_steps, 1):.2f}")
    return x


def xsample_draw(f: FunctionOracle, y, cfg: XSampleConfig, rng: RngStream,
                 eta: Optional[float] = None) -> RgoDraw:
    """xsample that also reports the TV spent (nonzero only on the fallback path)."""
    eta = cfg.eta if eta is None else eta
    if eta > cfg.eta * (1.0 + 1e-12):
        raise ConfigurationError(f"❌ xsample step {eta:.6g} exceeds configured {cfg.eta:.6g}")
    y = as_point(y)
    grad = f.gradient(y)
    grad_norm = float(np.linalg.norm(grad))
    if grad_norm <= cfg.grad_gate:
        x, _ = linearized_rejection(f, y, grad, eta, rng, cfg.max_rejection_rounds, "xsample")
        return RgoDraw(x)
    logger.info(f"gradient gate failed at |grad f(y)|={grad_norm:.3g} > {cfg.grad_gate:.3g}; "
                f"Metropolized fallback at tolerance {cfg.fallback_tv:.3g}")
    f.counter.add("fallback")
    f.counter.add("fallback_tv", cfg.fallback_tv)
    x = metropolized_fallback(regularized_oracle(f, y, eta), cfg.fallback_tv, rng, start_hint=y)
    return RgoDraw(x, cfg.fallback_tv)


def xsample(f: FunctionOracle, y, cfg: XSampleConfig, rng: RngStream,
            eta: Optional[float] = None) -> np.ndarray:
    """Sample exp(-f(x) - ||x - y||^2 / (2 eta)): gated rejection, else MALA fallback."""
    return xsample_draw(f, y, cfg, rng, eta).x


def make_xsample_rgo(f: FunctionOracle, cfg: XSampleConfig) -> RgoHandle:
    def sampler(lam, v, rng, tv_tol):
        call_cfg = cfg.with_fallback_tv(min(cfg.fallback_tv, tv_tol)) if tv_tol > 0 else cfg
        return xsample_draw(f, v, call_cfg, rng, eta=lam)

    return RgoHandle(sampler, f.dim, eta_cap=cfg.eta, exact=False, counter=f.counter,
                     name=f"xsample[{f.name}]", value_fn=f.value_fn)


def gate_failure_rate(f: FunctionOracle, samples: np.ndarray, cfg: XSampleConfig) -> float:
    """Fraction of points whose gradient norm exceeds the gate."""
    samples = np.atleast_2d(samples)
    failures = sum(np.linalg.norm(f.gradient(x)) > cfg.grad_gate for x in samples)
    return failures / len(samples)


def sample_wellconditioned(f: FunctionOracle, x_star, eps: float, rng: RngStream,
                           state: Optional[ChainState] = None,
                           constant_override: Optional[float] = None,
                           cfg: Optional[XSampleConfig] = None) -> np.ndarray:
    """
    Draw within eps TV of exp(-f) using gradient queries.

    Args:
        f: first-order oracle with (L, mu) metadata
        x_star: minimizer of f, computed by agd_minimize when None
        eps: target TV distance
        rng: the chain's stream
        state: optional ChainState collecting warmness, iterations and TV spend
        constant_override: replaces c in the outer iteration count
    """
    meta = f.meta
    if x_star is None:
        x_star = agd_minimize(f, np.zeros(meta.dim)).x
    cfg = XSampleConfig.from_meta(meta, eps) if cfg is None else cfg
    red = ReductionConfig.build(cfg.eta, meta.mu, warmness_bound(meta.kappa, meta.dim), eps,
                                constant_override)
    x0 = warm_start_gaussian(x_star, meta.L, rng, mu=meta.mu, state=state)
    return alternate_sample(make_xsample_rgo(f, cfg), meta.mu, red, x0, rng, state)


def sample_wellconditioned_zeroth(f: FunctionOracle, x_star, eps: float, rng: RngStream,
                                  state: Optional[ChainState] = None,
                                  constant_override: Optional[float] = None,
                                  step_constant: Optional[float] = None,
                                  iter_constant: Optional[float] = None) -> np.ndarray:
    """Value-query version: eta = 1/L and each RGO call is an exact-filter random walk."""
    meta = f.meta
    if x_star is None:
        x_star = agd_minimize(finite_difference_oracle(f), np.zeros(meta.dim),
                              tol=1e-6 * math.sqrt(meta.L)).x
    eta = 1.0 / meta.L
    red = ReductionConfig.build(eta, meta.mu, warmness_bound(meta.kappa, meta.dim), eps,
                                constant_override)
    rgo = make_mrw_rgo(f, eta_cap=eta, step_constant=step_constant, iter_constant=iter_constant)
    x0 = warm_start_gaussian(x_star, meta.L, rng, mu=meta.mu, state=state)
    return alternate_sample(rgo, meta.mu, red, x0, rng, state)
