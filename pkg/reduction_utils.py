"""
Proximal reduction framework: alternate a Gaussian y-step with an RGO x-step.

For a target exp(-g) the chain lives on the joint density
    exp(-g(x) - ||x - y||^2 / (2 eta))
whose x-marginal is the target, so an exact RGO for g gives an exact sampler.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from gaussian_utils import RngStream, maximal_coupling_gaussian, sample_gaussian
from my_config import MY_CONFIG
from oracle_utils import AnomalyError, ConfigurationError, DomainError, RgoHandle, as_point

logger = logging.getLogger(__name__)


@dataclass
class ReductionConfig:
    eta: float
    T: int
    beta: float
    eps: float
    constant_override: Optional[float] = None

    def __post_init__(self):
        problems = []
        if not self.eta > 0:
            problems.append(f"eta must be positive, got {self.eta}")
        if int(self.T) != self.T or self.T < 0:
            problems.append(f"T must be a nonnegative integer, got {self.T}")
        if not 0 < self.eps < 1:
            problems.append(f"eps must lie in (0, 1), got {self.eps}")
        if not self.beta >= 1:
            problems.append(f"warmness beta must be >= 1, got {self.beta}")
        if problems:
            raise ConfigurationError("❌ invalid reduction config: " + "; ".join(problems), problems)
        self.T = int(self.T)

    @classmethod
    def build(cls, eta: float, mu: float, beta: float, eps: float,
              constant_override: Optional[float] = None) -> "ReductionConfig":
        T = iteration_count(eta, mu, beta, eps, constant_override)
        return cls(eta=eta, T=T, beta=beta, eps=eps, constant_override=constant_override)

    @property
    def per_call_tolerance(self) -> float:
        return self.eps / (2.0 * self.T) if self.T > 0 else 0.0


@dataclass
class ChainState:
    """Book-keeping for one chain: iterates, stream, tallies and TV spend."""
    x: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    rng: Optional[RngStream] = None
    queries: Dict[str, float] = field(default_factory=dict)
    tv_budget_spent: float = 0.0
    iterations: int = 0
    warmness: float = 1.0
    notes: Dict[str, float] = field(default_factory=dict)

    def note(self, key: str, amount: float = 1) -> None:
        self.notes[key] = self.notes.get(key, 0) + amount


def warmness_bound(kappa: float, d: int) -> float:
    """kappa^(d/2): warmness of N(x*, I/L) for a kappa-conditioned target."""
    try:
        return math.pow(kappa, 0.5 * d)
    except OverflowError:
        return math.inf


def iteration_count(eta: float, mu: float, beta: float, eps: float,
                    constant_override: Optional[float] = None) -> int:
    """T = ceil(c / (eta mu) * log(log(beta) / eps)) with log(beta) floored at e."""
    if not (eta > 0 and mu > 0 and beta > 0):
        raise DomainError(f"❌ eta, mu and beta must be positive, got {eta}, {mu}, {beta}")
    if not 0 < eps < 1:
        raise DomainError(f"❌ eps must lie in (0, 1), got {eps}")
    c = MY_CONFIG.ITERATION_CONSTANT if constant_override is None else constant_override
    log_beta = max(math.log(beta) if math.isfinite(beta) else math.inf, math.e)
    outer = max(math.log(log_beta / eps), 1.0)
    raw = c / (eta * mu) * outer
    # absorb floating noise so that exact integers stay exact
    return max(int(math.ceil(raw - 1e-9 * max(1.0, raw))), 0)


def alternate_sample(g_rgo: RgoHandle, mu: float, cfg: ReductionConfig, x0, rng: RngStream,
                     state: Optional[ChainState] = None) -> np.ndarray:
    """
    Run cfg.T rounds of y ~ N(x, eta I), x ~ RGO(eta, y) and return the last x.

    An approximate RGO receives tolerance eps/(2T) per call; the TV it reports as
    spent is added to state.tv_budget_spent. A total above eps/2 raises AnomalyError.

    Args:
        g_rgo: RGO for the target's negative log-density
        mu: strong convexity of the target (logged with the run)
        cfg: step size, iteration count and TV target
        x0: draw from a warm start
        rng: this chain's stream
        state: optional ChainState updated in place
    """
    if cfg.eta > g_rgo.eta_cap * (1.0 + 1e-12):
        raise ConfigurationError(
            f"❌ step eta={cfg.eta:.6g} exceeds the cap {g_rgo.eta_cap:.6g} of RGO '{g_rgo.name}'")
    tol = cfg.per_call_tolerance
    logger.debug(f"alternate_sample: T={cfg.T}, eta={cfg.eta:.4g}, mu={mu:.4g}, "
                 f"rgo={g_rgo.name} ({g_rgo.exactness}), per-call tol={tol:.3g}")
    x = as_point(x0).copy()
    y = None
    spent = 0.0
    for _ in range(cfg.T):
        y = sample_gaussian(rng, x, cfg.eta)
        draw = g_rgo.draw(cfg.eta, y, rng, tol)
        x = draw.x
        spent += draw.tv_spent
    if spent > 0.5 * cfg.eps * (1.0 + 1e-9):
        raise AnomalyError(
            f"❌ RGO '{g_rgo.name}' spent TV {spent:.3g} over T={cfg.T} calls, above eps/2 = {0.5 * cfg.eps:.3g}",
            {"spent": spent, "eps": cfg.eps, "T": cfg.T, "per_call_tol": tol, "rgo": g_rgo.name})
    if state is not None:
        state.x, state.y = x, y
        state.iterations += cfg.T
        state.tv_budget_spent += spent
    return x


def warm_start_gaussian(x_star, L: float, rng: RngStream, mu: Optional[float] = None,
                        state: Optional[ChainState] = None) -> np.ndarray:
    """Draw from N(x*, I/L); with mu given, record the warmness kappa^(d/2)."""
    x_star = as_point(x_star)
    x0 = sample_gaussian(rng, x_star, 1.0 / L)
    if state is not None and mu is not None:
        state.warmness = warmness_bound(L / mu, x_star.size)
    return x0


def warm_start_composite(x_star, L: float, g_rgo: RgoHandle, rng: RngStream,
                         mu: Optional[float] = None, state: Optional[ChainState] = None) -> np.ndarray:
    """One RGO call at lambda = 1/L centered at x*: exp(-(L/2)||x - x*||^2 - g(x))."""
    x_star = as_point(x_star)
    draw = g_rgo.draw(1.0 / L, x_star, rng)
    if state is not None:
        state.tv_budget_spent += draw.tv_spent
        if mu is not None:
            state.warmness = warmness_bound(L / mu, x_star.size)
    return draw.x


def coupled_step(g_rgo: RgoHandle, eta: float, x, x_prime, rng: RngStream) -> Tuple[np.ndarray, np.ndarray, bool]:
    """
    One iteration of two chains whose y-steps are maximally coupled.

    When the y's coincide both chains share the RGO draw and have coalesced.
    """
    y1, y2 = maximal_coupling_gaussian(rng, x, x_prime, eta)
    if np.array_equal(y1, y2):
        x_new = g_rgo.sample(eta, y1, rng)
        return x_new, x_new.copy(), True
    return g_rgo.sample(eta, y1, rng), g_rgo.sample(eta, y2, rng), False
