"""
Function oracles, restricted Gaussian oracles (RGOs) and problem metadata.

Every sampler in this repo talks to its target only through these objects, so
they are also where query tallies live.
"""

import logging
import math
import threading
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)


## ---- errors ----------------------------------------------------------------

class RgoSamplerError(Exception):
    """Base class for every error raised by the samplers."""


class DomainError(RgoSamplerError, ValueError):
    pass


class UnderflowError(DomainError):
    pass


class ConfigurationError(RgoSamplerError, ValueError):
    def __init__(self, message: str, problems: Optional[Sequence[str]] = None):
        super().__init__(message)
        self.problems = list(problems) if problems else [message]


class UnsupportedOperationError(RgoSamplerError, NotImplementedError):
    pass


class AnomalyError(RgoSamplerError, RuntimeError):
    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ConvergenceError(RgoSamplerError, RuntimeError):
    def __init__(self, message: str, last_x: np.ndarray, grad_norm: float, iterations: int):
        super().__init__(message)
        self.last_x = last_x
        self.grad_norm = grad_norm
        self.iterations = iterations

## --- end: errors ------


@dataclass(frozen=True)
class ProblemMeta:
    """Smoothness L, strong convexity mu and dimension of a negative log-density."""
    L: float
    mu: float
    dim: int

    def __post_init__(self):
        if not (self.mu > 0 and math.isfinite(self.L)):
            raise DomainError(f"❌ need finite L and mu > 0, got L={self.L}, mu={self.mu}")
        if self.L < self.mu:
            raise DomainError(f"❌ need L >= mu, got L={self.L}, mu={self.mu}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise DomainError(f"❌ dimension must be a positive integer, got {self.dim}")

    @property
    def kappa(self) -> float:
        return self.L / self.mu


class QueryCounter:
    """Named monotone tallies, safe to share between threads."""

    def __init__(self):
        self._lock = threading.Lock()
        self._tallies: Dict[str, float] = {}

    def add(self, key: str, amount: float = 1) -> None:
        if amount < 0:
            raise DomainError(f"❌ counters never decrease, got {key} += {amount}")
        with self._lock:
            self._tallies[key] = self._tallies.get(key, 0) + amount

    def get(self, key: str) -> float:
        with self._lock:
            return self._tallies.get(key, 0)

    def __getitem__(self, key: str) -> float:
        return self.get(key)

    def snapshot(self) -> Dict[str, float]:
        with self._lock:
            return dict(sorted(self._tallies.items()))


def as_point(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


class FunctionOracle:
    """
    Black-box convex function with counted value and (optional) gradient queries.

    Args:
        value_fn: point -> scalar
        meta: declared smoothness / strong convexity metadata
        gradient_fn: point -> point, or None for a zeroth-order oracle
        counter: tallies to charge, a fresh QueryCounter when omitted
        value_key, gradient_key: tally names charged per query
    """

    def __init__(self,
                 value_fn: Callable[[np.ndarray], float],
                 meta: ProblemMeta,
                 gradient_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 counter: Optional[QueryCounter] = None,
                 name: str = "f",
                 value_key: str = "value",
                 gradient_key: str = "gradient"):
        self.value_fn = value_fn
        self.gradient_fn = gradient_fn
        self.meta = meta
        self.counter = counter if counter is not None else QueryCounter()
        self.name = name
        self.value_key = value_key
        self.gradient_key = gradient_key

    @property
    def dim(self) -> int:
        return self.meta.dim

    @property
    def has_gradient(self) -> bool:
        return self.gradient_fn is not None

    def value(self, x: np.ndarray) -> float:
        self.counter.add(self.value_key)
        return float(self.value_fn(x))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        if self.gradient_fn is None:
            raise UnsupportedOperationError(f"❌ oracle '{self.name}' has no gradient")
        self.counter.add(self.gradient_key)
        return as_point(self.gradient_fn(x))

    def derived(self, value_fn, gradient_fn, meta: ProblemMeta, name: str) -> "FunctionOracle":
        """New oracle built from this one's raw functions, charging the same tallies."""
        return FunctionOracle(value_fn, meta, gradient_fn=gradient_fn, counter=self.counter,
                              name=name, value_key=self.value_key,
                              gradient_key=self.gradient_key)


def regularized_oracle(f: FunctionOracle, center: np.ndarray, lam: float) -> FunctionOracle:
    """f(x) + ||x - center||^2 / (2 lam), with metadata (L + 1/lam, mu + 1/lam)."""
    if not lam > 0:
        raise DomainError(f"❌ regularization lambda must be positive, got {lam}")
    center = as_point(center)
    value_fn, gradient_fn = f.value_fn, f.gradient_fn

    def value(x):
        diff = x - center
        return value_fn(x) + 0.5 * float(diff @ diff) / lam

    gradient = None
    if gradient_fn is not None:
        def gradient(x):
            return gradient_fn(x) + (x - center) / lam

    meta = ProblemMeta(f.meta.L + 1.0 / lam, f.meta.mu + 1.0 / lam, f.meta.dim)
    return f.derived(value, gradient, meta, name=f"{f.name}+quad")


def linear_tilt(f: FunctionOracle, c: np.ndarray) -> FunctionOracle:
    """f(x) - <c, x>; same metadata."""
    c = as_point(c)
    value_fn, gradient_fn = f.value_fn, f.gradient_fn

    def value(x):
        return value_fn(x) - float(c @ x)

    gradient = None
    if gradient_fn is not None:
        def gradient(x):
            return gradient_fn(x) - c

    return f.derived(value, gradient, f.meta, name=f"{f.name}~")


@dataclass
class RgoDraw:
    x: np.ndarray
    tv_spent: float = 0.0


class RgoHandle:
    """
    Sampler for densities proportional to exp(-||x - v||^2 / (2 lam) - g(x)).

    The raw sampler is called as sampler(lam, v, rng, tv_tol) and returns a point
    or an RgoDraw that also reports the TV tolerance it actually spent.
    Calls with lam above eta_cap are contract violations.
    """

    def __init__(self,
                 sampler: Callable[..., Any],
                 dim: int,
                 eta_cap: float = math.inf,
                 exact: bool = True,
                 counter: Optional[QueryCounter] = None,
                 name: str = "g",
                 value_fn: Optional[Callable[[np.ndarray], float]] = None,
                 prox_fn: Optional[Callable[[float, np.ndarray], np.ndarray]] = None,
                 subgradient_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None):
        self.sampler = sampler
        self.dim = dim
        self.eta_cap = eta_cap
        self.exact = exact
        self.counter = counter if counter is not None else QueryCounter()
        self.name = name
        self.value_fn = value_fn
        self.prox_fn = prox_fn
        self.subgradient_fn = subgradient_fn

    @property
    def exactness(self) -> str:
        return "exact" if self.exact else "approximate"

    def check_lambda(self, lam: float) -> None:
        if not lam > 0:
            raise DomainError(f"❌ RGO '{self.name}' called with nonpositive lambda {lam}")
        if lam > self.eta_cap * (1.0 + 1e-12):
            raise ConfigurationError(
                f"❌ RGO '{self.name}' called with lambda={lam:.6g} above its cap {self.eta_cap:.6g}")

    def draw(self, lam: float, v: np.ndarray, rng, tv_tol: float = 0.0) -> RgoDraw:
        self.check_lambda(lam)
        if not 0.0 <= tv_tol <= 1.0:
            raise DomainError(f"❌ RGO tolerance must lie in [0, 1], got {tv_tol}")
        self.counter.add("rgo")
        out = self.sampler(lam, as_point(v), rng, 0.0 if self.exact else tv_tol)
        draw = out if isinstance(out, RgoDraw) else RgoDraw(as_point(out))
        if self.exact:
            draw.tv_spent = 0.0
        elif draw.tv_spent > 0:
            self.counter.add("rgo_tv_spent", draw.tv_spent)
        return draw

    def sample(self, lam: float, v: np.ndarray, rng, tv_tol: float = 0.0) -> np.ndarray:
        return self.draw(lam, v, rng, tv_tol).x

    @property
    def has_prox(self) -> bool:
        return self.prox_fn is not None

    def value(self, x: np.ndarray) -> float:
        if self.value_fn is None:
            raise UnsupportedOperationError(f"❌ RGO '{self.name}' has no value oracle")
        self.counter.add("g_value")
        return float(self.value_fn(x))

    def prox(self, lam: float, v: np.ndarray) -> np.ndarray:
        if self.prox_fn is None:
            raise UnsupportedOperationError(f"❌ RGO '{self.name}' has no proximal oracle")
        self.counter.add("prox")
        return as_point(self.prox_fn(lam, as_point(v)))

    def subgradient(self, x: np.ndarray) -> np.ndarray:
        if self.subgradient_fn is None:
            raise UnsupportedOperationError(f"❌ RGO '{self.name}' has no subgradient oracle")
        return as_point(self.subgradient_fn(x))

    def tilted(self, c: np.ndarray) -> "RgoHandle":
        """RGO for g(x) + <c, x>: the linear term moves the quadratic center to v - lam c."""
        c = as_point(c)
        sampler, value_fn, prox_fn, sub_fn = self.sampler, self.value_fn, self.prox_fn, self.subgradient_fn

        def tilted_sampler(lam, v, rng, tv_tol):
            return sampler(lam, v - lam * c, rng, tv_tol)

        return RgoHandle(
            tilted_sampler, self.dim, eta_cap=self.eta_cap, exact=self.exact,
            counter=self.counter, name=f"{self.name}~",
            value_fn=None if value_fn is None else (lambda x: value_fn(x) + float(c @ x)),
            prox_fn=None if prox_fn is None else (lambda lam, v: prox_fn(lam, v - lam * c)),
            subgradient_fn=None if sub_fn is None else (lambda x: sub_fn(x) + c),
        )


def shift_to_shared_min(f: FunctionOracle, g: RgoHandle, x_star: np.ndarray) -> Tuple[FunctionOracle, RgoHandle]:
    """
    Move the linear term <grad f(x*), x> from f to g so both parts are minimized at x*.

    Returns:
        (f - <grad f(x*), x>, g + <grad f(x*), x>); their sum is unchanged.
    """
    if not f.has_gradient:
        raise UnsupportedOperationError(f"❌ shift_to_shared_min needs a gradient oracle on '{f.name}'")
    c = f.gradient(as_point(x_star))
    if not np.any(c):
        return f, g
    logger.debug(f"shifting linear term of norm {np.linalg.norm(c):.3e} from {f.name} to {g.name}")
    return linear_tilt(f, c), g.tilted(c)


def combine_quadratics(lambda1: float, v1, lambda2: float, v2) -> Tuple[float, np.ndarray]:
    """Merge (1/2l1)||x-v1||^2 + (1/2l2)||x-v2||^2 into (1/2l)||x-v||^2 + const."""
    if not (lambda1 > 0 and lambda2 > 0):
        raise DomainError(f"❌ quadratic weights must be positive, got {lambda1}, {lambda2}")
    lam = lambda1 * lambda2 / (lambda1 + lambda2)
    v = lam * (as_point(v1) / lambda1 + as_point(v2) / lambda2)
    return lam, v


class FiniteSumOracle:
    """
    F(x) = (1/n) sum_i f_i(x) with per-summand queries.

    Every summand is L-smooth (L = max over summands); mu_total is the strong
    convexity of the average. Evaluating F costs n summand queries.
    """

    def __init__(self, summands: List[FunctionOracle], mu_total: float, name: str = "F"):
        if len(summands) < 1:
            raise DomainError("❌ a finite sum needs at least one summand")
        dims = {s.dim for s in summands}
        if len(dims) != 1:
            raise DomainError(f"❌ summands disagree on dimension: {sorted(dims)}")
        self.summands = summands
        self.counter = summands[0].counter
        self.name = name
        L = max(s.meta.L for s in summands)
        self.meta = ProblemMeta(L, mu_total, summands[0].dim)
        self._full = FunctionOracle(
            self._mean_value, self.meta,
            gradient_fn=self._mean_gradient if all(s.has_gradient for s in summands) else None,
            counter=self.counter, name=name, value_key="full_value", gradient_key="full_gradient")

    @classmethod
    def from_functions(cls, value_fns, gradient_fns, L: float, mu_total: float, dim: int,
                       counter: Optional[QueryCounter] = None, name: str = "F") -> "FiniteSumOracle":
        counter = counter if counter is not None else QueryCounter()
        if gradient_fns is None:
            gradient_fns = [None] * len(value_fns)
        summands = [
            FunctionOracle(vf, ProblemMeta(L, min(mu_total, L), dim), gradient_fn=gf,
                           counter=counter, name=f"{name}[{i}]",
                           value_key="summand_value", gradient_key="summand_gradient")
            for i, (vf, gf) in enumerate(zip(value_fns, gradient_fns))
        ]
        return cls(summands, mu_total, name=name)

    @property
    def n(self) -> int:
        return len(self.summands)

    @property
    def dim(self) -> int:
        return self.meta.dim

    def summand_value(self, i: int, x: np.ndarray) -> float:
        return self.summands[i].value(x)

    def summand_gradient(self, i: int, x: np.ndarray) -> np.ndarray:
        return self.summands[i].gradient(x)

    def _mean_value(self, x):
        return sum(s.value(x) for s in self.summands) / self.n

    def _mean_gradient(self, x):
        return sum(s.gradient(x) for s in self.summands) / self.n

    def full_value(self, x: np.ndarray) -> float:
        return self._full.value(x)

    def full_gradient(self, x: np.ndarray) -> np.ndarray:
        return self._full.gradient(x)

    def as_function_oracle(self) -> FunctionOracle:
        return self._full

    def regularized(self, center: np.ndarray, lam: float) -> "FiniteSumOracle":
        """Summand-wise f_i(x) + ||x - center||^2 / (2 lam)."""
        summands = [regularized_oracle(s, center, lam) for s in self.summands]
        return FiniteSumOracle(summands, self.meta.mu + 1.0 / lam, name=f"{self.name}+quad")
