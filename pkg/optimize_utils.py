"""
Minimizer pre-computation: accelerated gradient descent, accelerated proximal
gradient and SVRG. Samplers use these for x* and for warm-start centers.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Union

import numpy as np

from gaussian_utils import RngStream
from my_config import MY_CONFIG
from oracle_utils import (
    ConvergenceError,
    DomainError,
    FiniteSumOracle,
    FunctionOracle,
    RgoHandle,
    as_point,
)

logger = logging.getLogger(__name__)


@dataclass
class OptResult:
    x: np.ndarray
    grad_norm: float
    iterations: int
    queries: Dict[str, float]
    converged: bool = True
    objective_trace: List[float] = field(default_factory=list)


def default_tol(L: float) -> float:
    return MY_CONFIG.OPT_TOL_SCALE * math.sqrt(L)


def _query_delta(before: Dict[str, float], after: Dict[str, float]) -> Dict[str, float]:
    return {k: after[k] - before.get(k, 0) for k in after if after[k] != before.get(k, 0)}


def _give_up(name: str, x, grad_norm: float, iterations: int, queries, raise_on_failure: bool) -> OptResult:
    message = f"{name} stopped after {iterations} iterations with gradient norm {grad_norm:.3e}"
    if raise_on_failure:
        raise ConvergenceError(f"❌ {message}", last_x=x, grad_norm=grad_norm, iterations=iterations)
    logger.warning(message)
    return OptResult(x=x, grad_norm=grad_norm, iterations=iterations, queries=queries, converged=False)


def prox_grad_minimize(f: FunctionOracle,
                       g_prox: Optional[Union[RgoHandle, Callable[[float, np.ndarray], np.ndarray]]],
                       x0,
                       tol: Optional[float] = None,
                       max_iter: Optional[int] = None,
                       raise_on_failure: bool = True) -> OptResult:
    """
    Accelerated proximal gradient for f + g with constant momentum from (L, mu).

    Every proximal call uses lambda = 1/L. Stops when the gradient mapping
    L (y - prox(y - grad f(y) / L)) has norm at most tol.

    Args:
        f: smooth part with metadata
        g_prox: proximal oracle (lam, v) -> argmin ||x - v||^2/(2 lam) + g(x), an RgoHandle
            with a prox, or None for g = 0
        x0: starting point
        tol: stopping tolerance, default 1e-8 sqrt(L)
        max_iter: iteration cap

    Returns:
        OptResult
    """
    L, mu = f.meta.L, f.meta.mu
    tol = default_tol(L) if tol is None else tol
    max_iter = MY_CONFIG.OPT_MAX_ITER if max_iter is None else max_iter
    if isinstance(g_prox, RgoHandle):
        g_prox = g_prox.prox
    q = math.sqrt(mu / L)
    momentum = (1.0 - q) / (1.0 + q)
    before = f.counter.snapshot()

    x = x_prev = as_point(x0).copy()
    grad_norm = math.inf
    for it in range(max_iter):
        y = x + momentum * (x - x_prev)
        z = y - f.gradient(y) / L
        x_new = z if g_prox is None else as_point(g_prox(1.0 / L, z))
        grad_norm = L * float(np.linalg.norm(y - x_new))
        if grad_norm <= tol:
            return OptResult(x=x_new, grad_norm=grad_norm, iterations=it,
                             queries=_query_delta(before, f.counter.snapshot()))
        x_prev, x = x, x_new
    return _give_up(f"accelerated gradient on '{f.name}'", x, grad_norm, max_iter,
                    _query_delta(before, f.counter.snapshot()), raise_on_failure)


def agd_minimize(f: FunctionOracle, x0, tol: Optional[float] = None,
                 max_iter: Optional[int] = None, raise_on_failure: bool = True) -> OptResult:
    """Strongly convex accelerated gradient descent; stops when ||grad f|| <= tol."""
    return prox_grad_minimize(f, None, x0, tol=tol, max_iter=max_iter,
                              raise_on_failure=raise_on_failure)


def svrg_minimize(fs: FiniteSumOracle, x0, tol: Optional[float] = None,
                  max_iter: Optional[int] = None, rng: Optional[RngStream] = None,
                  step: Optional[float] = None, epoch_length: Optional[int] = None,
                  raise_on_failure: bool = True, track_objective: bool = False) -> OptResult:
    """
    Variance-reduced SGD in epochs.

    Each epoch takes a full gradient at the anchor and then runs epoch_length steps
    x -= step * (grad f_i(x) - grad f_i(anchor) + full_grad). The full-gradient norm
    is checked once per epoch; max_iter caps the number of epochs.
    """
    L, kappa, n = fs.meta.L, fs.meta.kappa, fs.n
    tol = default_tol(L) if tol is None else tol
    max_iter = MY_CONFIG.SVRG_MAX_EPOCHS if max_iter is None else max_iter
    step = MY_CONFIG.SVRG_STEP_CONSTANT / L if step is None else step
    m = int(math.ceil(MY_CONFIG.SVRG_EPOCH_CONSTANT * kappa)) if epoch_length is None else epoch_length
    if m < 1 or not step > 0:
        raise DomainError(f"❌ svrg needs a positive step and epoch length, got {step}, {m}")
    rng = RngStream(MY_CONFIG.DEFAULT_SEED, MY_CONFIG.OPTIMIZER_STREAM) if rng is None else rng
    before = fs.counter.snapshot()

    x = as_point(x0).copy()
    best_x, best_norm = x, math.inf
    trace = []
    for epoch in range(max_iter):
        full_grad = fs.full_gradient(x)
        grad_norm = float(np.linalg.norm(full_grad))
        if track_objective:
            trace.append(fs.full_value(x))
        if grad_norm < best_norm:
            best_x, best_norm = x.copy(), grad_norm
        if grad_norm <= tol:
            return OptResult(x=x, grad_norm=grad_norm, iterations=epoch,
                             queries=_query_delta(before, fs.counter.snapshot()),
                             objective_trace=trace)
        anchor = x.copy()
        for i in rng.integers(n, size=m):
            i = int(i)
            x = x - step * (fs.summand_gradient(i, x) - fs.summand_gradient(i, anchor) + full_grad)
    result = _give_up(f"svrg on '{fs.name}'", best_x, best_norm, max_iter,
                      _query_delta(before, fs.counter.snapshot()), raise_on_failure)
    result.objective_trace = trace
    return result


def finite_difference_oracle(f: FunctionOracle, step: float = 1e-5) -> FunctionOracle:
    """Same function with a central-difference gradient costing 2d value queries."""
    value = f.value

    def gradient(x):
        x = as_point(x)
        h = step * max(1.0, float(np.max(np.abs(x))))
        grad = np.empty_like(x)
        for j in range(x.size):
            e = np.zeros_like(x)
            e[j] = h
            grad[j] = (value(x + e) - value(x - e)) / (2.0 * h)
        return grad

    return FunctionOracle(f.value_fn, f.meta, gradient_fn=gradient, counter=f.counter,
                          name=f"{f.name}(fd)", value_key=f.value_key,
                          gradient_key="fd_gradient")
