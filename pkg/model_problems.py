"""
Built-in targets with exact RGOs and closed-form or quadrature ground truth.

build_model(spec) returns the oracle, the RGO for the composite part g, the
truth handle and (when one exists) an exact RGO for the whole target, which the
direct reduction uses.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid, simpson
from scipy.special import expit
from scipy.stats import norm

from gaussian_utils import (
    RngStream,
    TruncatedGaussian1D,
    sample_l1_quadratic_1d,
    sample_truncated_gaussian_1d,
)
from my_config import MY_CONFIG
from optimize_utils import agd_minimize, svrg_minimize
from oracle_utils import (
    ConfigurationError,
    DomainError,
    FiniteSumOracle,
    FunctionOracle,
    ProblemMeta,
    QueryCounter,
    RgoHandle,
    as_point,
    combine_quadratics,
)

logger = logging.getLogger(__name__)

MODEL_KINDS = ("gaussian", "box_gaussian", "lasso_gaussian", "logistic_finitesum",
               "quadratic_finitesum", "custom_1d")
GROUND_TRUTHS = ("closed_form", "quadrature_1d", "quadrature_2d", "reference_chain")
DEFAULT_TRUTH = {
    "gaussian": "closed_form",
    "box_gaussian": "quadrature_1d",
    "lasso_gaussian": "quadrature_1d",
    "logistic_finitesum": "reference_chain",
    "quadratic_finitesum": "closed_form",
    "custom_1d": "quadrature_1d",
}
FINITESUM_KINDS = ("logistic_finitesum", "quadratic_finitesum")
TAIL_MASS = 1e-12
MIN_MOMENT_SAMPLES = 10_000


@dataclass
class ModelSpec:
    kind: str
    dim: int = 1
    params: Dict[str, Any] = field(default_factory=dict)
    ground_truth: Optional[str] = None

    def __post_init__(self):
        problems = []
        if self.kind not in MODEL_KINDS:
            problems.append(f"unknown model kind '{self.kind}', expected one of {list(MODEL_KINDS)}")
        if int(self.dim) != self.dim or self.dim < 1:
            problems.append(f"dim must be a positive integer, got {self.dim}")
        if self.kind == "custom_1d" and self.dim != 1:
            problems.append("custom_1d models are one-dimensional")
        if self.ground_truth is None:
            self.ground_truth = DEFAULT_TRUTH.get(self.kind)
        if self.ground_truth not in GROUND_TRUTHS:
            problems.append(f"unknown ground truth '{self.ground_truth}'")
        if problems:
            raise ConfigurationError("❌ invalid model spec: " + "; ".join(problems), problems)
        self.dim = int(self.dim)

    @property
    def is_finitesum(self) -> bool:
        return self.kind in FINITESUM_KINDS

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "dim": self.dim, "params": dict(self.params),
                "ground_truth": self.ground_truth}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelSpec":
        unknown = set(data) - {"kind", "dim", "params", "ground_truth"}
        if unknown:
            raise ConfigurationError(f"❌ unknown model keys {sorted(unknown)}")
        if "kind" not in data:
            raise ConfigurationError("❌ model needs a 'kind'")
        return cls(kind=data["kind"], dim=data.get("dim", 1), params=dict(data.get("params", {})),
                   ground_truth=data.get("ground_truth"))


## ---- quadrature ------------------------------------------------------------

@dataclass
class QuadratureResult:
    nodes: np.ndarray
    log_normalizer: float
    mean: float
    variance: float
    cdf_values: np.ndarray

    @property
    def normalizer(self) -> float:
        return math.exp(self.log_normalizer)

    def cdf(self, x):
        return np.interp(x, self.nodes, self.cdf_values, left=0.0, right=1.0)

    def sample(self, rng: RngStream, size: int) -> np.ndarray:
        """Inverse-CDF draws by interpolation between nodes."""
        return np.interp(rng.random(size), self.cdf_values, self.nodes)


def _evaluate(log_density: Callable, xs: np.ndarray) -> np.ndarray:
    try:
        values = np.asarray(log_density(xs), dtype=float)
    except (TypeError, ValueError):
        values = None
    if values is None or values.shape != xs.shape:
        values = np.array([float(log_density(x)) for x in xs.ravel()]).reshape(xs.shape)
    return values


def quadrature_moments_1d(log_density: Callable, lo: float, hi: float,
                          n_nodes: Optional[int] = None, support: bool = False) -> QuadratureResult:
    """
    Normalizer, mean, variance and CDF of exp(log_density) on [lo, hi].

    Composite Simpson on at least QUADRATURE_NODES nodes, with the density scaled
    by its maximum before exponentiation. Unless [lo, hi] is the support, the
    density at both endpoints must be below TAIL_MASS times its maximum.
    """
    if not lo < hi:
        raise DomainError(f"❌ need lo < hi, got [{lo}, {hi}]")
    n = max(n_nodes or 0, MY_CONFIG.QUADRATURE_NODES)
    n += 1 - n % 2
    xs = np.linspace(lo, hi, n)
    log_p = _evaluate(log_density, xs)
    if not np.all(np.isfinite(log_p)):
        bad = xs[~np.isfinite(log_p)][0]
        raise DomainError(f"❌ log-density is not finite at x={bad:.6g}")
    top = float(np.max(log_p))
    edge = max(float(log_p[0]), float(log_p[-1])) - top
    if not support and edge > math.log(TAIL_MASS):
        raise DomainError(f"❌ bracket [{lo:.6g}, {hi:.6g}] cuts off mass: endpoint density is "
                          f"{math.exp(edge):.3g} of the maximum")
    w = np.exp(log_p - top)
    z = float(simpson(w, x=xs))
    mean = float(simpson(xs * w, x=xs)) / z
    variance = float(simpson((xs - mean) ** 2 * w, x=xs)) / z
    cdf = cumulative_trapezoid(w, xs, initial=0.0)
    cdf /= cdf[-1]
    return QuadratureResult(nodes=xs, log_normalizer=top + math.log(z), mean=mean,
                            variance=variance, cdf_values=cdf)


@dataclass
class QuadratureResult2D:
    log_normalizer: float
    mean: np.ndarray
    cov: np.ndarray


def quadrature_moments_2d(log_density: Callable, bounds: Sequence[Tuple[float, float]],
                          n_nodes: Optional[int] = None) -> QuadratureResult2D:
    """Tensor Simpson rule; log_density takes two meshgrid arrays."""
    n = MY_CONFIG.QUADRATURE_NODES_2D if n_nodes is None else n_nodes
    if n > 801:
        raise DomainError(f"❌ 2D quadrature is limited to 801 nodes per axis, got {n}")
    n += 1 - n % 2
    (lo1, hi1), (lo2, hi2) = bounds
    u, v = np.linspace(lo1, hi1, n), np.linspace(lo2, hi2, n)
    X, Y = np.meshgrid(u, v, indexing="ij")
    log_p = np.asarray(log_density(X, Y), dtype=float)
    if not np.all(np.isfinite(log_p)):
        raise DomainError("❌ log-density is not finite on the 2D grid")
    top = float(np.max(log_p))
    w = np.exp(log_p - top)

    def integrate(values):
        return float(simpson(simpson(values, x=v, axis=1), x=u))

    z = integrate(w)
    mean = np.array([integrate(X * w), integrate(Y * w)]) / z
    dx, dy = X - mean[0], Y - mean[1]
    cov = np.array([[integrate(dx * dx * w), integrate(dx * dy * w)],
                    [integrate(dx * dy * w), integrate(dy * dy * w)]]) / z
    return QuadratureResult2D(log_normalizer=top + math.log(z), mean=mean, cov=cov)


def quadrature_bounds(x_star: float, mu: float) -> Tuple[float, float]:
    """x* +- max(10, sqrt(2 log(1e12) / mu)) / sqrt(mu): truncated mass below 1e-12."""
    half = max(10.0, math.sqrt(2.0 * math.log(1.0 / TAIL_MASS) / mu)) / math.sqrt(mu)
    return x_star - half, x_star + half


## ---- 1D potentials -----------------------------------------------------------

def _logistic_quadratic(x):
    return np.logaddexp(0.0, x) + 0.5 * x * x


def _logistic_quadratic_grad(x):
    return expit(x) + x


def _logcosh(x):
    a = np.abs(x)
    return a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)


def _logcosh_quadratic(x):
    return _logcosh(x) + 0.5 * x * x


def _logcosh_quadratic_grad(x):
    return np.tanh(x) + x


# name -> (value, gradient, L, mu)
POTENTIALS_1D: Dict[str, Tuple[Callable, Callable, float, float]] = {
    "logistic_quadratic": (_logistic_quadratic, _logistic_quadratic_grad, 1.25, 1.0),
    "logcosh_quadratic": (_logcosh_quadratic, _logcosh_quadratic_grad, 2.0, 1.0),
}


def logcosh(x):
    """log cosh(x), overflow-free."""
    return _logcosh(x)


## ---- RGOs ---------------------------------------------------------------------

def zero_rgo(dim: int, counter: Optional[QueryCounter] = None) -> RgoHandle:
    """RGO for g = 0: a Gaussian draw."""
    def sampler(lam, v, rng, tv_tol):
        return v + math.sqrt(lam) * rng.normal(v.shape)

    return RgoHandle(sampler, dim, counter=counter, name="zero",
                     value_fn=lambda x: 0.0, prox_fn=lambda lam, v: v,
                     subgradient_fn=lambda x: np.zeros_like(x))


def _broadcast(value, dim: int) -> np.ndarray:
    out = np.broadcast_to(np.asarray(value, dtype=float), (dim,)).copy()
    return out


def box_rgo(lower, upper, dim: int, counter: Optional[QueryCounter] = None) -> RgoHandle:
    """RGO for the indicator of a box: independent truncated Gaussians per coordinate."""
    lower, upper = _broadcast(lower, dim), _broadcast(upper, dim)
    if np.any(lower >= upper):
        raise ConfigurationError(f"❌ box needs lower < upper, got {lower.tolist()}, {upper.tolist()}")

    def sampler(lam, v, rng, tv_tol):
        return np.array([sample_truncated_gaussian_1d(rng, TruncatedGaussian1D(v[j], lam, lower[j], upper[j]))
                         for j in range(dim)])

    def value(x):
        return 0.0 if np.all((x >= lower) & (x <= upper)) else math.inf

    def subgradient(x):
        return np.zeros_like(x)

    return RgoHandle(sampler, dim, counter=counter, name="box", value_fn=value,
                     prox_fn=lambda lam, v: np.clip(v, lower, upper), subgradient_fn=subgradient)


def soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def l1_rgo(weight: float, dim: int, counter: Optional[QueryCounter] = None) -> RgoHandle:
    """RGO for weight * ||x||_1: per coordinate a two-branch truncated Gaussian mixture."""
    if weight < 0:
        raise ConfigurationError(f"❌ l1 weight must be nonnegative, got {weight}")

    def sampler(lam, v, rng, tv_tol):
        return np.array([sample_l1_quadratic_1d(rng, v[j], lam, weight) for j in range(dim)])

    return RgoHandle(sampler, dim, counter=counter, name="l1",
                     value_fn=lambda x: weight * float(np.sum(np.abs(x))),
                     prox_fn=lambda lam, v: soft_threshold(v, lam * weight),
                     subgradient_fn=lambda x: weight * np.sign(x))


def gaussian_target_rgo(precision: np.ndarray, mean: np.ndarray,
                        counter: Optional[QueryCounter] = None) -> RgoHandle:
    """Exact RGO for the full Gaussian target: exp(-(x-m)^T A (x-m)/2 - ||x-v||^2/(2 lam))."""
    dim = mean.size

    def sampler(lam, v, rng, tv_tol):
        post_precision = precision + np.eye(dim) / lam
        chol = np.linalg.cholesky(post_precision)
        post_mean = np.linalg.solve(post_precision, precision @ mean + v / lam)
        z = rng.normal(dim)
        return post_mean + np.linalg.solve(chol.T, z)

    return RgoHandle(sampler, dim, counter=counter, name="gaussian-target")


def separable_target_rgo(curvatures: np.ndarray, mean: np.ndarray, coordinate_sampler,
                         counter: Optional[QueryCounter] = None, name: str = "target") -> RgoHandle:
    """Exact RGO for sum_j a_j/2 (x_j - m_j)^2 + g_j(x_j) given a 1D RGO per coordinate."""
    dim = mean.size

    def sampler(lam, v, rng, tv_tol):
        out = np.empty(dim)
        for j in range(dim):
            lam_j, v_j = combine_quadratics(1.0 / curvatures[j], mean[j], lam, v[j])
            out[j] = coordinate_sampler(rng, j, float(v_j[0]), lam_j)
        return out

    return RgoHandle(sampler, dim, counter=counter, name=name)


## ---- truth handles ------------------------------------------------------------

@dataclass
class ModelTruth:
    kind: str
    x_star: np.ndarray
    mean: Optional[np.ndarray] = None
    cov: Optional[np.ndarray] = None
    marginals: Optional[List[QuadratureResult]] = None
    marginal_cdfs: Optional[List[Callable]] = None

    @property
    def has_marginals(self) -> bool:
        return self.marginal_cdfs is not None

    def second_moment_about_mode(self) -> Optional[float]:
        """E ||x - x*||^2 under the target."""
        if self.mean is None or self.cov is None:
            return None
        offset = self.mean - self.x_star
        return float(np.trace(self.cov) + offset @ offset)


def _gaussian_marginal_cdfs(mean: np.ndarray, cov: np.ndarray) -> List[Callable]:
    sds = np.sqrt(np.diag(cov))
    return [lambda x, m=m, s=s: norm.cdf(x, loc=m, scale=s) for m, s in zip(mean, sds)]


def _truth_from_marginals(kind: str, x_star: np.ndarray, marginals: List[QuadratureResult]) -> ModelTruth:
    return ModelTruth(kind=kind, x_star=x_star,
                      mean=np.array([q.mean for q in marginals]),
                      cov=np.diag([q.variance for q in marginals]),
                      marginals=marginals,
                      marginal_cdfs=[q.cdf for q in marginals])


class ModelBundle(NamedTuple):
    oracle: Union[FunctionOracle, FiniteSumOracle]
    rgo: Optional[RgoHandle]
    truth: ModelTruth
    target_rgo: Optional[RgoHandle]


def _declared_meta(params: Dict[str, Any], lo: float, hi: float, dim: int) -> ProblemMeta:
    """Declared (L, mu) when given, checked to bracket the true curvature range [lo, hi]."""
    L = float(params.get("L", hi))
    mu = float(params.get("mu", lo))
    if L < hi * (1.0 - 1e-12) or mu > lo * (1.0 + 1e-12):
        raise ConfigurationError(
            f"❌ declared (L={L}, mu={mu}) does not bracket the curvature range [{lo}, {hi}]")
    return ProblemMeta(L, mu, dim)


def _quadratic_parts(spec: ModelSpec):
    d = spec.dim
    curvatures = _broadcast(spec.params.get("curvatures", 1.0), d)
    mean = _broadcast(spec.params.get("mean", 0.0), d)
    if np.any(curvatures <= 0):
        raise ConfigurationError(f"❌ curvatures must be positive, got {curvatures.tolist()}")
    return curvatures, mean


def _separable_quadratic_oracle(curvatures, mean, meta, counter, name) -> FunctionOracle:
    def value(x):
        diff = x - mean
        return 0.5 * float(np.sum(curvatures * diff * diff))

    def gradient(x):
        return curvatures * (x - mean)

    return FunctionOracle(value, meta, gradient_fn=gradient, counter=counter, name=name)


def _build_gaussian(spec: ModelSpec, counter: QueryCounter) -> ModelBundle:
    d = spec.dim
    eig = _broadcast(spec.params.get("eigenvalues", 1.0), d)
    mean = _broadcast(spec.params.get("mean", 0.0), d)
    if np.any(eig <= 0):
        raise ConfigurationError(f"❌ eigenvalues must be positive, got {eig.tolist()}")
    seed = spec.params.get("rotation_seed")
    if seed is None:
        basis = np.eye(d)
    else:
        basis, _ = np.linalg.qr(np.random.default_rng(int(seed)).standard_normal((d, d)))
    precision = basis @ np.diag(eig) @ basis.T
    meta = _declared_meta(spec.params, float(eig.min()), float(eig.max()), d)

    def value(x):
        diff = x - mean
        return 0.5 * float(diff @ precision @ diff)

    def gradient(x):
        return precision @ (x - mean)

    f = FunctionOracle(value, meta, gradient_fn=gradient, counter=counter, name="gaussian")
    cov = np.linalg.inv(precision)
    truth = ModelTruth(kind=spec.kind, x_star=mean.copy(), mean=mean.copy(), cov=cov,
                       marginal_cdfs=_gaussian_marginal_cdfs(mean, cov))
    return ModelBundle(f, zero_rgo(d, counter), truth, gaussian_target_rgo(precision, mean, counter))


def _build_box(spec: ModelSpec, counter: QueryCounter) -> ModelBundle:
    d = spec.dim
    curvatures, mean = _quadratic_parts(spec)
    lower = _broadcast(spec.params.get("lower", -1.0), d)
    upper = _broadcast(spec.params.get("upper", 1.0), d)
    meta = _declared_meta(spec.params, float(curvatures.min()), float(curvatures.max()), d)
    f = _separable_quadratic_oracle(curvatures, mean, meta, counter, "box_gaussian")
    g = box_rgo(lower, upper, d, counter)
    x_star = np.clip(mean, lower, upper)
    marginals = [
        quadrature_moments_1d(lambda x, a=curvatures[j], m=mean[j]: -0.5 * a * (x - m) ** 2,
                              lower[j], upper[j], support=True)
        for j in range(d)
    ]

    def coordinate(rng, j, v, lam):
        return sample_truncated_gaussian_1d(rng, TruncatedGaussian1D(v, lam, lower[j], upper[j]))

    target = separable_target_rgo(curvatures, mean, coordinate, counter, "box-target")
    return ModelBundle(f, g, _truth_from_marginals(spec.kind, x_star, marginals), target)


def _build_lasso(spec: ModelSpec, counter: QueryCounter) -> ModelBundle:
    d = spec.dim
    curvatures, mean = _quadratic_parts(spec)
    weight = float(spec.params.get("l1_weight", 1.0))
    meta = _declared_meta(spec.params, float(curvatures.min()), float(curvatures.max()), d)
    f = _separable_quadratic_oracle(curvatures, mean, meta, counter, "lasso_gaussian")
    g = l1_rgo(weight, d, counter)
    x_star = soft_threshold(mean, weight / curvatures)
    marginals = []
    for j in range(d):
        lo, hi = quadrature_bounds(float(x_star[j]), float(curvatures[j]))
        marginals.append(quadrature_moments_1d(
            lambda x, a=curvatures[j], m=mean[j]: -0.5 * a * (x - m) ** 2 - weight * np.abs(x), lo, hi))

    def coordinate(rng, j, v, lam):
        return sample_l1_quadratic_1d(rng, v, lam, weight)

    target = separable_target_rgo(curvatures, mean, coordinate, counter, "lasso-target")
    return ModelBundle(f, g, _truth_from_marginals(spec.kind, x_star, marginals), target)


def _build_custom_1d(spec: ModelSpec, counter: QueryCounter) -> ModelBundle:
    name = spec.params.get("potential", "logistic_quadratic")
    if name not in POTENTIALS_1D:
        raise ConfigurationError(f"❌ unknown 1D potential '{name}', expected one of {sorted(POTENTIALS_1D)}")
    value_1d, grad_1d, L, mu = POTENTIALS_1D[name]
    center = float(spec.params.get("center", 0.0))
    meta = _declared_meta(spec.params, mu, L, 1)

    def value(x):
        return float(value_1d(x[0] - center))

    def gradient(x):
        return np.array([float(grad_1d(x[0] - center))])

    f = FunctionOracle(value, meta, gradient_fn=gradient, counter=counter, name=name)
    x_star = agd_minimize(FunctionOracle(value, meta, gradient_fn=gradient, name=name), np.zeros(1)).x
    lo, hi = quadrature_bounds(float(x_star[0]), mu)
    marginal = quadrature_moments_1d(lambda x: -value_1d(x - center), lo, hi)
    return ModelBundle(f, zero_rgo(1, counter), _truth_from_marginals(spec.kind, x_star, [marginal]), None)


def _build_quadratic_finitesum(spec: ModelSpec, counter: QueryCounter) -> ModelBundle:
    d = spec.dim
    n = int(spec.params.get("n", 5))
    curvatures = _broadcast(spec.params.get("curvatures", 1.0), d)
    spread = float(spec.params.get("spread", 1.0))
    data_rng = np.random.default_rng(int(spec.params.get("data_seed", 0)))
    centers = spread * data_rng.standard_normal((n, d))
    L, mu = float(curvatures.max()), float(curvatures.min())

    value_fns, gradient_fns = [], []
    for c in centers:
        value_fns.append(lambda x, c=c: 0.5 * float(np.sum(curvatures * (x - c) ** 2)))
        gradient_fns.append(lambda x, c=c: curvatures * (x - c))
    fs = FiniteSumOracle.from_functions(value_fns, gradient_fns, L, mu, d, counter=counter,
                                        name="quadratic_finitesum")
    mean = centers.mean(axis=0)
    cov = np.diag(1.0 / curvatures)
    truth = ModelTruth(kind=spec.kind, x_star=mean.copy(), mean=mean, cov=cov,
                       marginal_cdfs=_gaussian_marginal_cdfs(mean, cov))
    return ModelBundle(fs, None, truth, None)


def logistic_dataset(n: int, d: int, seed: int, scale: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """Features a_i ~ N(0, scale^2 I) and labels b_i in {-1, 1} drawn from a logistic model."""
    data_rng = np.random.default_rng(seed)
    features = scale * data_rng.standard_normal((n, d))
    theta = data_rng.standard_normal(d)
    prob = 1.0 / (1.0 + np.exp(-features @ theta))
    labels = np.where(data_rng.random(n) < prob, 1.0, -1.0)
    return features, labels


def _build_logistic(spec: ModelSpec, counter: QueryCounter) -> ModelBundle:
    d = spec.dim
    n = int(spec.params.get("n", 50))
    ridge = float(spec.params.get("ridge", 1.0))
    features, labels = logistic_dataset(n, d, int(spec.params.get("data_seed", 0)),
                                        float(spec.params.get("scale", 1.0)))
    # per-datum curvature <= ||a_i||^2 / 4, plus the ridge
    L = float(np.max(np.sum(features ** 2, axis=1))) / 4.0 + ridge

    value_fns, gradient_fns = [], []
    for a, b in zip(features, labels):
        value_fns.append(lambda x, a=a, b=b: float(np.logaddexp(0.0, -b * (a @ x))) + 0.5 * ridge * float(x @ x))
        gradient_fns.append(lambda x, a=a, b=b: -b * a * expit(-b * (a @ x)) + ridge * x)
    fs = FiniteSumOracle.from_functions(value_fns, gradient_fns, L, ridge, d, counter=counter,
                                        name="logistic_finitesum")
    reference = FiniteSumOracle.from_functions(value_fns, gradient_fns, L, ridge, d, name="logistic_x_star")
    x_star = svrg_minimize(reference, np.zeros(d), rng=RngStream(MY_CONFIG.DEFAULT_SEED, MY_CONFIG.OPTIMIZER_STREAM)).x
    return ModelBundle(fs, None, ModelTruth(kind=spec.kind, x_star=x_star), None)


_BUILDERS = {
    "gaussian": _build_gaussian,
    "box_gaussian": _build_box,
    "lasso_gaussian": _build_lasso,
    "custom_1d": _build_custom_1d,
    "quadratic_finitesum": _build_quadratic_finitesum,
    "logistic_finitesum": _build_logistic,
}


def build_model(spec: ModelSpec, counter: Optional[QueryCounter] = None) -> ModelBundle:
    """Oracle, RGO for g, truth handle and exact target RGO for one model; all share counter."""
    counter = QueryCounter() if counter is None else counter
    bundle = _BUILDERS[spec.kind](spec, counter)
    logger.debug(f"built {spec.kind} model: L={bundle.oracle.meta.L:.4g}, mu={bundle.oracle.meta.mu:.4g}, d={spec.dim}")
    return bundle


## ---- structural checks --------------------------------------------------------

def check_hessian_bounds(oracle: Union[FunctionOracle, FiniteSumOracle], rng: RngStream,
                         n_points: int = 100, radius: float = 3.0, step: float = 1e-4,
                         center=None) -> Tuple[float, float, bool]:
    """
    Directional curvature range from central differences of the gradient at random
    points, and whether the declared (L, mu) brackets it.
    """
    f = oracle.as_function_oracle() if isinstance(oracle, FiniteSumOracle) else oracle
    d = f.dim
    center = np.zeros(d) if center is None else as_point(center)
    curvatures = []
    for _ in range(n_points):
        x = center + radius * rng.normal(d)
        u = rng.normal(d)
        u /= np.linalg.norm(u)
        diff = f.gradient_fn(x + step * u) - f.gradient_fn(x - step * u)
        curvatures.append(float(np.asarray(diff) @ u) / (2.0 * step))
    lo, hi = min(curvatures), max(curvatures)
    slack = 1e-4
    ok = lo >= f.meta.mu * (1.0 - slack) - 1e-6 and hi <= f.meta.L * (1.0 + slack) + 1e-6
    if not ok:
        logger.warning(f"curvature range [{lo:.4g}, {hi:.4g}] escapes declared [{f.meta.mu:.4g}, {f.meta.L:.4g}]")
    return lo, hi, ok


@dataclass
class NormRatioResult:
    ratio: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.ratio <= self.bound * (1.0 + 1e-8)


def normratio_check(potentials, mu: float, lam: float, x_star=0.0) -> NormRatioResult:
    """
    Integral of exp(-f) over the integral of exp(-f - ||x - x*||^2 / (2 lam)) for a
    separable f (one vectorized 1D potential per coordinate), against
    (1 + 1/(mu lam))^(d/2).
    """
    if callable(potentials):
        potentials = [potentials]
    centers = np.broadcast_to(np.asarray(x_star, dtype=float), (len(potentials),))
    log_ratio = 0.0
    for f_j, c in zip(potentials, centers):
        lo, hi = quadrature_bounds(float(c), mu)
        plain = quadrature_moments_1d(lambda x: -f_j(x), lo, hi)
        penalized = quadrature_moments_1d(lambda x: -f_j(x) - 0.5 * (x - c) ** 2 / lam, lo, hi)
        log_ratio += plain.log_normalizer - penalized.log_normalizer
    bound = (1.0 + 1.0 / (mu * lam)) ** (0.5 * len(potentials))
    return NormRatioResult(ratio=math.exp(log_ratio), bound=bound)


def smoothed_log_partition(f_value: Callable, xs: np.ndarray, eta: float, n_t: int = 801) -> np.ndarray:
    """log of the integral of exp(-f(y) - (y - x)^2 / (2 eta)) dy at every x in xs (1D)."""
    t = np.linspace(-12.0, 12.0, n_t)
    Y = xs[:, None] + math.sqrt(eta) * t[None, :]
    log_w = -f_value(Y) - 0.5 * t[None, :] ** 2
    top = np.max(log_w, axis=1, keepdims=True)
    z = simpson(np.exp(log_w - top), x=t, axis=1)
    return top[:, 0] + np.log(z) + 0.5 * math.log(eta)


@dataclass
class MinPerturbResult:
    deviation: float
    bound: float
    conditions_met: bool

    @property
    def holds(self) -> bool:
        return self.deviation <= self.bound


def minperturb_check(f_value: Callable, L: float, x: float, R: float, eta: float,
                     x_star: float = 0.0, d: int = 1) -> MinPerturbResult:
    """|E[y] - x| under exp(-f(y) - (y - x)^2/(2 eta)) against 2 eta L R."""
    lo, hi = quadrature_bounds(x, 1.0 / eta)
    q = quadrature_moments_1d(lambda y: -f_value(y) - 0.5 * (y - x) ** 2 / eta, lo, hi)
    met = abs(x - x_star) <= R and eta <= min(1.0 / (2.0 * L * L * R * R), R * R / (400.0 * d * d))
    return MinPerturbResult(deviation=abs(q.mean - x), bound=2.0 * eta * L * R, conditions_met=met)


def _joint_marginal_logs(f_value, g_value, L, mu, eta, x_star, n_nodes=None):
    lo, hi = quadrature_bounds(x_star, mu)
    n = max(n_nodes or 0, MY_CONFIG.QUADRATURE_NODES)
    n += 1 - n % 2
    xs = np.linspace(lo, hi, n)
    log_target = -f_value(xs) - g_value(xs)
    log_hat = -g_value(xs) - 0.5 * eta * L * L * (xs - x_star) ** 2 + smoothed_log_partition(f_value, xs, eta)
    return xs, log_target, log_hat


def _log_integral(xs: np.ndarray, log_w: np.ndarray) -> float:
    top = float(np.max(log_w))
    return top + math.log(float(simpson(np.exp(log_w - top), x=xs)))


def normratio_bracket(f_value: Callable, g_value: Callable, L: float, mu: float, eta: float,
                      x_star: float = 0.0) -> Tuple[float, float, float]:
    """(lower, Z_hat / Z, upper) for the joint chain's x-marginal in 1D."""
    xs, log_target, log_hat = _joint_marginal_logs(f_value, g_value, L, mu, eta, x_star)
    ratio = math.exp(_log_integral(xs, log_hat) - _log_integral(xs, log_target))
    lower = math.sqrt(2.0 * math.pi * eta / (1.0 + eta * L)) / math.sqrt(1.0 + eta * L * L / mu)
    upper = math.sqrt(2.0 * math.pi * eta)
    return lower, ratio, upper


def densityratio_sandwich(f_value: Callable, g_value: Callable, L: float, mu: float, eta: float,
                          omega_radius: float, x_star: float = 0.0, n_points: int = 20) -> np.ndarray:
    """Normalized density ratio target / joint x-marginal at n_points inside the radius."""
    xs, log_target, log_hat = _joint_marginal_logs(f_value, g_value, L, mu, eta, x_star)
    shift = _log_integral(xs, log_hat) - _log_integral(xs, log_target)
    grid = np.linspace(x_star - omega_radius, x_star + omega_radius, n_points)
    log_t = -f_value(grid) - g_value(grid)
    log_h = -g_value(grid) - 0.5 * eta * L * L * (grid - x_star) ** 2 + smoothed_log_partition(f_value, grid, eta)
    return np.exp(log_t - log_h + shift)


def theta_reference_1d(f_value: Callable, L: float, eta: float, x: float, x_star: float = 0.0) -> float:
    """Exact expectation of theta at x: sqrt(2 pi eta) exp(-f(x) + eta L^2 (x - x*)^2 / 2) / Z_x."""
    log_zx = float(smoothed_log_partition(f_value, np.array([x]), eta)[0])
    return math.exp(0.5 * math.log(2.0 * math.pi * eta) - float(f_value(np.array([x]))[0])
                    + 0.5 * eta * L * L * (x - x_star) ** 2 - log_zx)


def start_density_ratio_1d(f_value: Callable, g_value: Callable, L: float, mu: float,
                           x_star: float = 0.0, eta: float = 0.0) -> float:
    """
    sup over the grid of the start density over the target density, where the start
    is exp(-((L + eta L^2)/2)(x - x*)^2 - g) and the target the joint x-marginal
    (eta > 0) or exp(-f - g) (eta = 0).
    """
    lo, hi = quadrature_bounds(x_star, mu)
    xs = np.linspace(lo, hi, MY_CONFIG.QUADRATURE_NODES)
    log_start = -0.5 * (L + eta * L * L) * (xs - x_star) ** 2 - g_value(xs)
    if eta > 0:
        log_target = -g_value(xs) - 0.5 * eta * L * L * (xs - x_star) ** 2 + smoothed_log_partition(f_value, xs, eta)
    else:
        log_target = -f_value(xs) - g_value(xs)
    log_ratio = (log_start - _log_integral(xs, log_start)) - (log_target - _log_integral(xs, log_target))
    return math.exp(float(np.max(log_ratio)))


## ---- moment diagnostics -------------------------------------------------------

@dataclass
class MomentCheck:
    name: str
    value: float
    bound: float
    se: float

    @property
    def passed(self) -> bool:
        return self.value <= self.bound + 3.0 * self.se


@dataclass
class MomentReport:
    checks: List[MomentCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> List[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self) -> Dict[str, Any]:
        return {"passed": self.passed,
                "checks": [{"name": c.name, "value": c.value, "bound": c.bound, "se": c.se,
                            "passed": c.passed} for c in self.checks]}


def _mean_check(name: str, values: np.ndarray, bound: float) -> MomentCheck:
    return MomentCheck(name=name, value=float(np.mean(values)), bound=bound,
                       se=float(np.std(values, ddof=1) / math.sqrt(values.size)))


def slc_moment_check(samples: np.ndarray, mu: float, x_star=None, rng: Optional[RngStream] = None,
                     n_directions: int = 10) -> MomentReport:
    """
    Moment bounds every mu-strongly logconcave law satisfies: directional variance
    <= 1/mu, E||x - mean||^4 <= 3 d^2 / mu^2 and E||x - x*||^2 <= d / mu.

    Rows are samples; a 1-D array is read as scalar samples. Fewer than two samples
    give a failed sample_count check.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    n, d = samples.shape
    if n < 2:
        return MomentReport([MomentCheck("sample_count", value=math.nan, bound=2.0, se=0.0)])
    if n < MIN_MOMENT_SAMPLES:
        logger.warning(f"moment checks on {n} samples; their 3 SE margins assume at least {MIN_MOMENT_SAMPLES}")
    rng = RngStream(MY_CONFIG.DEFAULT_SEED) if rng is None else rng
    centered = samples - samples.mean(axis=0)
    report = MomentReport()
    for k in range(n_directions):
        theta = rng.normal(d)
        theta /= np.linalg.norm(theta)
        report.checks.append(_mean_check(f"directional_variance_{k}", (centered @ theta) ** 2, 1.0 / mu))
    sq = np.sum(centered ** 2, axis=1)
    report.checks.append(_mean_check("fourth_moment", sq ** 2, 3.0 * d * d / mu ** 2))
    if x_star is not None:
        offset = samples - as_point(x_star)
        report.checks.append(_mean_check("mode_distance", np.sum(offset ** 2, axis=1), d / mu))
    return report
