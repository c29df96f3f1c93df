"""Transition densities as Poisson mixtures over the number of jumps.

``p(delta, x, y) = sum_i q_i(delta, x, y) * Poisson(i; lambda * delta)`` where
``q_i`` is the density of ``X_delta`` given exactly ``i`` jumps in the interval.
For Gaussian jump laws the jump sizes integrate out analytically: given the
jump times the additive and OU transitions are Gaussian, so only the jump
times remain to be integrated (uniform order statistics).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special, stats

from .errors import AccuracyError, InvalidParameterError, TruncationError, UnsupportedError
from .model import JumpDiffusionModel

__all__ = [
    "AffineGaussianKernel",
    "kernel_for",
    "MixtureDensitySpec",
    "MixtureValue",
    "poisson_truncation",
    "q_i_closed_form",
    "log_q_i",
    "mixture_density",
    "log_mixture_density",
    "q1_chapman_kolmogorov",
    "f_transform_tools",
    "FTransform",
    "gaussian_bound_check",
    "GaussianBoundReport",
    "gaussian_decay_rate",
    "density_curve_csv",
]

_LOG_2PI = math.log(2.0 * math.pi)
_CHUNK = 1 << 21


@lru_cache(maxsize=None)
def _legendre(n):
    return np.polynomial.legendre.leggauss(n)


@lru_cache(maxsize=None)
def _hermite(n):
    nodes, weights = special.roots_hermite(n)
    return nodes, np.log(weights) + nodes**2


def _norm_logpdf(y, mean, var):
    return -0.5 * (_LOG_2PI + np.log(var) + (y - mean) ** 2 / var)


@dataclass(frozen=True)
class AffineGaussianKernel:
    """Jump-free transition ``N(a(t) x + b(t), v(t))`` of a linear SDE.

    ``dX = (slope * X + shift) dt + sigma dB``.
    """

    slope: float
    shift: float
    sigma: float

    def coef(self, t):
        t = np.asarray(t, float)
        if self.slope == 0.0:
            return np.ones_like(t), self.shift * t, self.sigma**2 * t
        a = np.exp(self.slope * t)
        g = np.expm1(self.slope * t) / self.slope
        v = self.sigma**2 * np.expm1(2.0 * self.slope * t) / (2.0 * self.slope)
        return a, self.shift * g, v

    def mean(self, t, x):
        a, b, _ = self.coef(t)
        return a * x + b

    def var(self, t, x=None):
        return self.coef(t)[2]

    def logpdf(self, t, x, y):
        a, b, v = self.coef(t)
        return _norm_logpdf(y, a * x + b, v)

    def pdf(self, t, x, y):
        return np.exp(self.logpdf(t, x, y))


def kernel_for(model: JumpDiffusionModel, theta: float, compensated: bool = True) -> AffineGaussianKernel:
    """Jump-free kernel ``q_0`` of a built-in model (drift includes the compensator by default)."""
    comp = model.compensator_constant if compensated else 0.0
    if model.closed_form == "additive":
        return AffineGaussianKernel(0.0, theta - comp, model.sigma)
    if model.closed_form == "ou":
        if not theta > 0:
            raise InvalidParameterError("OU kernel needs theta > 0")
        return AffineGaussianKernel(-theta, -comp, model.sigma)
    raise UnsupportedError("no closed-form kernel for this model")


def poisson_truncation(lam_delta: float, tail_tol: float = 1e-12) -> int:
    """Smallest ``i_max`` with ``P(N > i_max) < tail_tol`` for ``N ~ Poisson(lam_delta)``."""
    if tail_tol <= 0:
        raise InvalidParameterError("tail_tol must be > 0")
    if lam_delta <= 0:
        return 0
    i = 0
    while stats.poisson.sf(i, lam_delta) >= tail_tol:
        i += 1
    return i


@dataclass(frozen=True)
class MixtureDensitySpec:
    model: JumpDiffusionModel
    i_max: int | None = None  # None: chosen per delta from tail_tol
    tail_tol: float = 1e-12
    time_nodes: int = 16
    mc_draws: int = 10_000
    mc_seed: int = 20240601

    def __post_init__(self):
        if self.model.closed_form == "none":
            raise UnsupportedError("mixture density needs a closed-form model")
        if self.model.intensity > 0 and not self.model.levy.is_gaussian:
            raise UnsupportedError("mixture density supports Gaussian jump laws only")

    def truncation(self, delta) -> int:
        lam_delta = self.model.intensity * delta
        if self.i_max is None:
            return poisson_truncation(lam_delta, self.tail_tol)
        if lam_delta > 0 and stats.poisson.sf(self.i_max, lam_delta) >= self.tail_tol:
            raise TruncationError(f"Poisson tail beyond i_max={self.i_max} exceeds tail_tol={self.tail_tol}")
        return self.i_max


@dataclass
class MixtureValue:
    value: np.ndarray
    truncation_error: float
    weight_sum: float
    i_max: int
    terms: list = field(default_factory=list, repr=False)


def _jump_law(model):
    p = model.levy.params
    return p.get("mean", 0.0), p.get("sd", 0.0)


def q_i_closed_form(model: JumpDiffusionModel, theta, delta, x, y, i):
    """Additive model with N(m, s^2) jumps: density of ``X_delta`` given ``i`` jumps."""
    if model.closed_form != "additive":
        raise UnsupportedError("closed-form q_i is for the additive model")
    return np.exp(log_q_i(model, theta, delta, x, y, i))


def log_q_i(model, theta, delta, x, y, i, time_nodes=16, mc_draws=10_000, mc_seed=20240601):
    if i < 0:
        raise InvalidParameterError("jump count must be >= 0")
    mj, sj = _jump_law(model)
    sigma = model.sigma
    comp = model.compensator_constant
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if model.closed_form == "additive":
        var = sigma**2 * delta + i * sj**2
        if not var > 0:
            raise InvalidParameterError("variance must be positive")
        return _norm_logpdf(y, x + (theta - comp) * delta + i * mj, var)
    if model.closed_form != "ou":
        raise UnsupportedError("no closed-form q_i for this model")
    kern = kernel_for(model, theta)
    a, b, v0 = kern.coef(delta)
    base = a * x + b
    if i == 0:
        return _norm_logpdf(y, base, v0)
    # jump at time tau contributes exp(-theta (delta - tau)) * N(mj, sj^2)
    if i == 1:
        nodes, w = _legendre(time_nodes)
        taus = [0.5 * delta * (nodes + 1.0)]
        logw = np.log(0.5 * w)
    elif i == 2:
        nodes, w = _legendre(time_nodes)
        t = 0.5 * delta * (nodes + 1.0)
        t1, t2 = np.meshgrid(t, t, indexing="ij")
        taus = [t1.ravel(), t2.ravel()]
        logw = np.log(np.outer(0.5 * w, 0.5 * w).ravel())
    else:
        rng = np.random.default_rng([mc_seed, i])
        u = rng.random((i, mc_draws)) * delta
        taus = list(u)
        logw = np.full(mc_draws, -math.log(mc_draws))
    decay = [np.exp(-theta * (delta - t)) for t in taus]
    mean_shift = sum(decay) * mj
    var = v0 + sum(dd**2 for dd in decay) * sj**2
    mean0 = np.broadcast_to(base, np.broadcast_shapes(np.shape(base), y.shape))
    yb = np.broadcast_to(y, mean0.shape)
    flat_y, flat_m = yb.reshape(-1), mean0.reshape(-1)
    out = np.empty(flat_y.shape)
    step = max(1, _CHUNK // logw.size)  # bounds the (points x nodes) work array
    for lo in range(0, flat_y.size, step):
        sl = slice(lo, lo + step)
        lp = _norm_logpdf(flat_y[sl, None], flat_m[sl, None] + mean_shift, var)
        out[sl] = special.logsumexp(lp + logw, axis=-1)
    return out.reshape(yb.shape)


def _min_var_beyond(model, theta, delta, i_max):
    _, sj = _jump_law(model)
    if model.closed_form == "additive":
        return model.sigma**2 * delta + (i_max + 1) * sj**2
    v0 = kernel_for(model, theta).var(delta)
    return float(v0 + (i_max + 1) * math.exp(-2 * theta * delta) * sj**2)


def _mixture_terms(spec, theta, delta, x, y):
    if not 0 < delta <= 1:
        raise InvalidParameterError("delta must lie in (0, 1]")
    model = spec.model
    lam_delta = model.intensity * delta
    i_max = spec.truncation(delta)
    logw = stats.poisson.logpmf(np.arange(i_max + 1), lam_delta) if lam_delta > 0 else np.array([0.0])
    terms = [
        log_q_i(model, theta, delta, x, y, i, spec.time_nodes, spec.mc_draws, spec.mc_seed) for i in range(i_max + 1)
    ]
    tail = float(stats.poisson.sf(i_max, lam_delta)) if lam_delta > 0 else 0.0
    trunc = tail / math.sqrt(2 * math.pi * _min_var_beyond(model, theta, delta, i_max)) if tail > 0 else 0.0
    return logw, terms, tail, trunc, i_max


def log_mixture_density(spec: MixtureDensitySpec, theta, delta, x, y):
    """Log of the truncated mixture, evaluated with log-sum-exp."""
    logw, terms, _, _, _ = _mixture_terms(spec, theta, delta, x, y)
    stacked = np.stack([t + w for t, w in zip(terms, logw)])
    return special.logsumexp(stacked, axis=0)


def mixture_density(spec: MixtureDensitySpec, theta, delta, x, y) -> MixtureValue:
    logw, terms, tail, trunc, i_max = _mixture_terms(spec, theta, delta, x, y)
    qs = [np.exp(t) for t in terms]
    value = sum(q * math.exp(w) for q, w in zip(qs, logw))
    return MixtureValue(
        value=value,
        truncation_error=trunc,
        weight_sum=float(np.exp(logw).sum()),
        i_max=i_max,
        terms=qs,
    )


def q1_chapman_kolmogorov(
    q0,
    jump_map,
    delta,
    x,
    y,
    z,
    time_nodes: int = 16,
    space_nodes: int = 128,
    rtol: float = 1e-6,
    max_doublings: int = 4,
):
    """Density of ``X_delta`` given one jump of size ``z`` at a uniform time.

    ``(1/delta) int_0^delta int q0(t, x, v) q0(delta - t, v + c(v, z), y) dv dt``
    with Gauss-Legendre in time and Gauss-Hermite in space, centered on the
    Gaussian product of the two kernel factors. ``q0`` must be an
    :class:`AffineGaussianKernel` (or expose ``coef``, ``mean``, ``var``,
    ``logpdf``). Time nodes are doubled until the relative change is below
    ``rtol``.
    """
    x = float(x)
    y_arr = np.asarray(y, float)
    z = float(z)
    xi, logw_h = _hermite(space_nodes)

    def evaluate(nt):
        nodes, w = _legendre(nt)
        t = 0.5 * delta * (nodes + 1.0)
        s = delta - t
        m1 = q0.mean(t, x)
        v1 = q0.var(t)
        a2, b2, v2 = q0.coef(s)
        shift = np.asarray(jump_map(m1, z), float)
        yy = y_arr[..., None]
        c2 = (yy - b2) / a2 - shift
        s2 = v2 / a2**2
        prec = 1.0 / v1 + 1.0 / s2
        center = (m1 / v1 + c2 / s2) / prec
        scale = np.sqrt(1.0 / prec)
        v = center[..., None] + math.sqrt(2.0) * scale[..., None] * xi
        tt = t[:, None]
        log_f = q0.logpdf(tt, x, v) + q0.logpdf((delta - tt), v + np.asarray(jump_map(v, z), float), yy[..., None])
        inner = special.logsumexp(log_f + logw_h, axis=-1) + np.log(math.sqrt(2.0) * scale)
        return np.sum(0.5 * w * np.exp(inner), axis=-1)

    nt = time_nodes
    prev = evaluate(nt)
    for _ in range(max_doublings):
        nt *= 2
        cur = evaluate(nt)
        denom = np.maximum(np.abs(cur), np.finfo(float).tiny)
        if np.all(np.abs(cur - prev) / denom <= rtol):
            return cur
        prev = cur
    raise AccuracyError(f"Chapman-Kolmogorov quadrature did not converge to rtol={rtol} with {nt} time nodes")


@dataclass(frozen=True)
class FTransform:
    f: np.ndarray
    grad: np.ndarray
    det: float


def f_transform_tools(x) -> FTransform:
    """Bounded chart ``f(x) = x / sqrt(1 + |x|^2)``, its Jacobian and determinant."""
    x = np.atleast_1d(np.asarray(x, float))
    d = x.shape[0]
    r2 = float(x @ x)
    f = x / math.sqrt(1.0 + r2)
    grad = ((1.0 + r2) * np.eye(d) - np.outer(x, x)) / (1.0 + r2) ** 1.5
    return FTransform(f=f, grad=grad, det=(1.0 + r2) ** (-d / 2.0 - 1.0))


@dataclass
class GaussianBoundReport:
    deltas: np.ndarray
    y: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    c: float
    C: float

    @property
    def ok(self) -> np.ndarray:
        # equality holds at y = x for zero drift, so allow rounding
        return self.lhs <= self.rhs * (1.0 + 1e-12)

    @property
    def violations(self) -> int:
        return int((~self.ok).sum())


def gaussian_bound_check(model, theta, deltas, x, y_grid) -> GaussianBoundReport:
    """Check ``q0(delta, x, y) <= C delta^{-1/2} exp(-|y - x|^2 / (c delta))`` on a grid.

    Uses the admissible pair ``c = 4 sigma^2`` and
    ``C = (2 pi sigma^2)^{-1/2} exp(L^2 / (2 sigma^2))`` with ``L`` the drift
    bound of the additive model, obtained from ``(r - a)^2 >= r^2 / 2 - a^2``.
    """
    if model.closed_form != "additive":
        raise UnsupportedError("explicit Gaussian bound is available for the additive model")
    sigma = model.sigma
    L = abs(theta - model.compensator_constant)
    c = 4.0 * sigma**2
    C = math.exp(L**2 / (2 * sigma**2)) / math.sqrt(2 * math.pi * sigma**2)
    D, Y = np.meshgrid(np.asarray(deltas, float), np.asarray(y_grid, float), indexing="ij")
    kern = kernel_for(model, theta)
    lhs = kern.pdf(D, x, Y)
    rhs = C / np.sqrt(D) * np.exp(-((Y - x) ** 2) / (c * D))
    return GaussianBoundReport(deltas=D, y=Y, lhs=lhs, rhs=rhs, c=c, C=C)


def gaussian_decay_rate(model, theta, x, y, deltas=(0.1, 0.05, 0.025)) -> float:
    """Fitted ``kappa`` in ``log q0 + log(delta)/2 ~ a - kappa |y - x|^2 / delta``."""
    deltas = np.asarray(deltas, float)
    kern = kernel_for(model, theta)
    lhs = kern.logpdf(deltas, x, y) + 0.5 * np.log(deltas)
    slope = np.polyfit(1.0 / deltas, lhs, 1)[0]
    return float(-slope / (y - x) ** 2)


def density_curve_csv(y, p, truncation_error, path=None) -> str:
    buf = io.StringIO()
    buf.write("y,p,truncation_error\n")
    te = np.broadcast_to(np.asarray(truncation_error, float), np.shape(y))
    for yy, pp, ee in zip(np.asarray(y, float), np.asarray(p, float), te):
        buf.write(f"{repr(float(yy))},{repr(float(pp))},{repr(float(ee))}\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text
