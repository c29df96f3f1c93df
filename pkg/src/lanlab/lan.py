"""Log-likelihood-ratio statistics, expansion remainders and Fisher information.

All statistics compare the local alternative ``theta_n = theta0 + u / sqrt(n delta_n)``
with ``theta0`` on one observed path. The main term uses the latent Brownian
increments, the quasi-LLR uses only observed increments, and the exact LLR
uses the Poisson-mixture transition density.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .density import MixtureDensitySpec, log_mixture_density
from .errors import EllipticityError, NumericError, PreconditionError, UnsupportedError, InvalidParameterError
from .model import JumpDiffusionModel, ParameterContext, probe_assumptions
from .simulate import ObservationRecord

__all__ = [
    "LanSample",
    "FisherInfo",
    "REMAINDER_KEYS",
    "default_threshold",
    "main_term_sum",
    "quasi_llr",
    "exact_llr",
    "remainder_arrays",
    "remainder_components",
    "shift_to_start",
    "ou_r1_quadrature",
    "fisher_closed_form",
    "fisher_ergodic",
    "lan_samples_csv",
]

REMAINDER_KEYS = ("R1", "R2", "R3", "R4", "R5", "R6", "Z4", "Z5", "Z6")
THRESHOLD_MULTIPLIER = 4.0


@lru_cache(maxsize=None)
def _unit_legendre(nodes):
    x, w = np.polynomial.legendre.leggauss(nodes)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass
class LanSample:
    quasi_llr: float
    main_term: float | None
    context: ParameterContext
    exact_llr: float | None = None
    remainders: dict | None = None

    def remainder_sums(self) -> dict:
        if self.remainders is None:
            return {key: float("nan") for key in REMAINDER_KEYS[:6]}
        return {key: float(np.sum(self.remainders[key])) for key in REMAINDER_KEYS[:6]}


@dataclass(frozen=True)
class FisherInfo:
    gamma: float
    method: str  # "closed_form" or "ergodic_average"
    n_used: int | None = None
    horizon: float | None = None

    def __post_init__(self):
        if not self.gamma > 0:
            raise InvalidParameterError(f"Fisher information must be > 0, got {self.gamma}")


def _precision(model, x):
    """``(sigma sigma^*)^{-1}`` at states ``x`` of shape ``(..., d)``."""
    s = np.asarray(model.diffusion(x), float)
    a = s @ np.swapaxes(s, -1, -2)
    eig = np.linalg.eigvalsh(a)
    bad = ~(eig.min(axis=-1) > 0)
    if np.any(bad):
        k = int(np.argmax(bad.reshape(-1)))
        raise EllipticityError(f"sigma sigma^* is singular at observation index {k}")
    return np.linalg.inv(a)


def _quad(v, p, w):
    """Row-wise ``v^T p w``."""
    return np.einsum("...i,...ij,...j->...", v, p, w)


def default_threshold(model: JumpDiffusionModel, delta: float, sigma_max: float | None = None) -> float:
    """Jump-filter cutoff ``r = 4 sigma_max sqrt(delta)``.

    ``sigma_max`` falls back on the model's diffusion bound and then on an
    ellipticity probe of the diffusion coefficient.
    """
    if sigma_max is None:
        sigma_max = model.diffusion_bound
    if sigma_max is None:
        sigma_max = probe_assumptions(model, psi_v=np.array([]), psi_z=np.array([])).sigma_max
    return THRESHOLD_MULTIPLIER * float(sigma_max) * math.sqrt(delta)


def main_term_sum(record: ObservationRecord, model: JumpDiffusionModel, ctx: ParameterContext, nodes: int = 16) -> float:
    """``sum_k xi_{k,n}`` with the ``ell``-integral by Gauss-Legendre."""
    if record.latent is None:
        raise PreconditionError("main term needs the latent Brownian increments (retain_latent=True)")
    if ctx.u == 0:
        return 0.0
    x = record.values[:-1]
    dB = record.latent.dB
    delta = record.delta_n
    prec = _precision(model, x)
    sig = np.asarray(model.diffusion(x), float)
    gauss = np.einsum("kij,kj->ki", sig, dB)
    b0 = model.drift(ctx.theta0, x)
    ell, w = _unit_legendre(nodes)
    total = 0.0
    for l, wl in zip(ell, w):
        th = float(ctx.theta_of(l))
        g = model.drift_theta_deriv(th, x)
        inc = gauss + (b0 - model.drift(th, x)) * delta
        total += wl * _quad(g, prec, inc).sum()
    return float(ctx.u / ctx.rate * total)


def quasi_llr(
    record: ObservationRecord,
    model: JumpDiffusionModel,
    ctx: ParameterContext,
    jump_threshold: float | None = None,
) -> float:
    """Gaussian (Euler) log-likelihood ratio of ``theta_n`` against ``theta0``.

    Increments with ``|dX_k| > jump_threshold`` are dropped when a threshold is given.
    """
    if not np.all(np.isfinite(record.values)):
        raise NumericError("record contains non-finite values")
    if ctx.u == 0:
        return 0.0
    x = record.values[:-1]
    dx = record.increments
    delta = record.delta_n
    prec = _precision(model, x)
    r0 = dx - model.drift(ctx.theta0, x) * delta
    r1 = dx - model.drift(ctx.theta_n, x) * delta
    terms = (_quad(r0, prec, r0) - _quad(r1, prec, r1)) / (2.0 * delta)
    if jump_threshold is not None:
        terms = np.where(np.linalg.norm(dx, axis=1) <= jump_threshold, terms, 0.0)
    return float(terms.sum())


def exact_llr(record: ObservationRecord, spec: MixtureDensitySpec, ctx: ParameterContext) -> float:
    """``sum_k log p^{theta_n} / p^{theta0}`` with the Poisson-mixture density in log space."""
    if spec.model.closed_form != "additive":
        raise UnsupportedError("exact LLR is available for the additive model only")
    if ctx.u == 0:
        return 0.0
    x = record.values[:-1, 0]
    y = record.values[1:, 0]
    delta = record.delta_n
    l1 = log_mixture_density(spec, ctx.theta_n, delta, x, y)
    l0 = log_mixture_density(spec, ctx.theta0, delta, x, y)
    bad = ~(np.isfinite(l1) & np.isfinite(l0))
    if np.any(bad):
        k = int(np.argmax(bad))
        raise NumericError(f"transition density underflowed at observation index {k}", k=k)
    return float(np.sum(l1 - l0))


# --- remainder terms ----------------------------------------------------------


def _trapezoid(values, h):
    """Composite trapezoid along axis 1 of ``(n, m + 1, ...)`` samples."""
    return h * (0.5 * values[:, 0] + values[:, 1:-1].sum(axis=1) + 0.5 * values[:, -1])


def _jump_sums(model, fine, n, m, delta, interval, times, sizes):
    """Per-interval ``sum c(Y_{tau-}, z)`` using the left sub-grid point of each jump."""
    d = fine.shape[-1]
    out = np.zeros((n, d))
    if interval.size == 0:
        return out
    h = delta / m
    offset = times - interval * delta
    step = np.clip((offset / h).astype(np.int64), 0, m - 1)
    pre = fine[interval, step]
    np.add.at(out, interval, model.jump_coeff(pre, sizes))
    return out


def _core(model, theta, theta0, fine, dW, jumps, delta):
    """Remainder arrays from a fine sub-grid ``fine`` of shape ``(n, m + 1, d)``."""
    n, mp1, d = fine.shape
    m = mp1 - 1
    h = delta / m
    x = fine[:, 0]
    prec = _precision(model, x)
    sig_k = np.asarray(model.diffusion(x), float)
    sig_fine = np.asarray(model.diffusion(fine), float)
    g = model.drift_theta_deriv(theta, x)
    vec = delta * np.einsum("ki,kij->kj", g, prec)
    jump_part = _jump_sums(model, fine, n, m, delta, *jumps)
    comp = _trapezoid(np.asarray(model.jump_compensator(fine), float).reshape(n, mp1, -1), h)
    mart = jump_part - comp
    dsig = np.einsum("kjab,kjb->ka", sig_fine[:, :-1] - sig_k[:, None], dW)

    out = {}
    for label, th in (("R", theta), ("Z", theta0)):
        drift_diff = model.drift(th, fine) - model.drift(th, x)[:, None]
        out[label + "4"] = np.einsum("ki,ki->k", vec, _trapezoid(drift_diff, h))
        out[label + "5"] = np.einsum("ki,ki->k", vec, dsig)
        out[label + "6"] = np.einsum("ki,ki->k", vec, mart)

    if model.closed_form == "additive":
        for key in ("R1", "R2", "R3", "R4", "R5", "Z4", "Z5"):
            out[key] = np.zeros(n)
    elif model.closed_form == "ou":
        if d != 1:
            raise UnsupportedError("OU remainders are implemented for d = 1")
        sigma = model.sigma
        y = fine[..., 0]
        s = h * np.arange(mp1)
        grow = np.exp(theta * s)
        f = -grow * y  # (grad_x Y_s)^{-1} d_theta b(theta, Y_s)
        w = dW[..., 0]
        out["R1"] = np.full(n, -0.5 * delta**2)
        out["R2"] = _trapezoid(f, h) * ((1.0 / grow[:-1] - 1.0) * w).sum(axis=1) / sigma
        out["R3"] = _trapezoid(f + y[:, :1], h) * w.sum(axis=1) / sigma
    return out


def _fine_data(record):
    lat = record.latent
    if lat is None or not lat.has_fine:
        raise PreconditionError("remainders need a retained fine path (simulate with fine=True)")
    return lat.fine_values, lat.fine_dW, (lat.jump_interval, lat.jump_times, lat.jump_sizes)


def remainder_arrays(
    record: ObservationRecord,
    model: JumpDiffusionModel,
    theta: float,
    theta0: float | None = None,
    strict: bool = True,
) -> dict:
    """All remainder components as arrays over the observation intervals.

    ``R*`` terms use ``theta`` and ``Z*`` terms ``theta0`` (default: the
    parameter the record was simulated under), both on the recorded path.
    R1-R3 need the OU or additive closed forms; for other models an
    :class:`UnsupportedError` is raised whose ``partial`` attribute holds the
    remaining components, or with ``strict=False`` they are returned alone.
    """
    theta0 = record.theta if theta0 is None else theta0
    if theta0 is None:
        raise PreconditionError("theta0 is unknown for this record")
    fine, dW, jumps = _fine_data(record)
    out = _core(model, theta, theta0, fine, dW, jumps, record.delta_n)
    if model.closed_form == "none" and strict:
        err = UnsupportedError("R1-R3 need the additive or OU closed form")
        err.partial = out
        raise err
    return out


def remainder_components(record, model, theta, k, theta0=None, strict=True) -> dict:
    """Remainder components of interval ``k`` as a map of floats."""
    if not 0 <= k < record.n:
        raise InvalidParameterError(f"interval index {k} outside [0, {record.n})")
    arrays = remainder_arrays(record, model, theta, theta0, strict)
    return {key: float(val[k]) for key, val in arrays.items()}


def shift_to_start(record: ObservationRecord, model: JumpDiffusionModel, theta: float, x: float) -> ObservationRecord:
    """Re-anchor every interval of a fine record at the common start ``x``.

    The built-in flows are affine in the initial value, so adding
    ``e^{-theta (s - t_k)} (x - X_{t_k})`` (OU) or ``x - X_{t_k}`` (additive)
    to the sub-grid path turns the intervals into independent transitions
    from ``x`` driven by the same noise and jumps.
    """
    fine, _, _ = _fine_data(record)
    n, mp1, _ = fine.shape
    h = record.delta_n / (mp1 - 1)
    if model.closed_form == "ou":
        decay = np.exp(-theta * h * np.arange(mp1))
    elif model.closed_form == "additive":
        decay = np.ones(mp1)
    else:
        raise UnsupportedError("re-anchoring needs an affine closed-form flow")
    shifted = fine + (x - fine[:, :1]) * decay[None, :, None]
    lat = record.latent
    new_lat = type(lat)(**{**lat.__dict__, "fine_values": shifted})
    values = np.concatenate([shifted[:, 0], shifted[-1:, -1]])
    return ObservationRecord(x0=shifted[0, 0], delta_n=record.delta_n, n=n, values=values, theta=record.theta, latent=new_lat)


def ou_r1_quadrature(theta: float, sigma: float, delta: float, nodes: int = 32) -> float:
    """OU ``R1`` from its double-integral definition by tensor Gauss-Legendre.

    Integrand ``D_s[(grad Y_u)^{-1} d_theta b(Y_u)] sigma^{-1} grad Y_s`` on ``s < u``
    with ``D_s Y_u = sigma e^{-theta (u - s)}`` and ``grad Y_s = e^{-theta s}``.
    """
    t, w = _unit_legendre(nodes)
    total = 0.0
    for s, ws in zip(delta * t, delta * w):
        u = s + (delta - s) * t
        wu = (delta - s) * w
        d_inner = -np.exp(theta * u) * sigma * np.exp(-theta * (u - s))
        total += ws * np.sum(wu * d_inner / sigma * math.exp(-theta * s))
    return float(total)


# --- Fisher information -----------------------------------------------------------


def fisher_closed_form(model: JumpDiffusionModel, theta0: float) -> FisherInfo:
    if model.closed_form == "additive":
        return FisherInfo(1.0 / model.sigma**2, "closed_form")
    if model.closed_form == "ou":
        if not theta0 > 0:
            raise InvalidParameterError("OU Fisher information needs theta0 > 0")
        jump = model.intensity * model.levy.jump_second_moment / model.sigma**2
        return FisherInfo((1.0 + jump) / (2.0 * theta0), "closed_form")
    raise UnsupportedError("no closed-form Fisher information for this model")


def fisher_ergodic(record: ObservationRecord, model: JumpDiffusionModel, theta0: float) -> FisherInfo:
    """Time average of ``(d_theta b)^* (sigma sigma^*)^{-1} d_theta b`` along the path."""
    x = record.values[:-1]
    g = model.drift_theta_deriv(theta0, x)
    gamma = float(np.mean(_quad(g, _precision(model, x), g)))
    return FisherInfo(gamma, "ergodic_average", n_used=record.n, horizon=record.n * record.delta_n)


def lan_samples_csv(samples, path=None) -> str:
    """CSV with columns ``rep, exact_llr, quasi_llr, main_term, R1..R6`` (remainder sums)."""

    def fmt(v):
        return "" if v is None else repr(float(v))

    buf = io.StringIO()
    buf.write("rep,exact_llr,quasi_llr,main_term," + ",".join(REMAINDER_KEYS[:6]) + "\n")
    for rep, s in enumerate(samples):
        sums = s.remainder_sums() if s.remainders is not None else {}
        row = [str(rep), fmt(s.exact_llr), fmt(s.quasi_llr), fmt(s.main_term)]
        row += [fmt(sums.get(key)) for key in REMAINDER_KEYS[:6]]
        buf.write(",".join(row) + "\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text
