"""Discrete high-frequency observation of jump-diffusions.

Two schemes share the same randomness layout: per coarse interval a Poisson
jump count, uniform jump times, i.i.d. jump sizes and Gaussian increments.

* ``exact_closed_form`` (additive and OU built-ins) samples the transition in
  closed form. When a fine sub-grid is requested the Gaussian part is drawn
  jointly with the Brownian increments on that grid, so the coarse values, the
  fine path and ``dB`` are exactly consistent.
* ``euler`` runs Euler-Maruyama on ``substeps_per_interval`` sub-steps and
  steps exactly to each jump time before applying ``c(X-, z)``.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .errors import InvalidParameterError, SimulationDivergedError, UnsupportedError
from .model import JumpDiffusionModel, ParameterContext

__all__ = [
    "SimulationScheme",
    "LatentPath",
    "ObservationRecord",
    "simulate_grid",
    "simulate_endpoints",
    "euler_vs_exact_check",
    "WeakErrorReport",
    "FINE_POINTS",
]

FINE_POINTS = 64
_SIDECAR_MAGIC = b"LANLAT01"


@dataclass(frozen=True)
class SimulationScheme:
    method: str = "exact_closed_form"
    substeps_per_interval: int = 8
    fine_points: int = FINE_POINTS

    def __post_init__(self):
        if self.method not in ("euler", "exact_closed_form"):
            raise InvalidParameterError(f"unknown method {self.method!r}")
        if self.substeps_per_interval < 1 or self.fine_points < 1:
            raise InvalidParameterError("substeps_per_interval and fine_points must be >= 1")

    def check(self, model: JumpDiffusionModel):
        if self.method == "exact_closed_form" and model.closed_form == "none":
            raise UnsupportedError("exact simulation needs a closed-form model")


@dataclass
class LatentPath:
    """Simulator-side randomness of one path.

    ``fine_values[k]`` holds the path on the sub-grid of interval ``k``
    (endpoints included) and ``fine_dW[k]`` the Brownian increments between
    consecutive sub-grid points.
    """

    dB: np.ndarray
    jump_counts: np.ndarray
    jump_interval: np.ndarray
    jump_times: np.ndarray
    jump_sizes: np.ndarray
    jump_increments: np.ndarray
    fine_values: np.ndarray | None = None
    fine_dW: np.ndarray | None = None

    @property
    def has_fine(self) -> bool:
        return self.fine_values is not None


@dataclass
class ObservationRecord:
    x0: np.ndarray
    delta_n: float
    n: int
    values: np.ndarray
    theta: float | None = None
    latent: LatentPath | None = None

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.delta_n * np.arange(self.n + 1)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)

    # ---- CSV -----------------------------------------------------------
    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        cols = ",".join(f"x_{i + 1}" for i in range(self.dim))
        buf.write(f"k,t,{cols}\n")
        for k in range(self.n + 1):
            xs = ",".join(repr(float(v)) for v in self.values[k])
            buf.write(f"{k},{repr(float(k * self.delta_n))},{xs}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "ObservationRecord":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        values = data[:, 2:]
        n = values.shape[0] - 1
        delta = float(data[1, 1]) if n >= 1 else 1.0
        return cls(x0=values[0].copy(), delta_n=delta, n=n, values=values)

    # ---- binary latent sidecar ------------------------------------------
    def write_latent(self, path):
        """Write the latent sidecar.

        Layout, all little-endian::

            magic   8 bytes  b"LANLAT01"
            d       uint32
            n       uint32
            delta_n float64
            m       uint32   fine sub-grid intervals, 0 when absent
            per interval k = 0..n-1:
                dB_k          float64[d]
                K_k           uint32
                K_k records:  time float64, size float64[d], increment float64[d]
                if m > 0:     fine values float64[(m+1)*d], fine dW float64[m*d]
        """
        lat = self.latent
        if lat is None:
            raise InvalidParameterError("record has no latent data")
        d, n = self.dim, self.n
        m = lat.fine_dW.shape[1] if lat.has_fine else 0
        starts = np.concatenate([[0], np.cumsum(lat.jump_counts)])
        with open(path, "wb") as fh:
            fh.write(_SIDECAR_MAGIC)
            fh.write(struct.pack("<IIdI", d, n, float(self.delta_n), m))
            for k in range(n):
                fh.write(np.asarray(lat.dB[k], "<f8").tobytes())
                a, b = starts[k], starts[k + 1]
                fh.write(struct.pack("<I", int(b - a)))
                for j in range(a, b):
                    fh.write(struct.pack("<d", float(lat.jump_times[j])))
                    fh.write(np.asarray(lat.jump_sizes[j], "<f8").tobytes())
                    fh.write(np.asarray(lat.jump_increments[j], "<f8").tobytes())
                if m:
                    fh.write(np.asarray(lat.fine_values[k], "<f8").tobytes())
                    fh.write(np.asarray(lat.fine_dW[k], "<f8").tobytes())

    @staticmethod
    def read_latent(path) -> tuple[dict, LatentPath]:
        with open(path, "rb") as fh:
            raw = fh.read()
        if raw[:8] != _SIDECAR_MAGIC:
            raise InvalidParameterError("not a latent sidecar file")
        d, n, delta, m = struct.unpack_from("<IIdI", raw, 8)
        off = 8 + struct.calcsize("<IIdI")

        def take(count):
            nonlocal off
            arr = np.frombuffer(raw, "<f8", count, off).astype(float)
            off += 8 * count
            return arr

        dB = np.empty((n, d))
        counts = np.empty(n, int)
        times, sizes, incs, fv, fw = [], [], [], [], []
        for k in range(n):
            dB[k] = take(d)
            (kk,) = struct.unpack_from("<I", raw, off)
            off += 4
            counts[k] = kk
            for _ in range(kk):
                times.append(take(1)[0])
                sizes.append(take(d))
                incs.append(take(d))
            if m:
                fv.append(take((m + 1) * d).reshape(m + 1, d))
                fw.append(take(m * d).reshape(m, d))
        latent = LatentPath(
            dB=dB,
            jump_counts=counts,
            jump_interval=np.repeat(np.arange(n), counts),
            jump_times=np.array(times, float),
            jump_sizes=np.array(sizes, float).reshape(-1, d),
            jump_increments=np.array(incs, float).reshape(-1, d),
            fine_values=np.array(fv) if m else None,
            fine_dW=np.array(fw) if m else None,
        )
        return {"d": d, "n": n, "delta_n": delta, "m": m}, latent


# --- exact closed-form scheme ------------------------------------------------


def _ou_fine_coefficients(theta, h):
    a = math.exp(-theta * h)
    cov = -math.expm1(-theta * h) / theta  # Cov(I, dW)
    var_i = -math.expm1(-2.0 * theta * h) / (2.0 * theta)
    resid = max(var_i - cov * cov / h, 0.0)
    return a, cov, var_i, resid


def _draw_jumps(model, delta, n, rng):
    lam = model.intensity
    counts = rng.poisson(lam * delta, n) if lam > 0 else np.zeros(n, dtype=np.int64)
    total = int(counts.sum())
    interval = np.repeat(np.arange(n), counts)
    offsets = rng.random(total) * delta
    order = np.lexsort((offsets, interval))
    offsets = offsets[order]
    sizes = model.levy.sample(rng, total)
    return counts, interval, offsets, sizes


def _exact_path(model, theta, x0, delta, n, m, rng, retain):
    kind = model.closed_form
    if kind == "ou" and not theta > 0:
        raise InvalidParameterError("exact OU simulation needs theta > 0")
    sigma = model.sigma
    comp = model.compensator_constant
    h = delta / m
    counts, interval, offsets, sizes = _draw_jumps(model, delta, n, rng)
    xi = rng.standard_normal((n * m, 2 if kind == "ou" else 1))
    dW = math.sqrt(h) * xi[:, 0]

    fine_step = np.minimum((offsets / h).astype(np.int64), m - 1)
    step_index = interval * m + fine_step
    z = sizes[:, 0]
    if kind == "ou":
        a, cov, _, resid = _ou_fine_coefficients(theta, h)
        gauss = sigma * (cov / h * dW + math.sqrt(resid) * xi[:, 1])
        tail = h * (fine_step + 1) - offsets  # time from jump to end of its fine step
        jump_contrib = np.exp(-theta * tail) * z
        drift_part = -comp * (1.0 - a) / theta
    else:
        a = 1.0
        gauss = sigma * dW
        jump_contrib = z
        drift_part = (theta - comp) * h
    e = gauss + drift_part
    np.add.at(e, step_index, jump_contrib)

    x0f = float(np.asarray(x0, float).reshape(-1)[0])
    path = np.empty(n * m + 1)
    path[0] = x0f
    if kind == "ou":
        path[1:], _ = signal.lfilter([1.0], [1.0, -a], e, zi=[a * x0f])
    else:
        path[1:] = x0f + np.cumsum(e)

    values = path[::m].reshape(n + 1, 1)
    _check_finite(values)
    latent = None
    if retain:
        fine_values = fine_dW = None
        if m > 1:
            fine_values = np.lib.stride_tricks.sliding_window_view(path, m + 1)[::m].copy()[..., None]
            fine_dW = dW.reshape(n, m, 1)
        latent = LatentPath(
            dB=dW.reshape(n, m).sum(axis=1)[:, None],
            jump_counts=counts,
            jump_interval=interval,
            jump_times=interval * delta + offsets,
            jump_sizes=sizes,
            jump_increments=sizes.copy(),
            fine_values=fine_values,
            fine_dW=fine_dW,
        )
    return values, latent


def _check_finite(values):
    bad = ~np.isfinite(values).all(axis=-1)
    if bad.any():
        k = int(np.argmax(bad))
        raise SimulationDivergedError(f"non-finite state at observation index {k}", step=k)


# --- Euler-Maruyama scheme ----------------------------------------------------


def _euler_batch(model, theta, x0, delta, n, substeps, rng, retain=False):
    """Euler-Maruyama for a batch of ``R`` paths; ``x0`` has shape ``(R, d)``."""
    x = np.array(x0, float, copy=True)
    R, d = x.shape
    lam = model.intensity
    h = delta / substeps
    grid = h * np.arange(1, substeps + 1)
    values = np.empty((n + 1, R, d))
    values[0] = x
    if retain:
        dB = np.zeros((n, R, d))
        fine_values = np.empty((n, R, substeps + 1, d))
        fine_dW = np.zeros((n, R, substeps, d))
        counts_all, jt, js, ji, jint = [], [], [], [], []

    for k in range(n):
        counts = rng.poisson(lam * delta, R) if lam > 0 else np.zeros(R, dtype=np.int64)
        kmax = int(counts.max()) if R else 0
        offsets = rng.random((R, kmax)) * delta
        valid = np.arange(kmax)[None, :] < counts[:, None]
        offsets = np.where(valid, np.sort(np.where(valid, offsets, np.inf), axis=1), delta)
        sizes = model.levy.sample(rng, R * kmax).reshape(R, kmax, d)
        xi = rng.standard_normal((R, substeps + kmax, d))

        times = np.concatenate([np.broadcast_to(grid, (R, substeps)), offsets], axis=1)
        is_jump = np.concatenate([np.zeros((R, substeps), bool), valid], axis=1)
        order = np.argsort(times, axis=1, kind="stable")
        times = np.take_along_axis(times, order, axis=1)
        is_jump = np.take_along_axis(is_jump, order, axis=1)
        jump_slot = np.clip(order - substeps, 0, max(kmax - 1, 0))
        grid_slot = np.cumsum(~is_jump, axis=1)  # sub-grid points reached so far

        if retain:
            fine_values[k, :, 0] = x
            ev_t, ev_z, ev_c = [[] for _ in range(R)], [[] for _ in range(R)], [[] for _ in range(R)]
        t_prev = np.zeros(R)
        for col in range(substeps + kmax):
            dt = times[:, col] - t_prev
            t_prev = times[:, col]
            sq = np.sqrt(dt)[:, None]
            dw = sq * xi[:, col]
            b = model.drift(theta, x) - model.jump_compensator(x)
            x = x + b * dt[:, None] + np.einsum("rij,rj->ri", model.diffusion(x), dw)
            jumping = is_jump[:, col]
            if retain:
                gs = np.minimum(grid_slot[:, col] - (~is_jump[:, col]), substeps - 1)
                fine_dW[k, np.arange(R), gs] += dw
                dB[k] += dw
            if jumping.any():
                rows = np.flatnonzero(jumping)
                z = sizes[rows, jump_slot[rows, col]]
                inc = model.jump_coeff(x[rows], z)
                if retain:
                    for r, zz, cc in zip(rows, z, inc):
                        ev_t[r].append(k * delta + times[r, col])
                        ev_z[r].append(zz)
                        ev_c[r].append(cc)
                x = x.copy()
                x[rows] = x[rows] + inc
            if retain:
                on_grid = ~is_jump[:, col]
                if on_grid.any():
                    rows = np.flatnonzero(on_grid)
                    fine_values[k, rows, grid_slot[rows, col]] = x[rows]
        values[k + 1] = x
        if retain:
            counts_all.append(counts)
            for r in range(R):
                jt.append(ev_t[r])
                js.append(ev_z[r])
                ji.append(ev_c[r])
                jint.append([k] * len(ev_t[r]))
    bad = ~np.isfinite(values).all(axis=(1, 2))
    if bad.any():
        k = int(np.argmax(bad))
        raise SimulationDivergedError(f"non-finite state at observation index {k}", step=k)
    if not retain:
        return values, None
    return values, (dB, np.array(counts_all), jt, js, ji, fine_values, fine_dW)


def simulate_grid(
    model: JumpDiffusionModel,
    theta: float,
    x0,
    ctx: ParameterContext,
    scheme: SimulationScheme | None = None,
    retain_latent: bool = False,
    rng: np.random.Generator | None = None,
    fine: bool = False,
) -> ObservationRecord:
    """Simulate ``X_{t_0}, ..., X_{t_n}`` at ``t_k = k * delta_n``.

    With ``fine=True`` (implies ``retain_latent``) the latent path carries a fine
    sub-grid: ``scheme.fine_points`` intervals for the exact scheme, the Euler
    sub-steps for the Euler scheme.
    """
    scheme = SimulationScheme() if scheme is None else scheme
    scheme.check(model)
    rng = np.random.default_rng() if rng is None else rng
    x0 = np.atleast_1d(np.asarray(x0, float))
    if x0.shape != (model.dim,):
        raise InvalidParameterError(f"x0 must have shape ({model.dim},)")
    retain = retain_latent or fine
    n, delta = ctx.n, ctx.delta_n

    if scheme.method == "exact_closed_form":
        m = scheme.fine_points if fine else 1
        values, latent = _exact_path(model, theta, x0, delta, n, m, rng, retain)
    else:
        values, raw = _euler_batch(model, theta, x0[None, :], delta, n, scheme.substeps_per_interval, rng, retain)
        values = values[:, 0]
        latent = None
        if retain:
            dB, counts, jt, js, ji, fv, fw = raw
            d = model.dim
            flat_t = [t for row in jt for t in row]
            latent = LatentPath(
                dB=dB[:, 0],
                jump_counts=counts[:, 0],
                jump_interval=np.repeat(np.arange(n), counts[:, 0]),
                jump_times=np.array(flat_t, float),
                jump_sizes=np.array([z for row in js for z in row], float).reshape(-1, d),
                jump_increments=np.array([c for row in ji for c in row], float).reshape(-1, d),
                fine_values=fv[:, 0] if fine else None,
                fine_dW=fw[:, 0] if fine else None,
            )
    return ObservationRecord(x0=x0, delta_n=delta, n=n, values=values, theta=theta, latent=latent)


def simulate_endpoints(model, theta, x, delta, rng, method="exact_closed_form", substeps=8):
    """One transition of length ``delta`` from each start in ``x`` (shape ``(R,)`` or ``(R, d)``)."""
    x = np.asarray(x, float)
    flat = x.ndim == 1
    xs = x[:, None] if flat else x
    if method == "euler":
        out = _euler_batch(model, theta, xs, delta, 1, substeps, rng)[0][-1]
        return out[:, 0] if flat else out
    if model.closed_form == "none":
        raise UnsupportedError("exact simulation needs a closed-form model")
    if model.closed_form == "ou" and not theta > 0:
        raise InvalidParameterError("exact OU simulation needs theta > 0")
    R = xs.shape[0]
    counts, interval, offsets, sizes = _draw_jumps(model, delta, R, rng)
    xi = rng.standard_normal(R)
    sigma, comp = model.sigma, model.compensator_constant
    if model.closed_form == "ou":
        a = math.exp(-theta * delta)
        sd = sigma * math.sqrt(-math.expm1(-2 * theta * delta) / (2 * theta))
        jumps = np.bincount(interval, np.exp(-theta * (delta - offsets)) * sizes[:, 0], minlength=R)
        out = a * xs[:, 0] + sd * xi + jumps - comp * (1 - a) / theta
    else:
        jumps = np.bincount(interval, sizes[:, 0], minlength=R)
        out = xs[:, 0] + (theta - comp) * delta + sigma * math.sqrt(delta) * xi + jumps
    return out if flat else out[:, None]


@dataclass
class WeakErrorReport:
    replications: int
    substeps: int
    mean_euler: float
    mean_exact: float
    var_euler: float
    var_exact: float
    mean_discrepancy: float
    mean_se: float
    var_discrepancy: float
    var_se: float
    extra: dict = field(default_factory=dict)

    def mean_ci(self, z=1.96):
        return self.mean_discrepancy - z * self.mean_se, self.mean_discrepancy + z * self.mean_se


def euler_vs_exact_check(model, theta, ctx: ParameterContext, substeps, replications, rng, x0=0.0):
    """Compare the law of ``X_{delta_n}`` under the Euler and the exact scheme.

    Discrepancies are Euler minus exact, with Monte Carlo standard errors.
    """
    if model.closed_form == "none":
        raise UnsupportedError("weak-error check needs a closed-form model")
    x = np.full(replications, float(x0))
    xe = simulate_endpoints(model, theta, x, ctx.delta_n, rng, method="euler", substeps=substeps)
    xx = simulate_endpoints(model, theta, x, ctx.delta_n, rng)

    def moments(s):
        m = s.mean()
        v = s.var(ddof=1)
        m4 = np.mean((s - m) ** 4)
        return m, v, math.sqrt(max(m4 - v * v, 0.0) / s.size)

    me, ve, sve = moments(xe)
    mx, vx, svx = moments(xx)
    return WeakErrorReport(
        replications=replications,
        substeps=substeps,
        mean_euler=float(me),
        mean_exact=float(mx),
        var_euler=float(ve),
        var_exact=float(vx),
        mean_discrepancy=float(me - mx),
        mean_se=math.sqrt(ve / replications + vx / replications),
        var_discrepancy=float(ve - vx),
        var_se=math.hypot(sve, svx),
    )
