"""Jump-diffusion model class, Lévy specifications and assumption probes.

The state convention throughout the package: a state is an array whose last
axis has length ``d``. Model callables must broadcast over any leading axes::

    drift(theta, x)          -> (..., d)
    drift_theta_deriv(theta, x) -> (..., d)
    diffusion(x)             -> (..., d, d)
    jump_coeff(x, z)         -> (..., d)
    jump_compensator(x)      -> (..., d)

Jump samplers take ``(rng, size)`` and return an array of shape ``(size, d)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special, stats

from .errors import DomainError, InvalidParameterError, UnsupportedError

__all__ = [
    "CLASS_TAGS",
    "LevySpec",
    "JumpDiffusionModel",
    "ParameterContext",
    "ProbeReport",
    "gaussian_levy",
    "class_levy",
    "no_jumps",
    "small_ball_mass_closed_form",
    "make_builtin_model",
    "probe_assumptions",
    "psi_prime",
    "psi_prime_bounds",
]

CLASS_TAGS = (
    "support_away_from_zero",
    "power_kappa",
    "gaussian_plus_power",
    "gamma_plus_power",
    "custom",
)
# class numbers used in configs and in the literature's example list
_CLASS_BY_NUMBER = {1: CLASS_TAGS[0], 2: CLASS_TAGS[1], 3: CLASS_TAGS[2], 4: CLASS_TAGS[3]}


@dataclass(frozen=True)
class LevySpec:
    """Finite Lévy measure ``nu = intensity * mu``."""

    intensity: float
    jump_sampler: Callable[[np.random.Generator, int], np.ndarray]
    jump_mean: np.ndarray
    jump_second_moment: float
    small_ball_mass: Callable[[float], float]
    class_tag: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.intensity >= 0 or not math.isfinite(self.intensity):
            raise InvalidParameterError(f"intensity must be finite and >= 0, got {self.intensity}")
        if self.class_tag not in CLASS_TAGS:
            raise InvalidParameterError(f"unknown class tag {self.class_tag!r}")
        if not math.isfinite(self.jump_second_moment) or self.jump_second_moment < 0:
            raise InvalidParameterError("jump law must have a finite second moment")
        object.__setattr__(self, "jump_mean", np.atleast_1d(np.asarray(self.jump_mean, float)))

    @property
    def dim(self) -> int:
        return self.jump_mean.shape[0]

    @property
    def is_gaussian(self) -> bool:
        return self.params.get("kind") == "gaussian"

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if size == 0:
            return np.zeros((0, self.dim))
        return np.asarray(self.jump_sampler(rng, size), float).reshape(size, self.dim)


def no_jumps(dim: int = 1) -> LevySpec:
    return LevySpec(
        intensity=0.0,
        jump_sampler=lambda rng, size: np.zeros((size, dim)),
        jump_mean=np.zeros(dim),
        jump_second_moment=0.0,
        small_ball_mass=lambda r: 0.0,
        params={"kind": "gaussian", "mean": 0.0, "sd": 0.0},
    )


def gaussian_levy(intensity: float, mean: float = 0.0, sd: float = 1.0) -> LevySpec:
    """One-dimensional compound Poisson jumps with N(mean, sd^2) sizes."""
    if sd < 0:
        raise InvalidParameterError("jump sd must be >= 0")

    def sampler(rng, size):
        return (mean + sd * rng.standard_normal(size)).reshape(size, 1)

    def small_ball(r):
        if r < 0:
            raise DomainError("radius must be nonnegative")
        if math.isinf(r):
            return intensity
        if sd == 0:
            return intensity * float(abs(mean) <= r)
        return intensity * float(stats.norm.cdf((r - mean) / sd) - stats.norm.cdf((-r - mean) / sd))

    return LevySpec(
        intensity=float(intensity),
        jump_sampler=sampler,
        jump_mean=np.array([mean], float),
        jump_second_moment=float(mean**2 + sd**2),
        small_ball_mass=small_ball,
        class_tag="custom",
        params={"kind": "gaussian", "mean": float(mean), "sd": float(sd)},
    )


def _class_total_mass(tag, p):
    if tag == "support_away_from_zero":
        return p["intensity"]
    if tag == "power_kappa":
        return -2.0 / p["alpha"]
    small = 2.0 * p["c2"] / (p["kappa"] + 1.0)
    if tag == "gaussian_plus_power":
        return small + 2.0 * p["c1"] * stats.norm.sf(1.0)
    if tag == "gamma_plus_power":
        return small + 2.0 * p["c1"] * p["gamma_alpha"] * special.exp1(p["gamma_beta"])
    raise UnsupportedError(f"no closed form for class {tag!r}")


def _check_class_params(tag, p):
    need = {
        "support_away_from_zero": ("intensity", "radius", "scale"),
        "power_kappa": ("alpha",),
        "gaussian_plus_power": ("c1", "c2", "kappa"),
        "gamma_plus_power": ("c1", "c2", "kappa", "gamma_alpha", "gamma_beta"),
    }
    if tag not in need:
        raise UnsupportedError(f"no closed form for class {tag!r}")
    missing = [k for k in need[tag] if k not in p]
    if missing:
        raise InvalidParameterError(f"class {tag!r} missing parameters {missing}")
    if tag == "support_away_from_zero" and (p["radius"] <= 0 or p["scale"] <= 0 or p["intensity"] < 0):
        raise InvalidParameterError("class 1 needs radius > 0, scale > 0, intensity >= 0")
    if tag == "power_kappa" and not p["alpha"] < 0:
        raise InvalidParameterError("class 2 needs alpha < 0")
    if tag in ("gaussian_plus_power", "gamma_plus_power"):
        if p["c1"] <= 0 or p["c2"] <= 0 or not p["kappa"] > -1:
            raise InvalidParameterError("classes 3/4 need c1, c2 > 0 and kappa > -1")
    if tag == "gamma_plus_power" and (p["gamma_alpha"] <= 0 or p["gamma_beta"] <= 0):
        raise InvalidParameterError("class 4 needs gamma_alpha, gamma_beta > 0")


def small_ball_mass_closed_form(class_tag, params: dict, r: float) -> float:
    """Closed-form ``nu({|z| <= r})`` for the four example Lévy classes.

    ``class_tag`` may be a tag string or the class number 1-4.
    """
    tag = _CLASS_BY_NUMBER.get(class_tag, class_tag)
    if r < 0:
        raise DomainError(f"radius must be nonnegative, got {r}")
    _check_class_params(tag, params)
    p = params
    if math.isinf(r):
        return float(_class_total_mass(tag, p))
    if tag == "support_away_from_zero":
        if r < p["radius"]:
            return 0.0
        return p["intensity"] * (1.0 - math.exp(-(r - p["radius"]) / p["scale"]))
    if tag == "power_kappa":
        a = p["alpha"]
        return (-2.0 / a) * min(r, 1.0) ** (-a)
    small = 2.0 * p["c2"] / (p["kappa"] + 1.0) * min(r, 1.0) ** (p["kappa"] + 1.0)
    if r <= 1.0:
        return small
    if tag == "gaussian_plus_power":
        return small + 2.0 * p["c1"] * (stats.norm.cdf(r) - stats.norm.cdf(1.0))
    return small + 2.0 * p["c1"] * p["gamma_alpha"] * (
        special.exp1(p["gamma_beta"]) - special.exp1(p["gamma_beta"] * r)
    )


def _symmetric(rng, radii):
    signs = np.where(rng.random(radii.shape[0]) < 0.5, -1.0, 1.0)
    return (signs * radii).reshape(-1, 1)


def _sample_power_radius(rng, size, kappa):
    # density proportional to r**kappa on (0, 1]
    return rng.random(size) ** (1.0 / (kappa + 1.0))


def _sample_gamma_tail(rng, size, beta):
    # density proportional to exp(-beta r) / r on (1, inf): shifted exponential proposal, accept w.p. 1/r
    out = np.empty(size)
    filled = 0
    while filled < size:
        m = 2 * (size - filled) + 16
        r = 1.0 + rng.exponential(1.0 / beta, m)
        keep = r[rng.random(m) < 1.0 / r]
        take = min(keep.shape[0], size - filled)
        out[filled:filled + take] = keep[:take]
        filled += take
    return out


def class_levy(class_tag, **params) -> LevySpec:
    """Symmetric one-dimensional Lévy measure from one of the example classes.

    Class 1 uses jumps ``±(radius + Exp(scale))`` with total mass ``intensity``;
    classes 2-4 follow the densities of the example list, with their total mass
    as intensity.
    """
    tag = _CLASS_BY_NUMBER.get(class_tag, class_tag)
    _check_class_params(tag, params)
    p = dict(params)
    lam = float(_class_total_mass(tag, p))

    if tag == "support_away_from_zero":
        R, s = p["radius"], p["scale"]
        second = R**2 + 2 * R * s + 2 * s**2

        def sampler(rng, size):
            return _symmetric(rng, R + rng.exponential(s, size))

    elif tag == "power_kappa":
        a = p["alpha"]
        second = (2.0 / (2.0 - a)) / lam

        def sampler(rng, size):
            return _symmetric(rng, _sample_power_radius(rng, size, -a - 1.0))

    else:
        kappa, c1, c2 = p["kappa"], p["c1"], p["c2"]
        small_mass = 2.0 * c2 / (kappa + 1.0)
        if tag == "gaussian_plus_power":
            big_second = 2.0 * c1 * (stats.norm.pdf(1.0) + stats.norm.sf(1.0))

            def big(rng, size):
                return stats.truncnorm.ppf(rng.random(size), 1.0, np.inf)

        else:
            ga, gb = p["gamma_alpha"], p["gamma_beta"]
            big_second = 2.0 * c1 * ga * math.exp(-gb) * (1.0 / gb + 1.0 / gb**2)

            def big(rng, size):
                return _sample_gamma_tail(rng, size, gb)

        second = (2.0 * c2 / (kappa + 3.0) + big_second) / lam
        p_small = small_mass / lam

        def sampler(rng, size):
            is_small = rng.random(size) < p_small
            radii = np.empty(size)
            ns = int(is_small.sum())
            radii[is_small] = _sample_power_radius(rng, ns, kappa)
            radii[~is_small] = big(rng, size - ns)
            return _symmetric(rng, radii)

    return LevySpec(
        intensity=lam,
        jump_sampler=sampler,
        jump_mean=np.zeros(1),
        jump_second_moment=float(second),
        small_ball_mass=lambda r: small_ball_mass_closed_form(tag, p, r),
        class_tag=tag,
        params={"kind": "class", **p},
    )


@dataclass(frozen=True)
class ParameterContext:
    """Local alternative ``theta_n = theta0 + u / sqrt(n * delta_n)``."""

    theta0: float
    u: float
    n: int
    delta_n: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise InvalidParameterError("n must be a positive integer")
        if not 0 < self.delta_n <= 1:
            raise InvalidParameterError("delta_n must lie in (0, 1]")

    @classmethod
    def power_rule(cls, theta0, u, n, beta):
        """Context with ``delta_n = n ** -beta``."""
        return cls(theta0, u, n, float(n) ** (-beta))

    @property
    def horizon(self) -> float:
        return self.n * self.delta_n

    @property
    def rate(self) -> float:
        return math.sqrt(self.n * self.delta_n)

    @property
    def theta_n(self) -> float:
        return self.theta0 + self.u / self.rate

    def theta_of(self, ell):
        return self.theta0 + np.asarray(ell) * self.u / self.rate

    def with_u(self, u) -> "ParameterContext":
        return ParameterContext(self.theta0, u, self.n, self.delta_n)


@dataclass(frozen=True)
class JumpDiffusionModel:
    dim: int
    drift: Callable
    drift_theta_deriv: Callable
    diffusion: Callable
    jump_coeff: Callable
    jump_compensator: Callable
    levy: LevySpec
    closed_form: str = "none"
    drift_theta_second_deriv: Callable | None = None
    sigma: float | None = None  # constant scalar diffusion of the built-ins
    diffusion_bound: float | None = None  # sup of the diffusion operator norm, when known

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise InvalidParameterError("dim must be >= 1")
        if self.closed_form not in ("none", "additive", "ou"):
            raise InvalidParameterError(f"unknown closed_form {self.closed_form!r}")

    @property
    def intensity(self) -> float:
        return self.levy.intensity

    @property
    def compensator_constant(self) -> float:
        """``lambda * E_mu[z]`` for the built-ins (d = 1, c(x, z) = z)."""
        return float(self.levy.intensity * self.levy.jump_mean[0])


def make_builtin_model(kind: str, sigma: float, levy: LevySpec | None = None) -> JumpDiffusionModel:
    """One-dimensional additive (``b = theta``) or OU (``b = -theta x``) model with ``c(x, z) = z``."""
    if not sigma > 0:
        raise InvalidParameterError(f"sigma must be > 0, got {sigma}")
    levy = no_jumps(1) if levy is None else levy
    if levy.dim != 1:
        raise InvalidParameterError("built-in models are one-dimensional")
    comp = float(levy.intensity * levy.jump_mean[0])
    sigma = float(sigma)

    def diffusion(x):
        x = np.asarray(x, float)
        return np.full(x.shape + (1,), sigma)

    def jump_coeff(x, z):
        return np.broadcast_to(np.asarray(z, float), np.broadcast_shapes(np.shape(x), np.shape(z))).copy()

    def compensator(x):
        return np.full(np.shape(x), comp)

    if kind == "additive":

        def drift(theta, x):
            return np.full(np.shape(x), float(theta))

        def dtheta(theta, x):
            return np.ones(np.shape(x))

    elif kind == "ou":

        def drift(theta, x):
            return -theta * np.asarray(x, float)

        def dtheta(theta, x):
            return -np.asarray(x, float)

    else:
        raise InvalidParameterError(f"unknown built-in kind {kind!r}")

    return JumpDiffusionModel(
        dim=1,
        drift=drift,
        drift_theta_deriv=dtheta,
        diffusion=diffusion,
        jump_coeff=jump_coeff,
        jump_compensator=compensator,
        levy=levy,
        closed_form=kind,
        drift_theta_second_deriv=lambda theta, x: np.zeros(np.shape(x)),
        sigma=sigma,
        diffusion_bound=sigma,
    )


# --- assumption probes ------------------------------------------------------


def _f(y):
    return y / np.sqrt(1.0 + y * y)


def _f_inv(v):
    return v / np.sqrt(1.0 - v * v)


def psi_prime(v, z, jump_coeff=None, step=1e-6):
    """Centered-difference derivative of ``v -> f(g(v) + c(g(v), z))``, g = f^{-1}, d = 1."""
    v = np.asarray(v, float)
    z = np.asarray(z, float)
    if jump_coeff is None:
        def jump_coeff(x, zz):
            return np.broadcast_to(zz, np.broadcast_shapes(np.shape(x), np.shape(zz)))

    def psi(w):
        y = _f_inv(w)
        return _f(y + jump_coeff(y, z))

    return (psi(v + step) - psi(v - step)) / (2.0 * step)


def psi_prime_bounds(z):
    """Lower and upper bounds on psi' for c(x, z) = z."""
    s = np.sqrt(np.asarray(z, float) ** 2 + 4.0) + np.abs(z)
    return 8.0 / s**3, s**3 / 8.0


@dataclass
class ProbeReport:
    sample_count: int
    lipschitz_drift: float
    lipschitz_diffusion: float
    min_ellipticity: float  # min eigenvalue of sigma sigma^*
    max_ellipticity: float
    min_jump_ratio: float  # min |c(x, z)| / |z|
    jump_at_zero_max: float  # max |c(x, 0)|
    psi_v: np.ndarray | None = None
    psi_z: np.ndarray | None = None
    psi_prime: np.ndarray | None = None
    psi_lower: np.ndarray | None = None
    psi_upper: np.ndarray | None = None
    psi_ok: np.ndarray | None = None
    failures: list = field(default_factory=list)

    @property
    def sigma_max(self) -> float:
        return math.sqrt(self.max_ellipticity)

    @property
    def psi_all_ok(self) -> bool | None:
        return None if self.psi_ok is None else bool(np.all(self.psi_ok))

    def to_dict(self) -> dict:
        out = {
            "sample_count": self.sample_count,
            "lipschitz_drift": self.lipschitz_drift,
            "lipschitz_diffusion": self.lipschitz_diffusion,
            "a2_min_eigenvalue": self.min_ellipticity,
            "a2_max_eigenvalue": self.max_ellipticity,
            "a3_min_ratio": self.min_jump_ratio,
            "a3_jump_at_zero_max": self.jump_at_zero_max,
            "failures": list(self.failures),
        }
        if self.psi_ok is not None:
            out["a8_grid_points"] = int(self.psi_ok.size)
            out["a8_violations"] = int((~self.psi_ok).sum())
            out["a8_all_ok"] = self.psi_all_ok
        return out


def probe_assumptions(
    model: JumpDiffusionModel,
    theta_box=(0.5, 2.0),
    x_box=(-5.0, 5.0),
    z_box=(-10.0, 10.0),
    sample_count: int = 1000,
    rng: np.random.Generator | None = None,
    z_exclusion: float = 1e-3,
    psi_v=None,
    psi_z=None,
) -> ProbeReport:
    """Randomized numerical checks of Lipschitz, ellipticity and jump hypotheses.

    Non-finite coefficient values are recorded in ``failures`` rather than raised.
    """
    if sample_count < 2:
        raise InvalidParameterError("sample_count must be >= 2")
    for name, box in (("theta_box", theta_box), ("x_box", x_box), ("z_box", z_box)):
        if not box[0] <= box[1]:
            raise InvalidParameterError(f"{name} is empty")
    rng = np.random.default_rng(0) if rng is None else rng
    d = model.dim
    failures = []

    theta = rng.uniform(*theta_box, sample_count)
    x = rng.uniform(*x_box, (sample_count, d))
    y = rng.uniform(*x_box, (sample_count, d))
    z = rng.uniform(*z_box, (sample_count, d))
    small = np.linalg.norm(z, axis=-1) < z_exclusion
    z[small] = np.where(z[small] >= 0, z_exclusion, -z_exclusion)

    def finite(name, arr):
        bad = ~np.isfinite(arr).reshape(arr.shape[0], -1).all(axis=1)
        for i in np.flatnonzero(bad)[:20]:
            failures.append({"quantity": name, "sample": int(i)})
        return ~bad

    with np.errstate(all="ignore"):
        bx = np.stack([model.drift(t, xi) for t, xi in zip(theta, x)])
        by = np.stack([model.drift(t, yi) for t, yi in zip(theta, y)])
        sx, sy = model.diffusion(x), model.diffusion(y)
        cxz = model.jump_coeff(x, z)
        c0 = model.jump_coeff(x, np.zeros_like(z))

    dist = np.linalg.norm(x - y, axis=-1)
    ok = finite("drift", bx) & finite("drift", by) & (dist > 0)
    lip_b = float(np.max(np.linalg.norm(bx - by, axis=-1)[ok] / dist[ok])) if ok.any() else math.nan
    ok = finite("diffusion", sx) & finite("diffusion", sy) & (dist > 0)
    diff = np.linalg.norm((sx - sy).reshape(sample_count, -1), axis=-1)
    lip_s = float(np.max(diff[ok] / dist[ok])) if ok.any() else math.nan

    ok = finite("diffusion", sx)
    if ok.any():
        a = sx[ok] @ np.swapaxes(sx[ok], -1, -2)
        eig = np.linalg.eigvalsh(a)
        min_eig, max_eig = float(eig.min()), float(eig.max())
    else:
        min_eig = max_eig = math.nan

    ok = finite("jump_coeff", cxz)
    ratio = np.linalg.norm(cxz, axis=-1) / np.linalg.norm(z, axis=-1)
    min_ratio = float(ratio[ok].min()) if ok.any() else math.nan
    ok0 = finite("jump_coeff_at_zero", c0)
    at_zero = float(np.abs(c0[ok0]).max()) if ok0.any() else math.nan

    report = ProbeReport(
        sample_count=sample_count,
        lipschitz_drift=lip_b,
        lipschitz_diffusion=lip_s,
        min_ellipticity=min_eig,
        max_ellipticity=max_eig,
        min_jump_ratio=min_ratio,
        jump_at_zero_max=at_zero,
        failures=failures,
    )

    if d == 1:
        v = np.round(np.arange(-99, 100) / 100.0, 2) if psi_v is None else np.asarray(psi_v, float)
        zz = np.arange(-10.0, 11.0) if psi_z is None else np.asarray(psi_z, float)
        V, Z = np.meshgrid(v, zz, indexing="ij")

        def c1(xx, zq):
            return model.jump_coeff(np.asarray(xx)[..., None], np.asarray(zq)[..., None])[..., 0]

        with np.errstate(all="ignore"):
            pp = psi_prime(V, Z, c1)
        lo, hi = psi_prime_bounds(Z)
        # relative slack covers the O(step^2) finite-difference error at the z = 0 equality case
        tol = 1e-7
        finite_pp = np.isfinite(pp)
        for i, j in zip(*np.nonzero(~finite_pp)):
            failures.append({"quantity": "psi_prime", "v": float(V[i, j]), "z": float(Z[i, j])})
        report.psi_v, report.psi_z, report.psi_prime = V.ravel(), Z.ravel(), pp.ravel()
        report.psi_lower, report.psi_upper = lo.ravel(), hi.ravel()
        report.psi_ok = (finite_pp & (pp >= lo * (1 - tol)) & (pp <= hi * (1 + tol))).ravel()
    return report
