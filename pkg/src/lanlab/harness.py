"""Experiment orchestration: configs, LAN-law runs, scaling studies and tail checks.

Every replication draws from ``stream(seed, rep, ...)`` and results are
aggregated in index order, so CSV outputs are identical for any thread count.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy import stats

from .density import MixtureDensitySpec
from .errors import LanlabError, UnsupportedError, ValidationError
from .lan import (
    default_threshold,
    exact_llr,
    fisher_closed_form,
    fisher_ergodic,
    lan_samples_csv,
    LanSample,
    main_term_sum,
    quasi_llr,
    remainder_arrays,
    shift_to_start,
)
from .model import ParameterContext, class_levy, gaussian_levy, make_builtin_model
from .parallel import map_replications
from .rng import stream
from .simulate import SimulationScheme, simulate_grid

__all__ = [
    "ModelBlock",
    "GridBlock",
    "ExperimentBlock",
    "ExperimentConfig",
    "ExperimentReport",
    "load_config",
    "run_lan_experiment",
    "run_scaling_study",
    "run_tail_checks",
    "ols_slope",
]

STATISTICS = ("exact", "quasi", "main", "remainders")


# --- configuration ------------------------------------------------------------------


@dataclass(frozen=True)
class ModelBlock:
    kind: str = "ou"
    theta0: float = 1.0
    sigma: float = 1.0
    intensity: float = 0.0  # used by the Gaussian jump law
    jump_law: dict | None = None  # {"gaussian": {...}} or {"class": k, "params": {...}}

    def validate(self, errs):
        if self.kind not in ("additive", "ou"):
            errs["model.kind"] = f"must be 'additive' or 'ou', got {self.kind!r}"
        if not _is_number(self.sigma) or not self.sigma > 0:
            errs["model.sigma"] = "must be > 0"
        if not _is_number(self.theta0):
            errs["model.theta0"] = "must be a number"
        elif self.kind == "ou" and not self.theta0 > 0:
            errs["model.theta0"] = "must be > 0 for the OU model"
        if not _is_number(self.intensity) or self.intensity < 0:
            errs["model.intensity"] = "must be >= 0"
        law = self.jump_law
        if law is not None:
            if not isinstance(law, dict) or len(law.keys() & {"gaussian", "class"}) != 1:
                errs["model.jump_law"] = "must hold exactly one of 'gaussian' or 'class'"
            elif "gaussian" in law:
                g = law["gaussian"]
                if not isinstance(g, dict) or not _is_number(g.get("sd", 1.0)) or g.get("sd", 1.0) < 0:
                    errs["model.jump_law.gaussian"] = "needs mean and sd >= 0"
            elif law["class"] not in (1, 2, 3, 4):
                errs["model.jump_law.class"] = "must be 1, 2, 3 or 4"

    def build(self):
        law = self.jump_law
        if law is None or self.intensity == 0 and "gaussian" in law:
            levy = None
        elif "gaussian" in law:
            g = law["gaussian"]
            levy = gaussian_levy(self.intensity, g.get("mean", 0.0), g.get("sd", 1.0))
        else:
            levy = class_levy(law["class"], **law.get("params", {}))
        return make_builtin_model(self.kind, self.sigma, levy)


@dataclass(frozen=True)
class GridBlock:
    n: int = 10_000
    beta: float | None = 0.6  # delta_n = n ** -beta
    delta: float | None = None  # explicit step, overrides beta
    x0: float = 0.0

    @property
    def delta_n(self) -> float:
        return float(self.delta) if self.delta is not None else float(self.n) ** (-self.beta)

    def validate(self, errs):
        if not isinstance(self.n, int) or isinstance(self.n, bool) or self.n < 1:
            errs["grid.n"] = "must be a positive integer"
        if self.delta is None:
            if not _is_number(self.beta) or not 0 < self.beta < 1:
                errs["grid.delta_rule.beta"] = "must lie in (0, 1)"
        elif not _is_number(self.delta) or not 0 < self.delta <= 1:
            errs["grid.delta_rule.delta"] = "must lie in (0, 1]"
        if not _is_number(self.x0):
            errs["grid.x0"] = "must be a number"

    def to_dict(self):
        rule = {"kind": "explicit", "delta": self.delta} if self.delta is not None else {"kind": "power", "beta": self.beta}
        return {"n": self.n, "delta_rule": rule, "x0": self.x0}

    @classmethod
    def from_dict(cls, d, errs):
        d = dict(d)
        rule = d.pop("delta_rule", {"kind": "power", "beta": 0.6})
        kwargs = _pick(cls, d, "grid", errs, skip=("beta", "delta"))
        kind = rule.get("kind", "power") if isinstance(rule, dict) else None
        if kind == "power":
            kwargs.update(beta=rule.get("beta", 0.6), delta=None)
        elif kind == "explicit":
            kwargs.update(beta=None, delta=rule.get("delta"))
        else:
            errs["grid.delta_rule"] = "kind must be 'power' or 'explicit'"
        return cls(**kwargs)


@dataclass(frozen=True)
class ExperimentBlock:
    u: tuple = (1.0,)
    replications: int = 2000
    statistics: tuple = ("quasi", "main")
    seed: int = 0
    threshold: str | float = "default"  # "default", "none" or a number
    scheme: str = "exact_closed_form"
    fisher_check: bool = False  # also compute the ergodic Fisher information
    # jump-size conventions for the tail checks
    rho1: float = 1.0
    rho2: float = 1.0
    upsilon: float = 0.4
    gamma: float = 0.1
    # scaling study
    scaling_deltas: tuple = (0.1, 0.05, 0.025)
    scaling_p: tuple = (2,)
    scaling_intervals: int = 100_000
    scaling_x: float = 1.0
    # tail checks
    tail_deltas: tuple = (0.01, 0.001)
    tail_draws: int = 10_000_000

    def validate(self, errs):
        if not self.u or not all(_is_number(v) for v in self.u):
            errs["experiment.u"] = "must be a nonempty list of numbers"
        if not isinstance(self.replications, int) or isinstance(self.replications, bool) or self.replications < 1:
            errs["experiment.replications"] = "must be an integer >= 1"
        bad = [s for s in self.statistics if s not in STATISTICS]
        if bad or not self.statistics:
            errs["experiment.statistics"] = f"must be a nonempty subset of {list(STATISTICS)}"
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            errs["experiment.seed"] = "must be a nonnegative integer"
        if not (self.threshold in ("default", "none") or _is_number(self.threshold) and self.threshold > 0):
            errs["experiment.threshold"] = "must be 'default', 'none' or a positive number"
        if self.scheme not in ("exact_closed_form", "euler"):
            errs["experiment.scheme"] = "must be 'exact_closed_form' or 'euler'"
        for name in ("rho1", "rho2", "upsilon", "gamma"):
            if not _is_number(getattr(self, name)) or not getattr(self, name) > 0:
                errs[f"experiment.{name}"] = "must be > 0"
        if not all(_is_number(v) and 0 < v <= 1 for v in self.scaling_deltas):
            errs["experiment.scaling_deltas"] = "entries must lie in (0, 1]"
        if not all(_is_number(v) and v > 0 for v in self.scaling_p):
            errs["experiment.scaling_p"] = "entries must be > 0"
        if not isinstance(self.scaling_intervals, int) or self.scaling_intervals < 2:
            errs["experiment.scaling_intervals"] = "must be an integer >= 2"
        if not all(_is_number(v) and 0 < v <= 1 for v in self.tail_deltas):
            errs["experiment.tail_deltas"] = "entries must lie in (0, 1]"
        if not isinstance(self.tail_draws, int) or self.tail_draws < 1:
            errs["experiment.tail_draws"] = "must be an integer >= 1"


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelBlock = field(default_factory=ModelBlock)
    grid: GridBlock = field(default_factory=GridBlock)
    experiment: ExperimentBlock = field(default_factory=ExperimentBlock)
    output_dir: str = "out"

    @classmethod
    def from_dict(cls, data) -> "ExperimentConfig":
        errs = {}
        if not isinstance(data, dict):
            raise ValidationError({"config": "top level must be a JSON object"})
        unknown = set(data) - {"model", "grid", "experiment", "output"}
        for key in sorted(unknown):
            errs[key] = "unknown key"
        model = ModelBlock(**_pick(ModelBlock, data.get("model", {}), "model", errs))
        grid = GridBlock.from_dict(_as_dict(data.get("grid", {}), "grid", errs), errs)
        exp = _pick(ExperimentBlock, data.get("experiment", {}), "experiment", errs)
        for key in ("u", "statistics", "scaling_deltas", "scaling_p", "tail_deltas"):
            if key in exp:
                val = exp[key]
                exp[key] = tuple(val) if isinstance(val, (list, tuple)) else (val,)
        experiment = ExperimentBlock(**exp)
        out = _as_dict(data.get("output", {}), "output", errs)
        cfg = cls(model, grid, experiment, str(out.get("dir", "out")))
        cfg.validate(errs)
        return cfg

    def validate(self, errs=None):
        errs = {} if errs is None else errs
        self.model.validate(errs)
        self.grid.validate(errs)
        self.experiment.validate(errs)
        if not errs:
            try:
                self.model.build()
            except LanlabError as exc:
                errs["model.jump_law"] = str(exc)
        if errs:
            raise ValidationError(errs)
        return self

    def to_dict(self) -> dict:
        exp = asdict(self.experiment)
        for key, val in exp.items():
            if isinstance(val, tuple):
                exp[key] = list(val)
        return {
            "model": asdict(self.model),
            "grid": self.grid.to_dict(),
            "experiment": exp,
            "output": {"dir": self.output_dir},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def with_overrides(self, seed=None, replications=None, output_dir=None) -> "ExperimentConfig":
        exp = self.experiment
        if seed is not None:
            exp = replace(exp, seed=seed)
        if replications is not None:
            exp = replace(exp, replications=replications)
        cfg = replace(self, experiment=exp, output_dir=self.output_dir if output_dir is None else str(output_dir))
        return cfg.validate()

    def build_model(self):
        return self.model.build()

    def context(self, u: float = 0.0) -> ParameterContext:
        return ParameterContext(self.model.theta0, float(u), self.grid.n, self.grid.delta_n)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _as_dict(d, prefix, errs):
    if not isinstance(d, dict):
        errs[prefix] = "must be a JSON object"
        return {}
    return d


def _pick(cls, d, prefix, errs, skip=()):
    d = _as_dict(d, prefix, errs)
    names = {f.name for f in fields(cls)} - set(skip)
    for key in sorted(set(d) - names - set(skip)):
        errs[f"{prefix}.{key}"] = "unknown key"
    return {k: v for k, v in d.items() if k in names}


def load_config(path) -> ExperimentConfig:
    """Parse a JSON config file; unreadable or malformed files raise ValidationError."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError({"config": f"cannot read {path}: {exc.strerror}"}) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError({"config": f"malformed JSON: {exc}"}) from None
    return ExperimentConfig.from_dict(data)


# --- reports -------------------------------------------------------------------------


@dataclass
class ExperimentReport:
    config_echo: dict
    seed: int
    statistics: list = field(default_factory=list)
    slopes: list = field(default_factory=list)
    tails: list = field(default_factory=list)
    runtime_seconds: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_dict(self, include_runtime: bool = True) -> dict:
        out = {
            "config_echo": self.config_echo,
            "seed": self.seed,
            "statistics": self.statistics,
            "slopes": self.slopes,
            "tails": self.tails,
        }
        out.update(self.extra)
        if include_runtime:
            out["runtime_seconds"] = self.runtime_seconds
        return out

    def to_json(self, include_runtime: bool = True) -> str:
        return json.dumps(_jsonable(self.to_dict(include_runtime)), indent=2, sort_keys=True)

    def statistic(self, name, u=None) -> dict:
        for s in self.statistics:
            if s["name"] == name and (u is None or s["u"] == u):
                return s
        raise KeyError((name, u))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write(out_dir, name, text):
    if out_dir is None:
        return
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    with open(path / name, "w", newline="") as fh:
        fh.write(text)


# --- LAN experiment ----------------------------------------------------------------------


def _gamma_for(config, model, threads):
    theta0 = config.model.theta0
    try:
        info = fisher_closed_form(model, theta0)
    except UnsupportedError:
        info = None
    extra = {}
    if info is None or config.experiment.fisher_check:
        # auxiliary path with horizon at least 200
        delta = config.grid.delta_n
        n_aux = max(config.grid.n, int(math.ceil(200.0 / delta)))
        ctx = ParameterContext(theta0, 0.0, n_aux, delta)
        rec = simulate_grid(model, theta0, config.grid.x0, ctx, rng=stream(config.experiment.seed, 0, 99))
        erg = fisher_ergodic(rec, model, theta0)
        extra = {"gamma_ergodic": erg.gamma, "gamma_ergodic_horizon": erg.horizon}
        if info is None:
            info = erg
    return info, extra


def run_lan_experiment(config: ExperimentConfig, threads: int | None = None, out_dir=None) -> ExperimentReport:
    """Empirical laws of the requested statistics against ``N(-u^2 Gamma / 2, u^2 Gamma)``.

    Each replication simulates one path under ``theta0`` and evaluates every
    statistic for every ``u`` on it. Writes ``lan_u<i>.csv`` per ``u`` when
    ``out_dir`` is given.
    """
    start = time.perf_counter()
    config.validate()
    model = config.build_model()
    exp = config.experiment
    theta0 = config.model.theta0
    info, gamma_extra = _gamma_for(config, model, threads)
    gamma = info.gamma
    delta = config.grid.delta_n
    ctxs = [config.context(u) for u in exp.u]

    wanted = set(exp.statistics)
    flags = {}
    spec = None
    if "exact" in wanted:
        try:
            if model.closed_form != "additive":
                raise UnsupportedError("exact LLR needs the additive model")
            spec = MixtureDensitySpec(model)
        except UnsupportedError as exc:
            flags["exact"] = f"unavailable: {exc}"
            wanted.discard("exact")
    if exp.threshold == "default":
        threshold = default_threshold(model, delta)
    elif exp.threshold == "none":
        threshold = None
    else:
        threshold = float(exp.threshold)
    need_fine = "remainders" in wanted
    need_latent = need_fine or "main" in wanted
    scheme = SimulationScheme(method=exp.scheme)

    def one(rep):
        rec = simulate_grid(
            model, theta0, config.grid.x0, ctxs[0], scheme=scheme,
            retain_latent=need_latent, fine=need_fine, rng=stream(exp.seed, rep),
        )
        rem_cache = {}
        out = []
        for ctx in ctxs:
            rem = None
            if need_fine:
                key = ctx.theta_n
                if key not in rem_cache:
                    rem_cache[key] = remainder_arrays(rec, model, ctx.theta_n, theta0, strict=False)
                rem = rem_cache[key]
            out.append(
                LanSample(
                    quasi_llr=quasi_llr(rec, model, ctx, threshold) if "quasi" in wanted else None,
                    main_term=main_term_sum(rec, model, ctx) if "main" in wanted else None,
                    context=ctx,
                    exact_llr=exact_llr(rec, spec, ctx) if "exact" in wanted else None,
                    remainders=rem,
                )
            )
        return out

    per_rep = map_replications(one, range(exp.replications), threads)

    summaries = []
    for i, ctx in enumerate(ctxs):
        samples = [row[i] for row in per_rep]
        _write(out_dir, f"lan_u{i}.csv", lan_samples_csv(samples))
        u = ctx.u
        target_mean, target_var = -0.5 * u * u * gamma, u * u * gamma
        for name, attr in (("exact", "exact_llr"), ("quasi", "quasi_llr"), ("main", "main_term")):
            if name not in exp.statistics:
                continue
            entry = {
                "name": name, "u": u, "target_mean": target_mean, "target_var": target_var,
                "gamma": gamma, "gamma_source": info.method,
            }
            if name in flags:
                entry.update(mean=None, var=None, ks=None, flag=flags[name])
                summaries.append(entry)
                continue
            vals = np.array([getattr(s, attr) for s in samples], float)
            entry.update(mean=float(vals.mean()), var=float(vals.var(ddof=1)) if vals.size > 1 else None)
            if target_var == 0:
                entry.update(ks=None, flag="point mass target: KS skipped")
            else:
                entry["ks"] = float(stats.kstest(vals, "norm", args=(target_mean, math.sqrt(target_var))).statistic)
                entry["mean_se"] = math.sqrt(target_var / vals.size)
            summaries.append(entry)
        if need_fine:
            for key in ("R1", "R2", "R3", "R4", "R5", "R6", "Z4", "Z5", "Z6"):
                sums = np.array([np.sum(s.remainders[key]) for s in samples if key in s.remainders])
                if sums.size:
                    summaries.append({"name": f"remainder_{key}", "u": u, "mean": float(sums.mean()),
                                      "var": float(sums.var(ddof=1)) if sums.size > 1 else None,
                                      "mean_abs": float(np.abs(sums).mean())})

    report = ExperimentReport(
        config_echo=config.to_dict(),
        seed=exp.seed,
        statistics=summaries,
        extra={"gamma": gamma, "gamma_source": info.method, "threshold": threshold, **gamma_extra},
    )
    report.runtime_seconds = time.perf_counter() - start
    _write(out_dir, "report.json", report.to_json())
    return report


# --- scaling study ----------------------------------------------------------------------------


def ols_slope(x, y, y_se=None) -> dict:
    """Least-squares slope of ``y`` on ``x`` with its residual and Monte Carlo standard errors."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    fit = stats.linregress(x, y)
    out = {"slope": float(fit.slope), "intercept": float(fit.intercept), "ols_se": float(fit.stderr)}
    if y_se is not None:
        xc = x - x.mean()
        out["mc_se"] = float(math.sqrt(np.sum(xc**2 * np.asarray(y_se, float) ** 2)) / np.sum(xc**2))
    se = max(out["ols_se"], out.get("mc_se", 0.0))
    out["ci"] = [out["slope"] - 1.96 * se, out["slope"] + 1.96 * se]
    return out


_SCALING_QUANTITIES = {
    "-R1+R2+R3": lambda r: -r["R1"] + r["R2"] + r["R3"],
    "R4": lambda r: r["R4"],
    "R5": lambda r: r["R5"],
    "R6": lambda r: r["R6"],
    "Z4": lambda r: r["Z4"],
    "Z5": lambda r: r["Z5"],
    "Z6": lambda r: r["Z6"],
}


def run_scaling_study(config: ExperimentConfig, deltas=None, ps=None, threads: int | None = None, out_dir=None) -> ExperimentReport:
    """Log-log slopes of ``E|remainder|^p`` against ``delta``.

    Each ``delta`` uses ``scaling_intervals`` independent intervals started
    at ``scaling_x`` with a fine sub-grid. The additive closed form is also
    returned for ``E[R6^2]`` as ``delta^3 lambda E z^2 / sigma^4``.
    """
    start = time.perf_counter()
    config.validate()
    exp = config.experiment
    deltas = tuple(exp.scaling_deltas if deltas is None else deltas)
    ps = tuple(exp.scaling_p if ps is None else ps)
    if len(deltas) < 3:
        raise ValidationError({"deltas": "need at least 3 delta values"})
    if any(not 0 < d <= 1 for d in deltas):
        raise ValidationError({"deltas": "entries must lie in (0, 1]"})
    model = config.build_model()
    if model.closed_form not in ("additive", "ou"):
        raise UnsupportedError("scaling study needs a closed-form model")
    theta0 = config.model.theta0
    count = exp.scaling_intervals

    def one(i):
        ctx = ParameterContext(theta0, 0.0, count, deltas[i])
        rec = simulate_grid(model, theta0, exp.scaling_x, ctx, fine=True, rng=stream(exp.seed, i, 7))
        rec = shift_to_start(rec, model, theta0, exp.scaling_x)
        rem = remainder_arrays(rec, model, theta0, theta0)
        moments = {}
        for name, fn in _SCALING_QUANTITIES.items():
            q = np.abs(fn(rem))
            for p in ps:
                qp = q**p
                moments[(name, p)] = (float(qp.mean()), float(qp.std(ddof=1) / math.sqrt(q.size)))
        return moments

    results = map_replications(one, range(len(deltas)), threads)
    slopes = []
    rows = ["quantity,p,delta,moment,moment_se"]
    logd = np.log(deltas)
    for name in _SCALING_QUANTITIES:
        for p in ps:
            m = np.array([r[(name, p)][0] for r in results])
            se = np.array([r[(name, p)][1] for r in results])
            for d, mm, ss in zip(deltas, m, se):
                rows.append(f"{name},{p!r},{d!r},{mm!r},{ss!r}")
            entry = {"quantity": name, "p": p, "deltas": list(deltas), "moments": m.tolist()}
            if np.all(m == 0):
                entry.update(slope=None, flag="degenerate: identically zero")
            else:
                entry.update(ols_slope(logd, np.log(m), se / m))
            slopes.append(entry)
    _write(out_dir, "scaling.csv", "\n".join(rows) + "\n")
    extra = {}
    if model.closed_form == "additive":
        ez2 = model.intensity * model.levy.jump_second_moment
        extra["r6_second_moment_closed_form"] = [d**3 * ez2 / model.sigma**4 for d in deltas]
    report = ExperimentReport(config_echo=config.to_dict(), seed=exp.seed, slopes=slopes, extra=extra)
    report.runtime_seconds = time.perf_counter() - start
    _write(out_dir, "report.json", report.to_json())
    return report


# --- tail checks -------------------------------------------------------------------------------


def _wilson(k, n):
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=0.95, method="wilson")
    return float(ci.low), float(ci.high)


def _tail_one(model, exp, delta, seed, index, chunk=1_000_000):
    """Monte Carlo counts for the three tail events at one ``delta``."""
    lam = model.intensity
    rng = stream(seed, index, 11)
    kappa = math.floor(1.0 / exp.gamma) + 1  # smallest integer with gamma * kappa + 1 > 2
    small_r = exp.rho1 * delta**exp.upsilon
    big_r = exp.rho2 * delta ** (-exp.gamma)
    n_ge2 = n_small = n_big = 0
    moment = 0.0
    left = exp.tail_draws
    while left > 0:
        size = min(chunk, left)
        left -= size
        counts = rng.poisson(lam * delta, size)
        n_ge2 += int(np.count_nonzero(counts >= 2))
        hit = np.flatnonzero(counts > 0)
        k = counts[hit]
        z = model.levy.sample(rng, int(k.sum()))
        norms = np.linalg.norm(z, axis=1)
        sums = np.zeros((hit.size, z.shape[1]))
        np.add.at(sums, np.repeat(np.arange(hit.size), k), z)
        zhat = np.linalg.norm(sums, axis=1)
        one = k == 1
        # exactly one jump: the increment is the single jump size
        n_small += int(np.count_nonzero(norms[np.cumsum(k)[one] - 1] < small_r))
        n_big += int(np.count_nonzero(zhat > big_r))
        moment += float(np.sum(zhat**kappa))
    draws = exp.tail_draws
    moment /= draws
    out = []
    exact = -math.expm1(-lam * delta) - lam * delta * math.exp(-lam * delta)
    lo, hi = _wilson(n_ge2, draws)
    bound = (lam * delta) ** 2
    out.append({"check": "N_ge_2", "delta": delta, "events": n_ge2, "draws": draws, "p_hat": n_ge2 / draws,
                "wilson_lo": lo, "wilson_hi": hi, "bound": bound, "exact": exact,
                "exact_in_ci": lo <= exact <= hi, "pass": lo <= bound})
    lo, hi = _wilson(n_small, draws)
    bound = math.exp(-lam * delta) * delta * model.levy.small_ball_mass(small_r)
    out.append({"check": "small_single_jump", "delta": delta, "events": n_small, "draws": draws,
                "p_hat": n_small / draws, "wilson_lo": lo, "wilson_hi": hi, "bound": bound, "exact": bound,
                "radius": small_r, "exact_in_ci": lo <= bound <= hi, "pass": lo <= bound})
    lo, hi = _wilson(n_big, draws)
    cheb = moment / big_r**kappa
    out.append({"check": "large_increment", "delta": delta, "events": n_big, "draws": draws,
                "p_hat": n_big / draws, "wilson_lo": lo, "wilson_hi": hi, "bound": cheb, "exact": None,
                "radius": big_r, "kappa": kappa, "fitted_C": cheb / (lam * delta) ** 2,
                "exact_in_ci": None, "pass": lo <= cheb})
    return out


def run_tail_checks(config: ExperimentConfig, deltas=None, draws=None, threads: int | None = None, out_dir=None) -> ExperimentReport:
    """Monte Carlo checks of the jump-count and jump-size tail estimates.

    (i) ``P(N >= 2) <= (lambda delta)^2``; (ii) one small jump, against
    ``e^{-lambda delta} delta nu(|z| < rho1 delta^upsilon)``; (iii) a large
    compound increment, against the Chebyshev bound
    ``E|Z|^kappa / (rho2 delta^-gamma)^kappa`` with ``gamma kappa + 1 > 2``,
    reported as ``C (lambda delta)^2`` with the fitted ``C``. A check passes
    when the lower Wilson limit does not exceed its bound.
    """
    start = time.perf_counter()
    config.validate()
    exp = config.experiment
    if draws is not None:
        exp = replace(exp, tail_draws=int(draws))
    deltas = tuple(exp.tail_deltas if deltas is None else deltas)
    model = config.build_model()
    report = ExperimentReport(config_echo=config.to_dict(), seed=exp.seed)
    if model.intensity == 0:
        report.extra["flag"] = "zero-jump configuration: tail checks skipped"
        report.runtime_seconds = time.perf_counter() - start
        _write(out_dir, "report.json", report.to_json())
        return report
    results = map_replications(lambda i: _tail_one(model, exp, deltas[i], exp.seed, i), range(len(deltas)), threads)
    report.tails = [row for rows in results for row in rows]
    cols = ["check", "delta", "events", "draws", "p_hat", "wilson_lo", "wilson_hi", "bound", "pass"]
    lines = [",".join(cols)] + [",".join(repr(r[c]) if not isinstance(r[c], str) else r[c] for c in cols) for r in report.tails]
    _write(out_dir, "tails.csv", "\n".join(lines) + "\n")
    report.runtime_seconds = time.perf_counter() - start
    _write(out_dir, "report.json", report.to_json())
    return report
