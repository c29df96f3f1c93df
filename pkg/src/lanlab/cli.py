"""Command-line entry point: ``python -m lanlab <subcommand> --config cfg.json``.

Exit status is 0 on success, 1 for invalid input or configuration and 2 for
numeric failures.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .density import MixtureDensitySpec, density_curve_csv, mixture_density
from .errors import LanlabError, UnsupportedError, ValidationError
from .estimate import estimates_csv, estimator_normality_experiment
from .harness import _jsonable, load_config, run_lan_experiment, run_scaling_study, run_tail_checks
from .model import probe_assumptions
from .parallel import resolve_threads
from .rng import stream
from .simulate import simulate_grid

__all__ = ["main", "build_parser"]

SUBCOMMANDS = ("simulate", "density", "lan", "estimate", "scaling", "tails", "probe")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lanlab", description="Jump-diffusion LAN experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, help="override experiment.seed")
        p.add_argument("--reps", type=int, help="override experiment.replications")
        p.add_argument("--threads", type=int, help="worker threads (default: LANLAB_THREADS or 1)")
        p.add_argument("--out", help="output directory (default: output.dir of the config)")
        if name == "density":
            p.add_argument("--x", type=float, default=0.0, help="start state")
            p.add_argument("--delta", type=float, help="time step (default: grid step)")
            p.add_argument("--points", type=int, default=120, help="half-width of the y grid in points")
        if name == "simulate":
            p.add_argument("--latent", action="store_true", help="also write the binary latent sidecar")
    return parser


def _write_json(out, name, payload):
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def _simulate(cfg, args, out):
    model = cfg.build_model()
    rec = simulate_grid(
        model, cfg.model.theta0, cfg.grid.x0, cfg.context(), retain_latent=args.latent,
        rng=stream(cfg.experiment.seed, 0),
    )
    out.mkdir(parents=True, exist_ok=True)
    rec.to_csv(out / "path.csv")
    if args.latent:
        rec.write_latent(out / "latent.bin")
    _write_json(out, "report.json", {"config_echo": cfg.to_dict(), "seed": cfg.experiment.seed, "n": rec.n,
                                     "delta_n": rec.delta_n, "jumps": int(rec.latent.jump_counts.sum()) if rec.latent else None})


def _density(cfg, args, out):
    model = cfg.build_model()
    delta = cfg.grid.delta_n if args.delta is None else args.delta
    if args.points < 1:
        raise ValidationError({"points": "must be >= 1"})
    spec = MixtureDensitySpec(model)
    sd = math.sqrt(model.sigma**2 * delta + model.intensity * delta * model.levy.jump_second_moment)
    half = 8.0 * sd + abs(cfg.model.theta0) * delta
    y = args.x + half * np.arange(-args.points, args.points + 1) / args.points
    res = mixture_density(spec, cfg.model.theta0, delta, args.x, y)
    out.mkdir(parents=True, exist_ok=True)
    density_curve_csv(y, res.value, res.truncation_error, out / "density.csv")
    _write_json(out, "report.json", {"config_echo": cfg.to_dict(), "x": args.x, "delta": delta,
                                     "i_max": res.i_max, "truncation_error": res.truncation_error})


def _estimate(cfg, args, out):
    exp = cfg.experiment
    thr = exp.threshold if exp.threshold == "default" else (None if exp.threshold == "none" else float(exp.threshold))
    if thr is None:
        raise ValidationError({"experiment.threshold": "the estimator experiment needs a threshold"})
    rep = estimator_normality_experiment(
        cfg.build_model(), cfg.model.theta0, cfg.context(), exp.replications, threshold=thr,
        seed=exp.seed, threads=args.threads, x0=cfg.grid.x0,
    )
    out.mkdir(parents=True, exist_ok=True)
    estimates_csv(rep.filtered_results, out / "estimates_filtered.csv")
    estimates_csv(rep.unfiltered_results, out / "estimates_unfiltered.csv")
    _write_json(out, "report.json", {"config_echo": cfg.to_dict(), "seed": exp.seed, **rep.to_dict()})


def _probe(cfg, args, out):
    rep = probe_assumptions(cfg.build_model(), rng=stream(cfg.experiment.seed, 0))
    payload = rep.to_dict()
    _write_json(out, "probe.json", payload)
    print(json.dumps(_jsonable(payload), indent=2, sort_keys=True))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        resolve_threads(args.threads)
        cfg = load_config(args.config).with_overrides(seed=args.seed, replications=args.reps)
        out = Path(args.out if args.out is not None else cfg.output_dir)
        if args.command == "simulate":
            _simulate(cfg, args, out)
        elif args.command == "density":
            _density(cfg, args, out)
        elif args.command == "lan":
            run_lan_experiment(cfg, threads=args.threads, out_dir=out)
        elif args.command == "estimate":
            _estimate(cfg, args, out)
        elif args.command == "scaling":
            run_scaling_study(cfg, threads=args.threads, out_dir=out)
        elif args.command == "tails":
            run_tail_checks(cfg, threads=args.threads, out_dir=out)
        elif args.command == "probe":
            _probe(cfg, args, out)
    except (ValidationError, UnsupportedError, ValueError) as exc:
        print(f"lanlab: {exc}", file=sys.stderr)
        return 1
    except (ArithmeticError, LanlabError) as exc:
        print(f"lanlab: numeric failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
