"""Command-line entry point.

Each subcommand builds an :class:`ExperimentConfig` (optionally from a YAML
file, with flags taking precedence) and runs it.  Exit status is 0 on
success, 1 if any sweep point failed and 2 for invalid configuration.
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

from . import __version__
from .experiments import FIGURES, OUT_ENV, ConfigError, ExperimentConfig, run

# subcommand -> experiment id (None: taken from the positional argument)
_SUBCOMMANDS = {
    "simulate": "simulate",
    "cumulant": "cumulant",
    "analytic": "analytic",
    "witness": "fig4",
    "compare": "fig1",
    "sweep": None,
}

_HELP = {
    "simulate": "exact sector simulation: populations, moments, variances, g2, purities",
    "cumulant": "integrate truncated moment systems",
    "analytic": "second-order closed form, short-time series, depletion and threshold times",
    "witness": "entanglement witnesses and purities on the exact state",
    "compare": "exact vs cumulant orders vs closed form, with 1%% deviation times",
    "sweep": "run one figure-analogue experiment",
}


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML file with ExperimentConfig fields")
    p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./trilinear-out)")
    p.add_argument("--alpha2", type=_floats, help="comma-separated initial pump populations")
    p.add_argument("--tau-max", type=float, help="absolute end of the tau grid")
    p.add_argument("--points", type=int, help="number of grid points")
    p.add_argument("--order", type=_ints, help="comma-separated cumulant orders")
    p.add_argument("--delta", type=_floats, help="comma-separated relative thresholds")
    p.add_argument("--theta", type=float, help="signal/idler mixing angle for the witnesses")
    p.add_argument("--jobs", type=int, help="worker processes for sweep points")
    p.add_argument("--plots", action="store_true", default=None, help="also render SVG plots (needs matplotlib)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trilinear", description="Trilinear down-conversion experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in _HELP.items():
        p = sub.add_parser(name, help=help_text)
        if name == "sweep":
            p.add_argument("experiment", nargs="?", choices=FIGURES, help="figure analogue (or set it in --config)")
        _common(p)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {
        "out": args.out,
        "alpha2": args.alpha2,
        "tau_max": args.tau_max,
        "points": args.points,
        "orders": args.order,
        "delta": args.delta,
        "theta": args.theta,
        "jobs": args.jobs,
        "plots": args.plots,
    }
    experiment = _SUBCOMMANDS[args.command] or getattr(args, "experiment", None)
    if experiment is not None:
        overrides["experiment"] = experiment
    if args.config:
        return ExperimentConfig.from_file(args.config, **overrides).validate()
    if experiment is None:
        raise ConfigError("sweep needs an experiment name or a --config file")
    overrides.pop("experiment")
    return ExperimentConfig.for_experiment(experiment, **overrides).validate()


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    result = run(cfg)
    print(json.dumps({"out": str(result.out_dir), "errors": result.manifest.errors, "timings": result.manifest.timings}, indent=2))
    if not result.ok:
        for key, msg in result.manifest.errors.items():
            print(f"point alpha2={key} failed: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
