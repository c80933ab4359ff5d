"""`certify` command line interface.

    certify run <config.toml> [overrides]
    certify builtin <name> [--out report.json] [overrides]
    certify report <report.json> --summary

Overrides: --seed, --samples (Monte Carlo only), --mode as_stated|sqrt|both,
and --emit-density X|Y --bins N --range lo,hi to request a density CSV.
The exit code is 0 iff a report was written; failures print a
stage-tagged message on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from .experiment import (
    BUILTIN_MODELS,
    DensitySpec,
    ExperimentConfig,
    StageError,
    builtin_model,
    load_config,
    run_experiment,
)
from .moments import GaussHermite, MonteCarlo

_MODE_CHOICES = {
    "as_stated": ("as_stated",),
    "sqrt": ("sqrt_second_term",),
    "both": ("as_stated", "sqrt_second_term"),
}


def _add_override_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="override the Monte Carlo seed")
    parser.add_argument(
        "--samples", type=int, default=None, help="override the Monte Carlo sample count"
    )
    parser.add_argument(
        "--mode",
        choices=sorted(_MODE_CHOICES),
        default=None,
        help="bound mode(s) to report",
    )
    parser.add_argument(
        "--emit-density",
        choices=("X", "Y"),
        default=None,
        help="emit a density CSV for the prediction (X) or measurement (Y)",
    )
    parser.add_argument("--bins", type=int, default=100, help="density histogram bins")
    parser.add_argument(
        "--range", dest="density_range", default=None, help="density range as lo,hi"
    )


def _apply_overrides(config: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    changes: dict = {}
    if args.seed is not None or args.samples is not None:
        if not isinstance(config.scheme, MonteCarlo):
            raise ValueError("--seed/--samples apply only to Monte Carlo schemes")
        changes["scheme"] = MonteCarlo(
            count=args.samples if args.samples is not None else config.scheme.count,
            seed=args.seed if args.seed is not None else config.scheme.seed,
        )
    if args.mode is not None:
        changes["modes"] = _MODE_CHOICES[args.mode]
    if getattr(args, "out", None):
        changes["report_path"] = args.out
    if args.emit_density is not None:
        if args.density_range is None:
            raise ValueError("--emit-density requires --range lo,hi")
        try:
            lo, hi = (float(part) for part in args.density_range.split(","))
        except ValueError as exc:
            raise ValueError(f"--range must be lo,hi with numeric bounds: {exc}") from exc
        report_path = changes.get("report_path", config.report_path)
        base, _ = os.path.splitext(report_path)
        changes["density"] = DensitySpec(
            variable=args.emit_density,
            bins=args.bins,
            lo=lo,
            hi=hi,
            path=f"{base}-density.csv",
        )
    return dataclasses.replace(config, **changes) if changes else config


def _run(config: ExperimentConfig) -> int:
    report = run_experiment(config)
    totals = ", ".join(
        f"{mode}: {entry['total']:.6g}" for mode, entry in sorted(report["bounds"].items())
    )
    print(f"report written to {config.report_path} ({totals})")
    return 0


def _summarize(path: str) -> int:
    with open(path) as fh:
        report = json.load(fh)
    name = report.get("config", {}).get("name") or path
    print(f"report: {name} (schema {report.get('schema_version')})")
    for mode, entry in sorted(report.get("bounds", {}).items()):
        print(
            f"  bound[{mode}]: total={entry['total']:.6g} "
            f"(poincare={entry['poincare_term']:.6g}, gap={entry['gauss_gap_term']:.6g}, "
            f"mean_gap={entry['mean_gap']:.3g})"
        )
    distances = report.get("distances", {})
    if distances:
        centered = distances.get("w1_centered")
        centered_text = "n/a" if centered is None else f"{centered:.6g}"
        print(
            f"  distances: w2={distances['w2_exact']:.6g} "
            f"w1_upper={distances['w1_upper']:.6g} w1_centered={centered_text} "
            f"kl={distances['kl']:.6g}"
        )
    empirical = report.get("empirical_w1")
    if empirical:
        print(
            f"  empirical W1: {empirical['estimate']:.6g} "
            f"+- {empirical['std_error']:.2g} ({empirical['samples']} samples)"
        )
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="certify",
        description="One-step Gaussian filtering with certified Wasserstein error bounds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="run an experiment from a TOML config")
    run_parser.add_argument("config", help="path to the experiment config")
    _add_override_flags(run_parser)

    builtin_parser = sub.add_parser("builtin", help="run a built-in benchmark model")
    builtin_parser.add_argument("name", help=f"one of: {', '.join(sorted(BUILTIN_MODELS))}")
    builtin_parser.add_argument("--out", default=None, help="report output path")
    _add_override_flags(builtin_parser)

    report_parser = sub.add_parser("report", help="inspect a written report")
    report_parser.add_argument("path", help="path to a report JSON file")
    report_parser.add_argument(
        "--summary", action="store_true", help="pretty-print the bound totals"
    )

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            config = _apply_overrides(load_config(args.config), args)
            return _run(config)
        if args.command == "builtin":
            config = _apply_overrides(builtin_model(args.name), args)
            return _run(config)
        if not args.summary:
            print("nothing to do: pass --summary", file=sys.stderr)
            return 2
        return _summarize(args.path)
    except StageError as exc:
        print(f"error {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        detail = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error [config] {detail}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
