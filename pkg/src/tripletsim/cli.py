"""Command-line front end.

Subcommands: simulate (write click files + manifest), analyze (histograms,
correlations, verdicts), budget (analytic rates), sweep (parameter scan
to CSV), report (one-page run summary).

Exit codes: 0 success, 2 usage, 3 configuration, 4 I/O or file format,
5 analysis-domain error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .budget import BUDGET_CSV_HEADER, expected_rates
from .config import apply_overrides, bundled_config_names, load_config
from .errors import AnalysisError, ConfigError, FormatError
from .pipeline import (
    MissingArtifacts,
    analyze_dir,
    render_report,
    run_sweep,
    simulate_to_dir,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_ANALYSIS = 5


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tripletsim",
        description="Simulate and analyze a cascaded photon-triplet source.",
    )
    parser.add_argument("--version", action="version", version=f"tripletsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the Monte Carlo and write .ttag files")
    p.add_argument("--config", required=True, help="config path or bundled name")
    p.add_argument("--out", required=True, help="output run directory")
    p.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        dest="overrides",
        help="override a config value (repeatable, beats file values)",
    )

    p = sub.add_parser("analyze", help="histogram and correlate a run directory")
    p.add_argument("--tags", required=True, help="directory holding chN.ttag files")
    p.add_argument("--out", required=True, help="directory for analysis outputs")
    p.add_argument("--bin-width-ps", type=int, default=None)
    p.add_argument("--range-ps", default=None, metavar="MIN:MAX")
    p.add_argument("--set", action="append", default=[], dest="overrides",
                   metavar="SECTION.KEY=VALUE")

    p = sub.add_parser("budget", help="print analytic expected rates")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", default=[], dest="overrides",
                   metavar="SECTION.KEY=VALUE")
    p.add_argument("--csv", default=None, help="also write the budget as one CSV row")

    p = sub.add_parser("sweep", help="scan one parameter, one CSV row per point")
    p.add_argument("--config", required=True)
    p.add_argument("--param", required=True)
    p.add_argument("--grid", required=True, help="comma-separated values")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--fast", action="store_true", help="budget-only rows, no Monte Carlo")
    p.add_argument("--set", action="append", default=[], dest="overrides",
                   metavar="SECTION.KEY=VALUE")

    p = sub.add_parser("report", help="summarize a simulated+analyzed run directory")
    p.add_argument("--run", required=True)

    sub.add_parser("configs", help="list bundled configuration names")
    return parser


def _load(args) -> "ExperimentConfig":
    config = load_config(args.config)
    if getattr(args, "overrides", None):
        apply_overrides(config, args.overrides)
    return config


def _cmd_simulate(args) -> int:
    config = _load(args)
    manifest = simulate_to_dir(config, args.out)
    print(f"wrote {manifest.parent}")
    return EXIT_OK


def _cmd_analyze(args) -> int:
    range_ps = None
    if args.range_ps is not None:
        try:
            lo, hi = args.range_ps.split(":")
            range_ps = (int(lo), int(hi))
        except ValueError:
            raise ConfigError(f"--range-ps expects MIN:MAX, got {args.range_ps!r}") from None
    out = analyze_dir(
        args.tags,
        args.out,
        bin_width_ps=args.bin_width_ps,
        range_ps=range_ps,
        overrides=args.overrides,
    )
    print(f"analyzed {len(out.counts)} channels -> {args.out}")
    for note in out.notes:
        print(f"note: {note}")
    return EXIT_OK


def _cmd_budget(args) -> int:
    config = _load(args)
    budget = expected_rates(config)
    sys.stdout.write(budget.to_text())
    if args.csv:
        Path(args.csv).write_text(
            BUDGET_CSV_HEADER + "\n" + budget.to_csv_row() + "\n", newline="\n"
        )
    return EXIT_OK


def _cmd_sweep(args) -> int:
    config = _load(args)
    try:
        grid = [float(v) for v in args.grid.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--grid expects comma-separated numbers, got {args.grid!r}") from None
    if not grid:
        raise ConfigError("--grid is empty")
    rows = run_sweep(config, args.param, grid, args.out, fast=args.fast)
    print(f"wrote {len(rows) - 1} rows to {args.out}")
    return EXIT_OK


def _cmd_report(args) -> int:
    try:
        sys.stdout.write(render_report(args.run))
    except MissingArtifacts as err:
        for item in err.missing:
            print(f"missing: {item}")
        return EXIT_IO
    return EXIT_OK


def _cmd_configs(args) -> int:
    for name in bundled_config_names():
        print(name)
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "analyze": _cmd_analyze,
    "budget": _cmd_budget,
    "sweep": _cmd_sweep,
    "report": _cmd_report,
    "configs": _cmd_configs,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except FormatError as err:
        print(f"format error: {err}", file=sys.stderr)
        return EXIT_IO
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO
    except AnalysisError as err:
        print(f"analysis error: {err}", file=sys.stderr)
        return EXIT_ANALYSIS


if __name__ == "__main__":
    sys.exit(main())
