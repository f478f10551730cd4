#!/usr/bin/env python3
"""
Delayed-window entropy ergodic theorem experiments
Main entry point for running experiments, checking conditions and inspecting chains
"""

import argparse
import json
import logging
import math
import sys
import traceback
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from cli_runner import (
    ExperimentRunner,
    apply_overrides,
    counterexample_table,
    load_config,
    load_matrix_file,
    stationary_report,
)
from config import Config
from errors import ConfigValidationError, DelayedAEPError
from models import ExperimentConfig
from preset_manager import PresetManager

EXIT_CODES = [
    (0, "success"),
    (1, "unexpected error"),
    (2, "usage error (bad command line)"),
    (3, "config parse error (malformed JSON, with line and column)"),
    (4, "config validation error (every failing field is listed)"),
    (5, "invalid matrix or distribution (negative entry, row sum, size mismatch)"),
    (6, "matrix not irreducible"),
    (7, "overflow risk (grid beyond the step budget)"),
    (8, "zero-probability step or non-finite input"),
    (9, "I/O error"),
]

console = Console()
err_console = Console(stderr=True)
logger = logging.getLogger("delayed_aep")


def setup_logging(verbose: bool):
    level = logging.DEBUG if verbose else getattr(logging, Config.LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(level=level, format="%(message)s", datefmt="[%X]",
                        handlers=[RichHandler(console=err_console, show_path=False)], force=True)


def resolve_config(target: str) -> ExperimentConfig:
    """A config file path, or the key of a committed preset"""
    if Path(target).is_file():
        return load_config(target)
    presets = PresetManager()
    if presets.get_preset(target):
        logger.info("Using preset '%s'", target)
        return presets.load_config(target)
    raise FileNotFoundError(f"no config file or preset named {target!r}")


def print_conditions(conditions: List[dict]):
    table = Table(title="Condition checks")
    table.add_column("condition")
    table.add_column("grid")
    table.add_column("last value", justify="right")
    table.add_column("verdict")
    for report in conditions:
        grid = report["grid"]
        span = f"{grid[0]}..{grid[-1]} ({len(grid)} pts)" if len(grid) > 1 else str(grid[0])
        table.add_row(report["condition_id"], span, f"{report['values'][-1]:.6g}", report["verdict"])
    console.print(table)
    for report in conditions:
        if report.get("rationale"):
            console.print(f"[dim]{report['condition_id']}: {report['rationale']}[/dim]")


def print_ensemble(summary: List[dict]):
    table = Table(title="Seed averages per grid point")
    for column in ("n", "seeds", "mean f", "mean |f-H|", "mean |H^-H|", "freq err", "pair err", "E f <= 2 log b"):
        table.add_column(column, justify="right")
    for row in summary:
        table.add_row(str(row["n"]), str(row["seeds"]), f"{row['mean_f']:.6g}", f"{row['mean_abs_err_f']:.3e}",
                      f"{row['mean_abs_err_hhat']:.3e}", f"{row['mean_freq_err_max']:.3e}",
                      f"{row['mean_pair_err_max']:.3e}", "yes" if row["mean_f_within_bound"] else "NO")
    console.print(table)


def cmd_run(args) -> int:
    config = apply_overrides(resolve_config(args.config), seed=args.seed, out_dir=args.out_dir,
                             fmt=args.format, jobs=args.jobs)
    artifacts = ExperimentRunner(config).run()
    payload = json.loads(Path(artifacts.conditions_path).read_text(encoding="utf-8"))
    print_conditions(payload["conditions"])
    print_ensemble(payload.get("ensemble", []))
    console.print(f"\nRun {artifacts.run_id}: {artifacts.record_count} records")
    console.print(f"Results:    {artifacts.results_path}")
    console.print(f"Conditions: {artifacts.conditions_path}")
    console.print(f"Manifest:   {artifacts.manifest_path}")
    return 0


def cmd_check(args) -> int:
    config = apply_overrides(resolve_config(args.config), seed=args.seed, out_dir=args.out_dir,
                             fmt=args.format, jobs=args.jobs)
    artifacts = ExperimentRunner(config).check()
    payload = json.loads(Path(artifacts.conditions_path).read_text(encoding="utf-8"))
    print_conditions(payload["conditions"])
    console.print(f"\nConditions: {artifacts.conditions_path}")
    return 0


def cmd_counterexample(args) -> int:
    rows = counterexample_table(args.n_max)
    table = Table(title="Counterexample: windowed deviation stays at 1/6, prefix deviation decays")
    table.add_column("n", justify="right")
    table.add_column("windowed (a=2^n, phi=n)", justify="right")
    table.add_column("prefix at 2^n", justify="right")
    table.add_column("prefix bound", justify="right")
    for row in rows:
        table.add_row(str(row["n"]), f"{row['windowed']:.10f}", f"{row['prefix_at_2^n']:.6e}",
                      f"{row['prefix_bound']:.6e}")
    console.print(table)
    return 0


def cmd_stationary(args) -> int:
    report = stationary_report(load_matrix_file(args.matrix), args.cesaro_m)
    unit = "bits" if args.bits else "nats"
    rate = report["entropy_rate"] / math.log(2.0) if args.bits else report["entropy_rate"]
    table = Table(title="Stationary distribution")
    table.add_column("state", justify="right")
    table.add_column("pi (linear solve)", justify="right")
    for i in range(len(report["pi"])):
        table.add_column(f"Cesaro row {i + 1}", justify="right")
    for j, weight in enumerate(report["pi"]):
        table.add_row(str(j + 1), f"{weight:.10f}", *(f"{row[j]:.10f}" for row in report["cesaro_rows"]))
    console.print(table)
    console.print(f"Residual ||pi P - pi||_inf: {report['residual']:.3e}")
    console.print(f"Entropy rate H: {rate:.9g} {unit}/step")
    console.print(f"Cesaro cross-check (m={report['cesaro_m']}): max gap {report['cesaro_max_gap']:.3e}")
    return 0


def cmd_schema(args) -> int:
    sys.stdout.write(json.dumps(ExperimentConfig.model_json_schema(), indent=2) + "\n")
    return 0


def cmd_presets(args) -> int:
    table = Table(title="Presets")
    table.add_column("key")
    table.add_column("description")
    for key, preset in PresetManager().get_all_presets().items():
        table.add_row(key, preset["description"])
    console.print(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    epilog = "exit codes:\n" + "\n".join(f"  {code}  {meaning}" for code, meaning in EXIT_CODES)
    parser = argparse.ArgumentParser(
        prog="delayed-aep",
        description="Simulate nonhomogeneous Markov chains and check delayed-window entropy convergence",
        epilog=epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {Config.TOOL_VERSION} (config schema {Config.SCHEMA_VERSION})")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    overrides = argparse.ArgumentParser(add_help=False)
    overrides.add_argument("config", help="config file path or preset key")
    overrides.add_argument("--seed", type=int, help="run a single seed instead of the config's list")
    overrides.add_argument("--out-dir", help="output directory")
    overrides.add_argument("--format", choices=["csv", "json"], help="results file format")
    overrides.add_argument("--jobs", type=int, help="worker processes across seeds")

    run = sub.add_parser("run", parents=[overrides], help="full experiment: conditions, simulation, outputs")
    run.set_defaults(handler=cmd_run)
    check = sub.add_parser("check", parents=[overrides], help="condition reports only, no simulation")
    check.set_defaults(handler=cmd_check)

    counter = sub.add_parser("counterexample", help="windowed vs prefix deviation table of the counterexample")
    counter.add_argument("--n-max", type=int, default=20)
    counter.set_defaults(handler=cmd_counterexample)

    stationary = sub.add_parser("stationary", help="pi, entropy rate and the Cesaro cross-check of a matrix")
    stationary.add_argument("matrix", help="JSON matrix file")
    stationary.add_argument("--cesaro-m", type=int, default=Config.DEFAULT_CESARO_M)
    stationary.add_argument("--bits", action="store_true", help="report the entropy rate in bits")
    stationary.set_defaults(handler=cmd_stationary)

    schema = sub.add_parser("schema", help="print the experiment config JSON schema")
    schema.set_defaults(handler=cmd_schema)
    presets = sub.add_parser("presets", help="list committed presets")
    presets.set_defaults(handler=cmd_presets)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main execution function"""
    load_dotenv()
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    try:
        return args.handler(args)
    except ConfigValidationError as e:
        err_console.print(f"[red]Config validation failed[/red]: {e}")
        return e.exit_code
    except DelayedAEPError as e:
        err_console.print(f"[red]{type(e).__name__}[/red]: {e}")
        return e.exit_code
    except OSError as e:
        err_console.print(f"[red]I/O error[/red]: {e}")
        return 9
    except Exception as e:
        err_console.print(f"[red]Error during processing[/red]: {e}")
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
