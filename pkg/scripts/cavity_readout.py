"""
Cavity Readout - command line

Runs one subcommand against a run configuration:
  spectrum   transmission / reflection versus laser-cavity detuning
  trace      simulated quantum-jump count record
  pmf        joint count pmfs and decision map
  errors     thresholding and maximum-likelihood error rates
  optimize   thresholding error versus detection time
  prepare    single-atom preparation statistics

Every run is recorded in runs.db under DATA_DIR.

Usage:
    uv run python scripts/cavity_readout.py errors --config configs/readout_errors.cfg --seed 7 --out out/
    uv run python scripts/cavity_readout.py spectrum --config configs/empty_cavity.cfg --seed 0 --out out/ --workers 4
    uv run python scripts/cavity_readout.py --runs   # list recorded runs
"""

import argparse
import os
import sys
from pathlib import Path

# Ensure project root is on sys.path for imports
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from dotenv import load_dotenv

load_dotenv()

from src.cavity.lindblad import SolverError
from src.config.loader import ConfigError, load_config
from src.pipeline.commands import COMMANDS
from src.storage.runs import RunStore

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get("CAVITY_READOUT_WORKERS", "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Cavity QED hyperfine readout toolkit")
    parser.add_argument("--runs", action="store_true", help="List recorded runs and exit")
    sub = parser.add_subparsers(dest="command")
    for name, func in COMMANDS.items():
        p = sub.add_parser(name, help=(func.__doc__ or "").strip().splitlines()[0])
        p.add_argument("--config", required=True, type=Path, help="Run configuration file")
        p.add_argument("--seed", required=True, type=_u64, help="Master seed (unsigned 64-bit)")
        p.add_argument("--out", required=True, type=Path, help="Output directory")
        p.add_argument("--workers", type=int, default=_default_workers(),
                       help="Worker processes (default: $CAVITY_READOUT_WORKERS or 1)")
    return parser


def show_runs(store: RunStore) -> None:
    """Print the run ledger, newest first."""
    stats = store.stats()
    print("=" * 60)
    print(f"Recorded runs: {stats['total_runs']} "
          f"({stats['completed']} completed, {stats['failed']} failed)")
    print("=" * 60)
    for run in store.get_runs():
        print(f"  #{run['id']} {run['command']:<9} {run['status']:<9} "
              f"seed={run['master_seed']} {run['config_path']} ({run['started_at']})")
        for result in store.get_results(run["id"]):
            value = result["value"]
            print(f"      {result['name']} = {'-' if value is None else format(value, '.6g')}")


def run_command(args, store: RunStore) -> int:
    """Load the config, run one subcommand and record it. Returns the exit code."""
    run_id = store.create_run(args.command, str(args.config), seed=args.seed,
                              workers=args.workers, out_dir=str(args.out))
    try:
        config = load_config(args.config, master_seed=args.seed, workers=args.workers, out_dir=args.out)
    except ConfigError as exc:
        for line in exc.diagnostics:
            print(f"config error: {line}", file=sys.stderr)
        store.finish_run(run_id, status="failed", error=str(exc))
        return EXIT_CONFIG

    store.record_config(run_id, config.sha256)
    try:
        result = COMMANDS[args.command](config)
    except SolverError as exc:
        residual = f" (residual {exc.residual:.3e})" if exc.residual is not None else ""
        print(f"numerical failure in {args.command}: {exc}{residual}", file=sys.stderr)
        store.finish_run(run_id, status="failed", error=str(exc))
        return EXIT_NUMERICAL
    except (ValueError, KeyError) as exc:
        message = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        print(f"error in {args.command}: {message}", file=sys.stderr)
        store.finish_run(run_id, status="failed", error=str(message))
        return EXIT_NUMERICAL

    store.add_results(run_id, result.summary)
    store.finish_run(run_id, outputs=[str(p) for p in result.files])
    print(f"\nDone. Run #{run_id} wrote {len(result.files)} file(s) to {args.out}")
    for path in result.files:
        print(f"  {path}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    store = RunStore()
    try:
        if args.runs:
            show_runs(store)
            return EXIT_OK
        if args.command is None:
            parser.print_help()
            return EXIT_CONFIG
        if args.workers < 1:
            print(f"config error: --workers must be >= 1, got {args.workers}", file=sys.stderr)
            return EXIT_CONFIG
        return run_command(args, store)
    finally:
        store.close()


if __name__ == "__main__":
    sys.exit(main())
