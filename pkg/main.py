#!/usr/bin/env python3
"""
hidden-vi v1.0 - Surrogate methods for VIs with hidden monotone structure
File: main.py
Entry point for the hidden-vi command line: run experiments, verify, list
"""

import argparse
import logging
import sys
from pathlib import Path

import ujson

from core.errors import ConfigError, HiddenVIError, NumericalBlowup
from harness import __version__
from harness.config import load_config, resolve_threads
from harness.experiments import CATALOG
from harness.runner import run_experiment, summarize
from harness.verify import VerifyOptions, run_suites

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_BLOWUP = 3
EXIT_RUN_FAILED = EXIT_BLOWUP


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hidden-vi", description="Surrogate-loss solvers for hidden-structure VIs")
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    parser.add_argument("--quiet", "-q", action="store_true", help="no banner and no progress bars")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config", help="path to a JSON experiment config")
    run.add_argument("--seed", type=int, default=None, help="override the master seed")
    run.add_argument("--out", default=None, help="override the output directory")
    run.add_argument("--threads", type=int, default=None, help="worker threads (default: $HIDDEN_VI_THREADS or 1)")

    verify = sub.add_parser("verify", help="run every verification suite")
    verify.add_argument("--corrupt-jacobian", action="store_true", help=argparse.SUPPRESS)

    listing = sub.add_parser("list", help="list available experiments")
    listing.add_argument("--json", action="store_true", help="machine-readable output")
    return parser


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config, seed=args.seed, out=args.out)
        threads = resolve_threads(args.threads)
    except ConfigError as e:
        print(f"Config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        manifest = run_experiment(cfg, threads, progress=not args.quiet)
    except NumericalBlowup as e:
        print(f"Numerical blowup in {e.label or 'run'}: {e}", file=sys.stderr)
        print(f"Partial results kept in {cfg.output_path}", file=sys.stderr)
        return EXIT_BLOWUP
    except ConfigError as e:
        print(f"Config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except HiddenVIError as e:
        print(f"Run failed in {getattr(e, 'label', None) or 'run'}: {e}", file=sys.stderr)
        print(f"Partial results kept in {cfg.output_path}", file=sys.stderr)
        return EXIT_RUN_FAILED
    table = summarize(Path(cfg.output_path), manifest)
    print(f"\n{cfg.experiment}: {cfg.seeds} run(s) in {manifest.wall_seconds:.2f}s -> {cfg.output_path}")
    if not table.empty:
        print(table.to_string(index=False))
    return EXIT_OK


def cmd_verify(args) -> int:
    reports = run_suites(VerifyOptions(corrupt_jacobian=args.corrupt_jacobian), progress=not args.quiet)
    width = max(len(r.name) for r in reports)
    print()
    for r in reports:
        print(f"{r.name:<{width}}  {'PASS' if r.ok else 'FAIL'}  {r.seconds:7.2f}s  {r.detail}")
    failed = [r.name for r in reports if not r.ok]
    print("-" * 60)
    if failed:
        print(f"{len(failed)} suite(s) failed: {', '.join(failed)}")
        return EXIT_VERIFY_FAILED
    print(f"All {len(reports)} suites passed")
    return EXIT_OK


def cmd_list(args) -> int:
    entries = [{"name": i.name, "figure": i.figure, "description": i.description} for i in CATALOG.values()]
    if args.json:
        print(ujson.dumps(entries, indent=2))
        return EXIT_OK
    for e in entries:
        print(f"{e['name']:<18} [{e['figure']}] {e['description']}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "verify": cmd_verify, "list": cmd_list}


def main(argv=None) -> int:
    """Main application entry point"""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if not args.quiet and args.command != "list":
        print("=" * 60)
        print(f"Starting hidden-vi v{__version__} - surrogate methods for hidden monotone VIs")
        print(f"Command: {args.command}")
        print("=" * 60)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
