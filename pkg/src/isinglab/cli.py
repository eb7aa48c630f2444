"""Command line interface: run experiments, check acceptance, list kernels.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 acceptance failure in check mode.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_CHECK_FAILED = 4

KERNEL_HELP = """\
Supported kernel families ([kernel] section):

  type = modes          g(t) = sum_j w_j exp(-f_j |t|)
    weights = 1.0       comma or space separated, w_j >= 0
    freqs   = 1.0       f_j > 0

  type = powerlaw       radial spectral density |k|^(-2 delta), cutoff K
    dim    = 3          spatial dimension (1, 2 or 3)
    delta  = 0.5        delta < dim/2; delta = dim/2 - 1 is the marginal case
    cutoff = 1.0        K > 0

  type = poly           g(t) = C / (1 + t^2)
    amplitude = 1.0     C > 0
"""


def _cmd_run(args) -> int:
    from .config import ConfigError, load_config
    from .continuum import EnergyDriftError
    from .fock import DegenerateGroundStateError
    from .kernels import QuadratureError
    from .runner import run_experiment
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        files = run_experiment(config)
    except (QuadratureError, EnergyDriftError, DegenerateGroundStateError,
            FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for name, path in sorted(files.items()):
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_check(args) -> int:
    from .acceptance import SUITES, run_suite
    if args.suite not in SUITES:
        print(f"unknown suite {args.suite!r}; choose from "
              f"{', '.join(SUITES)}", file=sys.stderr)
        return EXIT_CONFIG
    results = run_suite(args.suite)
    if args.output:
        os.makedirs(args.output, exist_ok=True)
        path = os.path.join(args.output, f"verdicts_{args.suite}.jsonl")
        with open(path, "w", encoding="utf-8") as fh:
            for result in results:
                fh.write(json.dumps(result.verdict(), sort_keys=True) + "\n")
        print(f"wrote {path}")
    n_failed = sum(1 for r in results if not r.passed)
    print(f"{len(results) - n_failed}/{len(results)} criteria passed")
    return EXIT_OK if n_failed == 0 else EXIT_CHECK_FAILED


def _cmd_kernels(args) -> int:
    if args.action == "list":
        print(KERNEL_HELP, end="")
        return EXIT_OK
    print(f"unknown kernels action {args.action!r}", file=sys.stderr)
    return EXIT_CONFIG


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isinglab",
        description="Sampling laboratory for a long-range continuum Ising "
                    "path measure and its couplings")
    sub = parser.add_subparsers(dest="command")
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config", help="path to the INI config file")
    p_check = sub.add_parser("check", help="run an acceptance suite")
    p_check.add_argument("suite", help="fast or full")
    p_check.add_argument("--output", help="directory for the JSON verdicts")
    p_kernels = sub.add_parser("kernels", help="kernel family reference")
    p_kernels.add_argument("action", nargs="?", default="list")
    sub.add_parser("version", help="print the tool version")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "check":
        return _cmd_check(args)
    if args.command == "kernels":
        return _cmd_kernels(args)
    if args.command == "version":
        print(__version__)
        return EXIT_OK
    build_parser().print_help()
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
