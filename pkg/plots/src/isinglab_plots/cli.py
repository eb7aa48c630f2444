"""Command line figure rendering from isinglab CSV artifacts.

Either pass flags (kind, --csv, --out, ...) or --spec with a JSON file
holding the same fields.  Exit code 2 on schema or data errors, naming the
offending column or file.
"""

from __future__ import annotations

import argparse
import json
import sys

from .figures import FIGURE_KINDS, FigureDataError, FigureSpec, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isinglab-plots",
        description="Render isinglab CSV artifacts into figures")
    parser.add_argument("kind", nargs="?", choices=FIGURE_KINDS,
                        help="figure kind")
    parser.add_argument("--csv", help="input data CSV")
    parser.add_argument("--out", help="output image path (PNG)")
    parser.add_argument("--bounds", help="bound-values CSV to overlay "
                                         "(rho_vs_lambda)")
    parser.add_argument("--logy", action="store_true",
                        help="logarithmic y axis")
    parser.add_argument("--title", help="figure title")
    parser.add_argument("--spec", help="JSON figure spec instead of flags")
    return parser


def spec_from_args(args) -> FigureSpec:
    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            payload = json.load(fh)
        return FigureSpec(kind=payload["kind"],
                          csv_path=payload["csv_path"],
                          output_path=payload["output_path"],
                          bounds_path=payload.get("bounds_path"),
                          log_y=bool(payload.get("log_y", False)),
                          title=payload.get("title"))
    if not (args.kind and args.csv and args.out):
        raise FigureDataError(
            "need either --spec or all of: kind, --csv, --out")
    return FigureSpec(kind=args.kind, csv_path=args.csv,
                      output_path=args.out, bounds_path=args.bounds,
                      log_y=args.logy, title=args.title)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = spec_from_args(args)
        result = render(spec)
    except (FigureDataError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {result.output_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
