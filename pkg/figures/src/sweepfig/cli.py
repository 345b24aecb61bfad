"""`plot` command: render sweep CSVs into PNG and SVG charts."""

from __future__ import annotations

import argparse
import sys

from .plotting import plot_se_vs_axis
from .table import SchemaError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot", description="Plot average-SE sweep results from a CSV file"
    )
    parser.add_argument("--in", dest="csv_path", required=True, help="sweep CSV file")
    parser.add_argument("--axis", choices=("N", "M", "K"), required=True)
    parser.add_argument("--out", required=True, help="output image path (.png)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        written = plot_se_vs_axis(args.csv_path, args.axis, args.out)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
