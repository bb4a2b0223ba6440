"""Command-line front end: render figure families from sweep CSVs."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import render
from .spec import load_figure_spec


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="figplots",
        description="Render static figures from protocol security sweep CSVs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    rp = sub.add_parser("render", help="render one figure family from a CSV")
    rp.add_argument("--spec", required=True,
                    help="figure spec file (flat key=value format)")
    rp.add_argument("--csv", help="input CSV, overriding the spec's csv key")
    rp.add_argument("--out", help="output directory, overriding the spec's out key")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        spec = load_figure_spec(args.spec)
        spec = spec.with_paths(
            Path(args.csv) if args.csv else None,
            Path(args.out) if args.out else None,
        )
        for path in render(spec):
            print(path)
    except (ValueError, OSError) as err:
        print(f"figplots: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
