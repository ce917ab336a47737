"""Command line: render one figure id from one or more run directories."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import FIGURE_IDS, FigureSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="render_figures",
        description="Render figures from temsim run directories (reads CSVs only).",
    )
    parser.add_argument("--run", required=True, help="primary run directory")
    parser.add_argument(
        "--compare", nargs="*", default=[], help="additional run directories to overlay"
    )
    parser.add_argument("--fig", required=True, choices=FIGURE_IDS)
    parser.add_argument("--out", required=True, help="output image path (.png or .svg)")
    parser.add_argument("--title", default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    runs = tuple(Path(p) for p in [args.run, *args.compare])
    for run in runs:
        if not run.is_dir():
            print(f"error: run directory {run} does not exist", file=sys.stderr)
            return 1
    try:
        out = render(FigureSpec(args.fig, runs, Path(args.out), title=args.title))
    except (SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
