"""Command line: plot --kind <k> --out <file> <csv...>"""
from __future__ import annotations

import argparse
import sys

from .logfile import SchemaMismatch
from .render import KINDS, render_paths


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot",
        description="Render comparison figures from benchmark trajectory CSV logs.",
    )
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--out", required=True, help="output image path (extension picks format)")
    parser.add_argument("--title", default=None)
    parser.add_argument("csv", nargs="+", help="trajectory CSV files sharing one time grid")
    args = parser.parse_args(argv)
    try:
        out = render_paths(args.kind, args.csv, args.out, args.title)
    except (SchemaMismatch, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
