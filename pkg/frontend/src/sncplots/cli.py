"""sncplots command line: render a figure spec or a named figure."""

from __future__ import annotations

import argparse
import sys

from .figures import NAMED_FIGURES, FigureSpec, PlotError, render


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sncplots", description="Render figures from sncbounds CSV files."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render a figure described by a JSON spec")
    p.add_argument("--spec", required=True, help="path to figure.json")

    for name in NAMED_FIGURES:
        p = sub.add_parser(name, help=f"render {name} from default CSV names")
        p.add_argument(
            "--dir", default=".", help="directory holding the CSVs (and outputs)"
        )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "render":
            outputs = [render(FigureSpec.from_json(args.spec))]
        else:
            outputs = NAMED_FIGURES[args.command](args.dir)
    except PlotError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    for path in outputs:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
