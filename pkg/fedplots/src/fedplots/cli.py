"""Command-line entry point: fedplot curves|bars."""

from __future__ import annotations

import argparse
import sys

from .artifacts import discover
from .errors import EXIT_IO, EXIT_OK, PlotError
from .figures import plot_accuracy_curves, plot_rounds_bar


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedplot",
        description="Plot accuracy curves and rounds-to-target bars from run directories.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("curves", "accuracy vs round, one band per strategy"),
        ("bars", "median rounds to target, grouped by client count"),
    ):
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--runs", nargs="+", required=True, metavar="GLOB",
                         help="run directories or globs over them")
        cmd.add_argument("--target", type=float, required=True,
                         help="target test accuracy")
        cmd.add_argument("--out", required=True, help="output image file")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        handles = discover(args.runs)
        if args.command == "curves":
            out = plot_accuracy_curves(handles, args.target, args.out)
        else:
            by_scale: dict[int, list] = {}
            for handle in handles:
                by_scale.setdefault(handle.clients, []).append(handle)
            out = plot_rounds_bar(by_scale, args.target, args.out)
        print(f"wrote {out}")
    except PlotError as exc:
        print(f"fedplot: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"fedplot: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
