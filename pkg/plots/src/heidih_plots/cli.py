"""Batch figure rendering: heidih-plots --kind KIND --in CSV [CSV] --out IMG."""

import argparse
import sys

from .figures import FIGURE_KINDS, MissingColumnError, PlotJob, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="heidih-plots", description=__doc__)
    parser.add_argument("--kind", required=True, choices=FIGURE_KINDS)
    parser.add_argument("--in", dest="inputs", required=True, nargs="+", help="input CSV file(s)")
    parser.add_argument("--out", required=True, help="output image (.png or .svg)")
    parser.add_argument(
        "--slopes", type=float, nargs="*", default=[0.5, 1.0], help="reference slopes to overlay"
    )
    args = parser.parse_args(argv)
    job = PlotJob(inputs=tuple(args.inputs), kind=args.kind, output=args.out, reference_slopes=tuple(args.slopes))
    try:
        render(job)
    except (MissingColumnError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"{args.kind} -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
