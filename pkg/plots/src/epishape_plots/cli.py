"""Command-line front end: one subcommand per figure kind."""

from __future__ import annotations

import argparse
import sys

from .figures import plot_decay, plot_radial, plot_sandwich, plot_shape
from .readers import SchemaError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epishape-plots",
        description="Render figures from epishape CSV/JSON artifacts",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decay", help="log-survival scatter with fitted decay line")
    p.add_argument("--curves", required=True, help="curves.csv")
    p.add_argument("--fit", required=True, help="fit.json")
    p.add_argument("--out", required=True, help="output image (.svg or .png)")

    p = sub.add_parser("shape2d", help="2-d slice of the rescaled shape cloud")
    p.add_argument("--cloud", required=True, help="cloud.csv")
    p.add_argument("--radii", required=True, help="radii.csv")
    p.add_argument("--axes", type=int, nargs=2, default=(0, 1), help="axis pair")
    p.add_argument("--eps", type=float, default=0.3, help="outline scaling margin")
    p.add_argument("--out", required=True)

    p = sub.add_parser("radial", help="ratio convergence along a ray")
    p.add_argument("--radial", required=True, help="radial.csv")
    p.add_argument("--out", required=True)

    p = sub.add_parser("sandwich", help="inclusion fractions along the time ladder")
    p.add_argument("--sandwich", required=True, help="sandwich.csv")
    p.add_argument("--out", required=True)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "decay":
            out = plot_decay(args.curves, args.fit, args.out)
        elif args.command == "shape2d":
            out = plot_shape(args.cloud, args.radii, args.out, tuple(args.axes), args.eps)
        elif args.command == "radial":
            out = plot_radial(args.radial, args.out)
        else:
            out = plot_sandwich(args.sandwich, args.out)
    except (SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"{args.command}: wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
