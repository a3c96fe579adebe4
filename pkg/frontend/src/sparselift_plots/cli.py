"""plots CLI: render bench CSVs to images.

Usage: plots heatmap|sweep --in <csv> --out <img> [--color-scale linear|log]
       plots sweep ... [--fit <fit.csv>] [--p <ambient dimension>]
Exit codes: 0 success, 2 missing/invalid input.
"""

import argparse
import os
import sys

from .render import FigureSpec, SchemaError, plot_heatmap, plot_sweep


def _build_parser():
    parser = argparse.ArgumentParser(prog="plots", description="Render sparselift bench CSVs.")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in ("heatmap", "sweep"):
        sp = sub.add_parser(kind, help=f"render a {kind} from a summary.csv")
        sp.add_argument("--in", dest="input", required=True, help="summary.csv path")
        sp.add_argument("--out", dest="output", required=True, help="output image path")
        sp.add_argument("--color-scale", choices=["linear", "log"], default="linear")
        if kind == "sweep":
            sp.add_argument("--fit", help="fit.csv path (default: fit.csv next to the summary)")
            sp.add_argument("--p", type=int, help="ambient dimension for the fitted curve")
    return parser


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not os.path.isfile(args.input):
        print(f"input not found: {args.input}", file=sys.stderr)
        return 2
    spec = FigureSpec(args.input, args.command, args.output, args.color_scale)
    try:
        if args.command == "heatmap":
            out = plot_heatmap(spec)
        else:
            fit_path = args.fit
            if fit_path is None:
                candidate = os.path.join(os.path.dirname(args.input) or ".", "fit.csv")
                fit_path = candidate if os.path.isfile(candidate) else None
            elif not os.path.isfile(fit_path):
                print(f"fit file not found: {fit_path}", file=sys.stderr)
                return 2
            out = plot_sweep(spec, fit_path=fit_path, p=args.p)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


def main():
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
