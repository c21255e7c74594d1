"""Command-line figure rendering from metrics CSVs."""

from __future__ import annotations

import argparse
import sys

from .core import PlotSpec, plot_loss_curves
from .errors import PlotError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot",
        description="Draw per-scheme mean validation-loss curves from metrics CSVs.",
    )
    parser.add_argument(
        "--inputs",
        nargs="+",
        required=True,
        metavar="CSV",
        help="one metrics CSV per scheme",
    )
    parser.add_argument(
        "--group", type=int, default=0, help="task group to average over (default 0)"
    )
    parser.add_argument("--out", required=True, help="output image path (raster)")
    parser.add_argument(
        "--title", default="Mean validation loss per round", help="figure title"
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        spec = PlotSpec(
            inputs=tuple(args.inputs), group=args.group, out=args.out, title=args.title
        )
        image_path, table_path = plot_loss_curves(spec)
    except PlotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {image_path}")
    print(f"wrote {table_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
