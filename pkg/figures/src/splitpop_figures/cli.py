"""Render figures from simulator exports: splitpop-figs <kind> IN OUT."""

from __future__ import annotations

import argparse
import sys

from .io import SchemaError
from .plots import FigureSpec, plot_extreme_convergence, plot_spectrum


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(prog="splitpop-figs")
    sub = parser.add_subparsers(dest="kind", required=True)
    for name, help_text in (
        ("spectrum", "empirical vs exact frequency spectrum (checks CSV input)"),
        ("convergence", "extreme-CDF convergence over horizons (report JSON input)"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("source")
        p.add_argument("out")
        p.add_argument("--title", default="")
    args = parser.parse_args(argv)
    spec = FigureSpec(source=args.source, out=args.out, title=args.title)
    try:
        if args.kind == "spectrum":
            plot_spectrum(spec)
        else:
            plot_extreme_convergence(spec)
    except (OSError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        sys.exit(2)
