"""Render markovlens CSV artifacts to figures.

Exit codes: 0 rendered, 1 a numeric check failed (asymptote assertion),
2 unusable input (missing file/column, empty CSV, bad flags).
"""

from __future__ import annotations

import argparse
import sys

from .io import ArtifactError
from .render import AsymptoteError, FigureSpec, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="markovlens-plots",
        description="Offline rendering of markovlens CSV artifacts.",
    )
    parser.add_argument("--kind", choices=["loss_curve", "pq_grid", "pred_scatter"],
                        required=True)
    parser.add_argument("--in", dest="source", required=True, help="input CSV")
    parser.add_argument("--out", required=True, help="output image (.png or .svg)")
    parser.add_argument("--require-asymptote", dest="require_asymptote",
                        choices=["entropy_rate", "marginal_entropy"], default=None,
                        help="fail unless the loss-curve tail sits on this baseline")
    parser.add_argument("--band", type=float, default=0.02,
                        help="asymptote tolerance band in nats")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    spec = FigureSpec(kind=args.kind, source=args.source, out=args.out,
                      require_asymptote=args.require_asymptote,
                      asymptote_band=args.band)
    try:
        report = render(spec)
    except AsymptoteError as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return 1
    except (ArtifactError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {report.out}")
    if report.nearest_baseline is not None:
        print(f"tail mean {report.tail_mean:.6g}, nearest baseline "
              f"{report.nearest_baseline} (max dev {report.tail_max_dev:.6g})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
