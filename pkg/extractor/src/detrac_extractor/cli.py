"""CLI: ``detrac-extract export --root DIR --backbone NAME --out FILE``."""

from __future__ import annotations

import argparse
import sys

from .backbone import BACKBONE_WIDTHS, ExtractorConfig, WeightsUnavailable
from .errors import ExtractorError
from .export import export_features


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="detrac-extract")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="export penultimate features for a manifest")
    p.add_argument("--root", required=True, help="image manifest root")
    p.add_argument("--out", required=True, help="output .dtrc feature file")
    p.add_argument("--backbone", default="resnet18", choices=sorted(BACKBONE_WIDTHS))
    p.add_argument(
        "--weights", default="pretrained", choices=("pretrained", "random"),
        help="pretrained needs download access; random is seeded and offline",
    )
    p.add_argument("--seed", type=int, default=0, help="seed for random weights")
    p.add_argument("--batch-size", type=int, default=16)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    cfg = ExtractorConfig(
        backbone=args.backbone,
        weights=args.weights,
        seed=args.seed,
        batch_size=args.batch_size,
    )
    try:
        summary = export_features(args.root, args.out, cfg)
    except WeightsUnavailable as e:
        print(f"error: {e}", file=sys.stderr)
        print("hint: use --weights random for an offline run", file=sys.stderr)
        return 3
    except ExtractorError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(
        f"wrote {args.out} (n={summary['n']}, m={summary['m']}, "
        f"classes={len(summary['classes'])})"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
