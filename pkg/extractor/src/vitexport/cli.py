"""The vitexport command: run a ViT backbone and export activation files."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .export import ALL_ROLES, ExtractionJob, extract, list_images
from .model import MODELS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vitexport",
        description="Export transformer patch features, CLS attention and crop descriptors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    ex = sub.add_parser("extract", help="run the backbone over a directory of images")
    ex.add_argument("--model", default="vit-s16-dino", choices=sorted(MODELS))
    ex.add_argument("--roles", default="keys,attention",
                    help=f"comma-separated subset of {','.join(ALL_ROLES)}")
    ex.add_argument("--images", required=True, type=Path)
    ex.add_argument("--out", required=True, type=Path)
    ex.add_argument("--weights", type=Path,
                    help="backbone checkpoint; random fixed-seed init when omitted")
    ex.add_argument("--seed", type=int, default=0, help="init seed when --weights is absent")
    ex.add_argument("--boxes", type=Path,
                    help="predictions JSONL supplying the crop boxes (crops role)")
    ex.set_defaults(func=cmd_extract)
    return parser


def cmd_extract(args) -> int:
    roles = tuple(r.strip() for r in args.roles.split(",") if r.strip())
    job = ExtractionJob(
        images=list_images(args.images),
        model_name=args.model,
        roles=roles,
        out_root=args.out,
        weights=str(args.weights) if args.weights else None,
        seed=args.seed,
        boxes=args.boxes,
    )
    manifest = extract(job)
    print(f"extract: {len(job.images)} images -> {manifest.parent}", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:  # console_scripts target
    sys.exit(main())
