"""Command-line entry point: extract RMAP stacks for a whole dataset.

Usage:

  patchdex-extract --manifest data/manifest.json --images data/images \
      --out data/maps --network vgg19 --levels 4 --area 360000

Levels and area default to the manifest's values (per-role level counts
when --levels is absent).  Query images are extended by half the
network receptive field around their bbox, cropped, and then resized.
"""

from __future__ import annotations

import argparse
import sys

from .backbones import NETWORK_IDS, ExtractorConfig
from .errors import ExtractorError
from .extract import run_extraction
from .rmap import read_manifest


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="patchdex-extract",
        description="Extract multi-scale convolutional response maps as RMAP files.",
    )
    p.add_argument("--manifest", required=True, help="dataset manifest JSON")
    p.add_argument("--images", required=True, help="directory holding <image_id>.<ext> files")
    p.add_argument("--out", required=True, help="directory for the emitted .rmap files")
    p.add_argument("--network", default="vgg19", choices=list(NETWORK_IDS),
                   help="backbone to run (default: vgg19)")
    p.add_argument("--levels", type=int, default=None,
                   help="emit this many scale levels for every image "
                        "(default: the manifest's per-role counts)")
    p.add_argument("--area", type=int, default=None,
                   help="target pixel area before scaling (default: manifest value)")
    p.add_argument("--layer", type=int, default=None,
                   help="cut after this convolution (1-based; default: last)")
    p.add_argument("--seed", type=int, default=0,
                   help="initialization seed for the random networks")
    p.add_argument("--weights", default=None,
                   help="local state-dict file for the pretrained network")
    p.add_argument("--per-patch", action="store_true",
                   help="run one pass per patch instead of one per level")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        manifest = read_manifest(args.manifest)
        config = ExtractorConfig(
            network_id=args.network,
            levels=args.levels if args.levels is not None else manifest.levels_reference,
            resize_area=args.area if args.area is not None else manifest.resize_area,
            layer=args.layer,
            seed=args.seed,
            weights_path=args.weights,
        )

        def progress(image_id: str, n_files: int) -> None:
            print(f"{image_id}: {n_files} maps")

        total = run_extraction(
            manifest,
            args.images,
            args.out,
            config,
            per_patch=args.per_patch,
            levels_override=args.levels,
            progress=progress,
        )
    except (ExtractorError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {total} response maps for {len(manifest.images)} images to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
