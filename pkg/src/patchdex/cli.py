"""Command-line interface.

Verbs cover the full pipeline: generate a synthetic dataset, encode
response maps into patch feature sets, fit a whitening model, rank
references for queries, score rankings, run the configuration ablation,
and inspect patch layouts. Every verb exits nonzero when an input
violates its contract.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .ablation import TABLE_CONFIGS, parse_config, run_ablation
from .encoder import PatchFeatureSet, encode_stack
from .errors import PatchdexError
from .evaluation import (
    evaluate,
    format_report_table,
    read_ranks_tsv,
    write_ranks_tsv,
)
from .formats import (
    ResponseMap,
    read_feature_set,
    read_response_map,
    read_whitening_model,
    rmap_filename,
    write_feature_set,
    write_whitening_model,
)
from .manifest import ROLE_QUERY, DatasetManifest, load_manifest
from .matcher import (
    DEFAULT_TILE_BYTES,
    QuantizedSet,
    RankedList,
    patch_distance_matrix,
    rank_references,
    rank_references_quantized,
)
from .synth import SynthSpec, synth_dataset
from .whitening import fit_whitening, quantize, whiten_feature_set


def _read_stack(directory: Path, image_id: str, levels: int) -> list[ResponseMap]:
    maps = []
    for level in range(1, levels + 1):
        path = directory / rmap_filename(image_id, level)
        if not path.exists():
            raise PatchdexError(f"missing response map {path}")
        maps.append(read_response_map(path))
    return maps


def _load_feature_dir(directory: Path) -> list[PatchFeatureSet]:
    paths = sorted(Path(directory).glob("*.fset"))
    if not paths:
        raise PatchdexError(f"no .fset files in {directory}")
    return [read_feature_set(p) for p in paths]


def cmd_synth(args: argparse.Namespace) -> int:
    spec = SynthSpec(
        seed=args.seed,
        n_instances=args.instances,
        refs_per_instance=args.refs,
        n_queries=args.queries,
        channels=args.channels,
        noise_sigma=args.sigma,
        levels=args.levels,
        base_cells=args.base_cells,
        min_plant_level=args.min_level,
        max_plant_level=args.max_level,
        position_policy=args.position,
        query_policy=args.query_policy,
        dataset_name=args.name,
    )
    manifest = synth_dataset(spec, args.out)
    print(
        f"wrote {len(manifest.references)} references, {len(manifest.queries)} queries "
        f"to {args.out}"
    )
    return 0


def cmd_encode(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    in_dir = Path(args.in_dir)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = args.grid if args.grid is not None else manifest.pool_grid
    count = 0
    for entry in manifest.images:
        if args.role is not None and entry.role != args.role:
            continue
        levels = (
            manifest.levels_query if entry.role == ROLE_QUERY else manifest.levels_reference
        )
        if args.levels is not None:
            levels = args.levels
        stack = _read_stack(in_dir, entry.image_id, levels)
        fset = encode_stack(stack, levels, grid=grid, resize_area=manifest.resize_area)
        write_feature_set(fset, out_dir / f"{entry.image_id}.fset")
        count += 1
    print(f"encoded {count} images at grid {grid} to {out_dir}")
    return 0


def cmd_whiten_fit(args: argparse.Namespace) -> int:
    fsets = _load_feature_dir(Path(args.features))
    matrix = np.concatenate([f.matrix for f in fsets], axis=0)
    model = fit_whitening(matrix, keep_ratio=args.keep)
    write_whitening_model(model, args.out)
    print(
        f"fitted whitening on {matrix.shape[0]} vectors: "
        f"{model.input_dim} -> {model.kept_dim} dims, wrote {args.out}"
    )
    return 0


def cmd_query(args: argparse.Namespace) -> int:
    references = _load_feature_dir(Path(args.index))
    queries = _load_feature_dir(Path(args.queries))
    if args.model is not None:
        model = read_whitening_model(args.model)
        references = [whiten_feature_set(model, f) for f in references]
        queries = [whiten_feature_set(model, f) for f in queries]

    if args.quantized:
        ref_codes = [
            QuantizedSet(
                image_id=f.image_id,
                levels=f.levels,
                codes=tuple(quantize(v.values) for v in f.vectors),
            )
            for f in references
        ]
        query_codes = [
            QuantizedSet(
                image_id=f.image_id,
                levels=f.levels,
                codes=tuple(quantize(v.values) for v in f.vectors),
            )
            for f in queries
        ]

        def rank_one_quantized(q: QuantizedSet) -> RankedList:
            return rank_references_quantized(q, ref_codes)

        ranked = _map_queries(rank_one_quantized, query_codes, args.threads)
    else:

        def rank_one(q: PatchFeatureSet) -> RankedList:
            return rank_references(
                q, references, similarity=args.similarity, tile_bytes=args.tile_bytes
            )

        ranked = _map_queries(rank_one, queries, args.threads)
        if args.dump_dmatrix is not None:
            blocks = [
                np.concatenate(
                    [patch_distance_matrix(q, r).entries for r in references], axis=1
                )
                for q in queries
            ]
            np.save(args.dump_dmatrix, np.concatenate(blocks, axis=0))

    write_ranks_tsv(ranked, args.out)
    print(f"ranked {len(references)} references for {len(ranked)} queries, wrote {args.out}")
    return 0


def _map_queries(fn, items, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def cmd_eval(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    ranked = read_ranks_tsv(args.ranks)
    report = evaluate(
        manifest,
        ranked,
        config_label=args.label,
        dims_per_reference=args.dims,
        ukb=args.ukb,
    )
    Path(args.out).write_text(report.to_json(), encoding="utf-8")
    print(format_report_table([report]), end="")
    if report.excluded_queries:
        print(f"excluded (no relevant references): {', '.join(report.excluded_queries)}")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    maps_dir = Path(args.maps)
    configs = (
        [c.strip() for c in args.configs.split(",") if c.strip()]
        if args.configs
        else list(TABLE_CONFIGS)
    )
    resolved = [parse_config(c) for c in configs]
    need = max(
        max((c.levels_reference for c in resolved), default=1),
        max((c.levels_query for c in resolved), default=1),
    )
    stacks = {
        entry.image_id: _read_stack(maps_dir, entry.image_id, need)
        for entry in manifest.images
    }
    reports = run_ablation(
        manifest, stacks, configs=resolved, keep_ratio=args.keep, threads=args.threads
    )
    doc = "[\n" + ",\n".join(r.to_json().rstrip("\n") for r in reports) + "\n]\n"
    Path(args.out).write_text(doc, encoding="utf-8")
    print(format_report_table(reports), end="")
    return 0


def cmd_layout(args: argparse.Namespace) -> int:
    from .geometry import map_to_feature_coords, patch_layout

    layout = patch_layout(args.width, args.height, args.levels)
    print(f"{len(layout.patches)} patches over {args.width}x{args.height}:")
    header = f"{'patch':>10} {'x0':>6} {'y0':>6} {'x1':>6} {'y1':>6}"
    if args.map_width:
        header += f"   {'cells':>20}"
    print(header)
    for rect in layout.patches:
        row = (
            f"{rect.level}_{rect.i}_{rect.j:<4}".rjust(10)
            + f" {rect.x0:>6} {rect.y0:>6} {rect.x1:>6} {rect.y1:>6}"
        )
        if args.map_width:
            cells = map_to_feature_coords(
                rect,
                (args.width, args.height),
                (args.map_width, args.map_height or args.map_width),
            )
            row += f"   ({cells.x0},{cells.y0})..({cells.x1},{cells.y1})".rjust(23)
        print(row)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patchdex",
        description="multi-resolution patch retrieval engine",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("synth", help="generate a seeded synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--refs", type=int, default=5)
    p.add_argument("--queries", type=int, default=20)
    p.add_argument("--channels", type=int, default=64)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--base-cells", type=int, default=12)
    p.add_argument("--min-level", type=int, default=2)
    p.add_argument("--max-level", type=int, default=4)
    p.add_argument("--position", default="random", choices=["random", "center", "corner"])
    p.add_argument("--query-policy", default="full", choices=["full", "offcenter"])
    p.add_argument("--name", default="synth")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("encode", help="encode response maps into feature sets")
    p.add_argument("--manifest", required=True)
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--levels", type=int, default=None)
    p.add_argument("--role", default=None, choices=["reference", "query", "train"])
    p.set_defaults(fn=cmd_encode)

    p = sub.add_parser("whiten-fit", help="fit a whitening model on feature sets")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--keep", type=float, default=0.5)
    p.set_defaults(fn=cmd_whiten_fit)

    p = sub.add_parser("query", help="rank references for every query")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--model", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--similarity", action="store_true")
    p.add_argument("--quantized", action="store_true")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--tile-bytes", type=int, default=DEFAULT_TILE_BYTES)
    p.add_argument("--dump-dmatrix", default=None)
    p.set_defaults(fn=cmd_query)

    p = sub.add_parser("eval", help="score a ranks TSV against a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ranks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--label", default="custom")
    p.add_argument("--dims", type=int, default=0)
    p.add_argument("--ukb", action="store_true")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ablate", help="evaluate a ladder of configurations")
    p.add_argument("--manifest", required=True)
    p.add_argument("--maps", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--configs", default=None, help="comma-separated labels")
    p.add_argument("--keep", type=float, default=0.5)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("layout", help="print the patch grid for an image size")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--map-width", type=int, default=None)
    p.add_argument("--map-height", type=int, default=None)
    p.set_defaults(fn=cmd_layout)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except PatchdexError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
