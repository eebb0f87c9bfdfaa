"""Ablation runner: evaluate a ladder of pipeline configurations.

Configuration labels compose four independent switches joined by "+":

  Baseline      single whole-image patch on both sides (L_r = L_q = 1)
  MR<k>         k-level multi-resolution reference grid (L_r = k)
  Jtr<k>        k-level jittered query grid (L_q = k)
  SP<k>         k x k spatial pooling grid (g = k)
  PCAw          PCA whitening to half dimensionality, then re-normalize

so "MR4+Jtr3+SP2+PCAw" reads: 30 reference patches, 14 query patches,
2x2 pooling, whitened. Encoding is shared across configs: vectors are
level-major, so every shallower grid is a prefix slice of the deepest
encode at the same pooling grid.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .encoder import PatchFeatureSet, encode_stack, slice_levels
from .errors import ConfigError
from .evaluation import EvalReport, evaluate
from .formats import ResponseMap
from .geometry import patch_count
from .manifest import DatasetManifest
from .matcher import rank_references
from .whitening import WhiteningModel, fit_whitening, whiten_feature_set

TABLE_CONFIGS = (
    "Baseline",
    "MR2",
    "MR3",
    "MR4",
    "MR4+Jtr2",
    "MR4+Jtr3",
    "MR4+PCAw",
    "MR4+Jtr2+PCAw",
    "MR4+Jtr3+PCAw",
    "MR4+Jtr3+SP2+PCAw",
)

_COMPONENT = re.compile(r"^(?:(BASELINE)|(MR|JTR|SP)(\d+)(?:X\d+)?|(PCAW))$")


@dataclass(frozen=True)
class PipelineConfig:
    """One fully-resolved pipeline configuration."""

    label: str
    levels_reference: int = 1
    levels_query: int = 1
    grid: int = 1
    whiten: bool = False

    def __post_init__(self) -> None:
        for name in ("levels_reference", "levels_query", "grid"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")

    def dims_per_reference(self, channels: int, keep_ratio: float = 0.5) -> int:
        """Stored floats per reference image under this configuration."""
        dim = self.grid * self.grid * channels
        if self.whiten:
            dim = max(1, int(np.floor(dim * keep_ratio)))
        return patch_count(self.levels_reference) * dim


def parse_config(label: str) -> PipelineConfig:
    """Resolve a "+"-joined config label; unknown parts are an error."""
    levels_reference = 1
    levels_query = 1
    grid = 1
    whiten = False
    for part in label.split("+"):
        token = part.strip().replace(" ", "").replace("_", "").replace("{", "").replace("}", "")
        match = _COMPONENT.match(token.upper())
        if match is None:
            raise ConfigError(f"unknown config component {part.strip()!r} in {label!r}")
        if match.group(1):
            levels_reference = levels_query = 1
        elif match.group(4):
            whiten = True
        else:
            kind, value = match.group(2), int(match.group(3))
            if value < 1:
                raise ConfigError(f"{part.strip()!r}: size must be >= 1")
            if kind == "MR":
                levels_reference = value
            elif kind == "JTR":
                levels_query = value
            else:
                grid = value
    parts = []
    if levels_reference > 1:
        parts.append(f"MR{levels_reference}")
    else:
        parts.append("Baseline")
    if levels_query > 1:
        parts.append(f"Jtr{levels_query}")
    if grid > 1:
        parts.append(f"SP{grid}")
    if whiten:
        parts.append("PCAw")
    return PipelineConfig(
        label="+".join(parts),
        levels_reference=levels_reference,
        levels_query=levels_query,
        grid=grid,
        whiten=whiten,
    )


def run_ablation(
    manifest: DatasetManifest,
    stacks: Mapping[str, Sequence[ResponseMap]],
    configs: Sequence[str | PipelineConfig] = TABLE_CONFIGS,
    keep_ratio: float = 0.5,
    threads: int = 1,
) -> list[EvalReport]:
    """Score every configuration on one dataset of response-map stacks.

    UKB-style recall@4 is reported automatically when every query has
    exactly 4 relevant references; otherwise only mAP is meaningful there
    and the field stays empty.
    """
    resolved = [parse_config(c) if isinstance(c, str) else c for c in configs]
    if not resolved:
        raise ConfigError("no configurations requested")
    for entry in list(manifest.references) + list(manifest.queries):
        if entry.image_id not in stacks:
            raise ConfigError(f"no response maps for manifest image {entry.image_id!r}")

    max_ref_levels = max(c.levels_reference for c in resolved)
    max_query_levels = max(c.levels_query for c in resolved)
    available = {m.scale_level for e in manifest.images if e.image_id in stacks for m in stacks[e.image_id]}
    for needed in (max_ref_levels, max_query_levels):
        missing = set(range(1, needed + 1)) - available
        if missing:
            raise ConfigError(f"stacks lack response maps for levels {sorted(missing)}")

    ukb = bool(manifest.queries) and all(
        len(manifest.relevant_ids(q.image_id)) == 4 for q in manifest.queries
    )

    encoded: dict[tuple[str, int], PatchFeatureSet] = {}

    def deep_encode(image_id: str, levels: int, grid: int) -> PatchFeatureSet:
        key = (image_id, grid)
        if key not in encoded:
            depth = max(max_ref_levels, max_query_levels)
            encoded[key] = encode_stack(
                stacks[image_id], depth, grid=grid, resize_area=manifest.resize_area
            )
        return slice_levels(encoded[key], levels)

    models: dict[tuple[int, int], WhiteningModel] = {}

    def model_for(config: PipelineConfig) -> WhiteningModel:
        key = (config.grid, config.levels_reference)
        if key not in models:
            rows = [
                deep_encode(e.image_id, config.levels_reference, config.grid).matrix
                for e in manifest.references
            ]
            models[key] = fit_whitening(np.concatenate(rows, axis=0), keep_ratio=keep_ratio)
        return models[key]

    reports = []
    for config in resolved:
        started = time.perf_counter()
        references = [
            deep_encode(e.image_id, config.levels_reference, config.grid)
            for e in manifest.references
        ]
        queries = [
            deep_encode(e.image_id, config.levels_query, config.grid)
            for e in manifest.queries
        ]
        if config.whiten:
            model = model_for(config)
            references = [whiten_feature_set(model, f) for f in references]
            queries = [whiten_feature_set(model, f) for f in queries]
        ranked = [rank_references(q, references, threads=threads) for q in queries]
        dims = references[0].dim * len(references[0]) if references else 0
        reports.append(
            evaluate(
                manifest,
                ranked,
                config_label=config.label,
                dims_per_reference=dims,
                ukb=ukb,
                wall_time=time.perf_counter() - started,
            )
        )
    return reports
