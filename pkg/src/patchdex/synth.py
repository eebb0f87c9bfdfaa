"""Seeded synthetic response-map datasets with planted instances.

Each instance is a sparse non-negative unit "signature" direction in
channel space. A reference image is a stack of per-level noise maps with
the signature planted as one contiguous patch-sized block at a random
level and position, so the instance appears at some sub-scale of the
image. Queries carry the signature at full scale (every level, whole
map), like a close-up photograph of the instance.

The generator is pure given its spec: one seeded RNG drives every draw in
a fixed order, so the same spec always produces byte-identical files.

Geometry convention: the nominal image is square with side
sqrt(resize_area), and the level-l map side is base_cells * (l + 1) / 2.
That matches a pyramid where the level-l rescale makes one patch cover a
constant base_cells x base_cells cell budget at every level.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .formats import ResponseMap, rmap_filename, write_response_map
from .manifest import (
    LABEL_GOOD,
    ROLE_QUERY,
    ROLE_REFERENCE,
    DatasetManifest,
    ImageEntry,
    save_manifest,
)

POSITION_POLICIES = ("random", "center", "corner")
QUERY_POLICIES = ("full", "offcenter")


@dataclass(frozen=True)
class SynthSpec:
    """Everything the generator needs; two equal specs yield equal bytes."""

    seed: int
    n_instances: int = 20
    refs_per_instance: int = 5
    n_queries: int = 20
    channels: int = 64
    noise_sigma: float = 0.1
    levels: int = 4
    base_cells: int = 12
    min_plant_level: int = 2
    max_plant_level: int = 4
    position_policy: str = "random"
    query_policy: str = "full"
    resize_area: int = 360000
    dataset_name: str = "synth"

    def __post_init__(self) -> None:
        for name in ("n_instances", "refs_per_instance", "n_queries", "levels"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.channels < 2:
            raise ConfigError(f"channels must be >= 2, got {self.channels}")
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.base_cells < 2 or self.base_cells % 2:
            raise ConfigError(f"base_cells must be even and >= 2, got {self.base_cells}")
        if not 1 <= self.min_plant_level <= self.max_plant_level <= self.levels:
            raise ConfigError(
                "need 1 <= min_plant_level <= max_plant_level <= levels, got "
                f"{self.min_plant_level}..{self.max_plant_level} of {self.levels}"
            )
        if self.position_policy not in POSITION_POLICIES:
            raise ConfigError(f"unknown position_policy {self.position_policy!r}")
        if self.query_policy not in QUERY_POLICIES:
            raise ConfigError(f"unknown query_policy {self.query_policy!r}")
        if self.resize_area < 1:
            raise ConfigError(f"resize_area must be >= 1, got {self.resize_area}")

    def map_side(self, level: int) -> int:
        return self.base_cells * (level + 1) // 2


def _make_signatures(rng: np.random.Generator, spec: SynthSpec) -> list[np.ndarray]:
    """Sparse non-negative unit directions, kept mutually dissimilar.

    Candidates overlapping an accepted signature too strongly are redrawn a
    bounded number of times; the least-overlapping candidate wins if none
    clears the bar, keeping the loop deterministic and total.
    """
    k_active = max(4, spec.channels // 8)
    k_active = min(k_active, spec.channels)
    signatures: list[np.ndarray] = []
    for _ in range(spec.n_instances):
        best: np.ndarray | None = None
        best_overlap = np.inf
        for _ in range(64):
            idx = rng.choice(spec.channels, size=k_active, replace=False)
            values = rng.uniform(0.5, 1.0, size=k_active)
            candidate = np.zeros(spec.channels, dtype=np.float64)
            candidate[idx] = values
            candidate /= np.linalg.norm(candidate)
            overlap = max((float(candidate @ s) for s in signatures), default=0.0)
            if overlap < best_overlap:
                best, best_overlap = candidate, overlap
            if overlap <= 0.5:
                break
        assert best is not None
        signatures.append(best)
    return signatures


def _noise_map(rng: np.random.Generator, spec: SynthSpec, side: int) -> np.ndarray:
    if spec.noise_sigma == 0.0:
        return np.zeros((side, side, spec.channels), dtype=np.float64)
    return rng.normal(0.0, spec.noise_sigma, size=(side, side, spec.channels))


def _plant_offset(rng: np.random.Generator, spec: SynthSpec, side: int, block: int) -> tuple[int, int]:
    span = side - block
    if span <= 0:
        return 0, 0
    if spec.position_policy == "center":
        return span // 2, span // 2
    if spec.position_policy == "corner":
        return 0, 0
    return int(rng.integers(0, span + 1)), int(rng.integers(0, span + 1))


def _reference_stack(
    rng: np.random.Generator, spec: SynthSpec, image_id: str, signature: np.ndarray
) -> list[ResponseMap]:
    """Noise stack with the signature planted at one random sub-scale."""
    plant_level = int(rng.integers(spec.min_plant_level, spec.max_plant_level + 1))
    maps = []
    for level in range(1, spec.levels + 1):
        side = spec.map_side(level)
        values = _noise_map(rng, spec, side)
        if level == plant_level:
            block = spec.base_cells
            x0, y0 = _plant_offset(rng, spec, side, block)
            region = values[y0 : y0 + block, x0 : x0 + block, :]
            values[y0 : y0 + block, x0 : x0 + block, :] = np.maximum(region, signature)
        maps.append(ResponseMap(values=values, image_id=image_id, scale_level=level))
    return maps


def _query_stack(
    rng: np.random.Generator, spec: SynthSpec, image_id: str, signature: np.ndarray
) -> list[ResponseMap]:
    """Signature at full scale: planted across every level of the stack.

    The offcenter policy confines it to a corner block covering roughly a
    quarter of each map instead, which only jittered (multi-patch) query
    grids can isolate.
    """
    maps = []
    for level in range(1, spec.levels + 1):
        side = spec.map_side(level)
        values = _noise_map(rng, spec, side)
        if spec.query_policy == "full":
            values = np.maximum(values, signature)
        else:
            block = max(1, side // 2)
            region = values[:block, :block, :]
            values[:block, :block, :] = np.maximum(region, signature)
        maps.append(ResponseMap(values=values, image_id=image_id, scale_level=level))
    return maps


def generate_dataset(spec: SynthSpec) -> tuple[DatasetManifest, dict[str, list[ResponseMap]]]:
    """Build the manifest and all response-map stacks in memory."""
    rng = np.random.default_rng(spec.seed)
    signatures = _make_signatures(rng, spec)

    stacks: dict[str, list[ResponseMap]] = {}
    entries: list[ImageEntry] = []
    query_ids: list[str] = []
    query_instance: dict[str, int] = {}
    for q in range(spec.n_queries):
        query_id = f"q{q:03d}"
        query_ids.append(query_id)
        query_instance[query_id] = q % spec.n_instances

    for instance in range(spec.n_instances):
        for r in range(spec.refs_per_instance):
            image_id = f"i{instance:03d}r{r}"
            stacks[image_id] = _reference_stack(rng, spec, image_id, signatures[instance])
            relevance = {
                query_id: LABEL_GOOD
                for query_id in query_ids
                if query_instance[query_id] == instance
            }
            entries.append(
                ImageEntry(image_id=image_id, role=ROLE_REFERENCE, relevance=relevance)
            )

    for query_id in query_ids:
        stacks[query_id] = _query_stack(
            rng, spec, query_id, signatures[query_instance[query_id]]
        )
        entries.append(ImageEntry(image_id=query_id, role=ROLE_QUERY))

    manifest = DatasetManifest(
        dataset_name=spec.dataset_name,
        images=tuple(entries),
        resize_area=spec.resize_area,
        levels_reference=spec.levels,
        levels_query=min(3, spec.levels),
    )
    return manifest, stacks


def synth_dataset(spec: SynthSpec, out_dir: str | Path) -> DatasetManifest:
    """Generate and write the dataset: one manifest.json plus all RMAP stacks."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest, stacks = generate_dataset(spec)
    for image_id in sorted(stacks):
        for rmap in stacks[image_id]:
            write_response_map(rmap, out / rmap_filename(image_id, rmap.scale_level))
    save_manifest(manifest, out / "manifest.json")
    return manifest
