"""Turn response maps into per-patch feature vectors.

The encoder crops each patch's region out of the matching scale-level
response map, max-pools it over a fixed ``g x g`` grid of cells, and
L2-normalizes the result. All outputs are ordered by (level, i, j) so two
encodes of the same image are directly comparable patch by patch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import DimensionMismatchError, EmptySetError
from .geometry import PatchLayout, map_to_feature_coords, patch_count, patch_layout

if TYPE_CHECKING:
    from .formats import ResponseMap

NORM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class FeatureVector:
    """A pooled feature vector with its patch provenance.

    ``degenerate`` marks the all-zero vector, which cannot be normalized;
    it is kept as-is and treated as maximally distant downstream.
    """

    values: np.ndarray
    patch: tuple[int, int, int] = (1, 1, 1)
    normalized: bool = False
    degenerate: bool = False

    def __len__(self) -> int:
        return int(self.values.shape[0])


@dataclass
class PatchFeatureSet:
    """Ordered per-patch feature vectors for one image.

    Vectors follow (level, i, j) order; for an ``levels``-level layout there
    are sum(l**2) of them and they all share one dimensionality.
    """

    image_id: str
    levels: int
    grid: int
    vectors: list[FeatureVector]
    _matrix: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        expected = patch_count(self.levels)
        if len(self.vectors) != expected:
            raise DimensionMismatchError(
                f"{self.image_id!r}: expected {expected} vectors for "
                f"{self.levels} levels, got {len(self.vectors)}"
            )
        dims = {len(v) for v in self.vectors}
        if len(dims) > 1:
            raise DimensionMismatchError(
                f"{self.image_id!r}: mixed vector lengths {sorted(dims)}"
            )

    def __len__(self) -> int:
        return len(self.vectors)

    @property
    def dim(self) -> int:
        return len(self.vectors[0])

    @property
    def matrix(self) -> np.ndarray:
        """All vectors stacked as a float64 (n_patches, dim) matrix."""
        if self._matrix is None:
            self._matrix = np.stack([v.values for v in self.vectors]).astype(np.float64)
        return self._matrix

    @property
    def degenerate_mask(self) -> np.ndarray:
        return np.array([v.degenerate for v in self.vectors], dtype=bool)


def spatial_max_pool(region: np.ndarray, grid: int) -> np.ndarray:
    """Max-pool a (h, w, C) region over a fixed ``grid x grid`` cell layout.

    Cell boundaries sit at round(k * extent / grid); when the region is
    smaller than the grid, neighboring cells share rows or columns rather
    than failing, so the output length is always ``grid**2 * C``. Cells are
    emitted row-major with channels fastest.
    """
    if grid < 1:
        raise ValueError(f"grid must be >= 1, got {grid}")
    region = np.asarray(region)
    if region.ndim != 3 or region.shape[0] < 1 or region.shape[1] < 1:
        raise ValueError(f"region must be a non-empty (h, w, C) array, got shape {region.shape}")
    h, w, channels = region.shape
    out = np.empty(grid * grid * channels, dtype=region.dtype)
    for cy in range(grid):
        y0, y1 = _cell_bounds(cy, h, grid)
        for cx in range(grid):
            x0, x1 = _cell_bounds(cx, w, grid)
            cell = (cy * grid + cx) * channels
            out[cell : cell + channels] = region[y0:y1, x0:x1, :].max(axis=(0, 1))
    return out


def _cell_bounds(k: int, extent: int, grid: int) -> tuple[int, int]:
    lo = min(int(np.floor(k * extent / grid + 0.5)), extent - 1)
    hi = min(max(int(np.floor((k + 1) * extent / grid + 0.5)), lo + 1), extent)
    return lo, hi


def l2_normalize(vector: FeatureVector | np.ndarray) -> FeatureVector:
    """Scale a vector to unit Euclidean norm.

    The zero vector has no direction: it is returned unchanged with the
    degenerate flag set instead of dividing by zero.
    """
    if isinstance(vector, FeatureVector):
        values, patch = vector.values, vector.patch
    else:
        values, patch = np.asarray(vector), (1, 1, 1)
    norm = float(np.linalg.norm(values.astype(np.float64)))
    if norm == 0.0:
        return FeatureVector(values=values, patch=patch, normalized=True, degenerate=True)
    scaled = (values.astype(np.float64) / norm).astype(np.float32)
    return FeatureVector(values=scaled, patch=patch, normalized=True, degenerate=False)


def encode_image(
    scale_maps: Sequence["ResponseMap"],
    layout: PatchLayout,
    grid: int = 1,
) -> PatchFeatureSet:
    """Encode one image from its per-level response maps.

    For every patch (l, i, j) of the layout, the patch rectangle is mapped
    into the level-l response map, cropped, max-pooled over ``grid x grid``
    cells and L2-normalized. Requires one map per level 1..L, all with the
    same channel count.
    """
    if not scale_maps:
        raise EmptySetError("encode_image needs at least one response map")
    by_level = {m.scale_level: m for m in scale_maps}
    channels = {m.channels for m in scale_maps}
    if len(channels) > 1:
        raise DimensionMismatchError(f"channel counts differ across levels: {sorted(channels)}")
    missing = [l for l in range(1, layout.levels + 1) if l not in by_level]
    if missing:
        raise EmptySetError(f"missing response maps for levels {missing}")
    image_id = scale_maps[0].image_id

    vectors: list[FeatureVector] = []
    for rect in layout.patches:
        rmap = by_level[rect.level]
        cells = map_to_feature_coords(
            rect, (layout.width, layout.height), (rmap.width, rmap.height)
        )
        region = rmap.values[cells.y0 : cells.y1, cells.x0 : cells.x1, :]
        pooled = spatial_max_pool(region, grid)
        vec = l2_normalize(pooled)
        vectors.append(
            FeatureVector(
                values=vec.values,
                patch=(rect.level, rect.i, rect.j),
                normalized=True,
                degenerate=vec.degenerate,
            )
        )
    return PatchFeatureSet(image_id=image_id, levels=layout.levels, grid=grid, vectors=vectors)


def nominal_image_dims(resize_area: int, level1_map: "ResponseMap") -> tuple[int, int]:
    """Recover the rescaled image's pixel dims from its area and map aspect.

    Images enter the network rescaled to a fixed area, so width * height is
    known; the level-1 map's aspect ratio pins the rest to within a pixel.
    """
    if resize_area < 1:
        raise ValueError(f"resize_area must be >= 1, got {resize_area}")
    aspect = level1_map.width / level1_map.height
    height = math.sqrt(resize_area / aspect)
    width = aspect * height
    return max(1, int(math.floor(width + 0.5))), max(1, int(math.floor(height + 0.5)))


def encode_stack(
    scale_maps: Sequence["ResponseMap"],
    levels: int,
    grid: int = 1,
    resize_area: int = 360000,
) -> PatchFeatureSet:
    """Encode one image from its scale-map stack, deriving the layout itself."""
    by_level = {m.scale_level: m for m in scale_maps}
    if 1 not in by_level:
        raise EmptySetError("stack has no level-1 response map")
    width, height = nominal_image_dims(resize_area, by_level[1])
    layout = patch_layout(width, height, levels)
    used = [by_level[l] for l in range(1, levels + 1) if l in by_level]
    return encode_image(used, layout, grid)


def slice_levels(fset: PatchFeatureSet, levels: int) -> PatchFeatureSet:
    """Restrict a feature set to its first ``levels`` layout levels.

    Vectors are stored level-major, so a shallower encode of the same image
    is exactly a prefix of a deeper one.
    """
    if levels > fset.levels:
        raise DimensionMismatchError(
            f"cannot slice {levels} levels out of a {fset.levels}-level set"
        )
    if levels == fset.levels:
        return fset
    return PatchFeatureSet(
        image_id=fset.image_id,
        levels=levels,
        grid=fset.grid,
        vectors=list(fset.vectors[: patch_count(levels)]),
    )


def encode_image_direct(
    patch_maps: Sequence["ResponseMap"],
    levels: int,
    grid: int = 1,
) -> PatchFeatureSet:
    """Encode from pre-cropped per-patch response maps, pooling each whole.

    ``patch_maps`` must hold one map per patch in (level, i, j) order, e.g.
    produced by an extractor that forwards every sub-patch separately. The
    output shape contract matches :func:`encode_image` exactly.
    """
    expected = patch_count(levels)
    if len(patch_maps) != expected:
        raise DimensionMismatchError(
            f"expected {expected} patch maps for {levels} levels, got {len(patch_maps)}"
        )
    channels = {m.channels for m in patch_maps}
    if len(channels) > 1:
        raise DimensionMismatchError(f"channel counts differ across patches: {sorted(channels)}")
    image_id = patch_maps[0].image_id

    vectors: list[FeatureVector] = []
    index = 0
    for level in range(1, levels + 1):
        for i in range(1, level + 1):
            for j in range(1, level + 1):
                pooled = spatial_max_pool(patch_maps[index].values, grid)
                vec = l2_normalize(pooled)
                vectors.append(
                    FeatureVector(
                        values=vec.values,
                        patch=(level, i, j),
                        normalized=True,
                        degenerate=vec.degenerate,
                    )
                )
                index += 1
    return PatchFeatureSet(image_id=image_id, levels=levels, grid=grid, vectors=vectors)
