"""Asymmetric patch-set matching and reference ranking.

The distance from a query image to a reference image is computed in two
pooling steps over their patch feature sets:

  d*(q_patch, R) = min over reference patches r of d(q_patch, r)
  D(Q, R)        = sum over query patches of d*(q_patch, R)

with d the Euclidean distance between unit vectors. The sum runs in patch
order with a fixed sequential reduction, so results are bit-identical
across runs and thread counts; parallelism only ever spans whole
(query, reference) pairs.

In similarity mode the per-patch minimum becomes a maximum and references
are ranked by descending total, ties still broken by reference id.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .encoder import FeatureVector, PatchFeatureSet
from .errors import DimensionMismatchError, EmptySetError
from .whitening import QuantizedCode

DEGENERATE_DISTANCE = 2.0

DEFAULT_TILE_BYTES = 32 * 2**20


@dataclass(frozen=True)
class PatchDistanceMatrix:
    """Pairwise patch distances for one (query, reference) pair."""

    query_patches: int
    reference_patches: int
    entries: np.ndarray

    def __post_init__(self) -> None:
        entries = np.asarray(self.entries, dtype=np.float64)
        object.__setattr__(self, "entries", entries)
        if entries.shape != (self.query_patches, self.reference_patches):
            raise DimensionMismatchError(
                f"entries shape {entries.shape} does not match "
                f"{self.query_patches}x{self.reference_patches}"
            )
        if entries.size and float(entries.min()) < 0.0:
            raise ValueError("patch distances must be non-negative")


@dataclass(frozen=True)
class RankedList:
    """References ordered best-first for one query.

    ``ascending`` is True for distances (smallest first) and False for
    similarity scores (largest first); ties always break by reference id.
    """

    query_id: str
    entries: tuple[tuple[str, float], ...]
    ascending: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        ids = [ref_id for ref_id, _ in self.entries]
        if len(ids) != len(set(ids)):
            raise ValueError(f"ranked list for {self.query_id!r} repeats a reference id")
        sign = 1.0 if self.ascending else -1.0
        keys = [(sign * value, ref_id) for ref_id, value in self.entries]
        if keys != sorted(keys):
            raise ValueError(f"ranked list for {self.query_id!r} is out of order")

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(ref_id for ref_id, _ in self.entries)


def _pair_distances(
    query_matrix: np.ndarray,
    query_degenerate: np.ndarray,
    reference_matrix: np.ndarray,
    reference_degenerate: np.ndarray,
    tile_bytes: int = DEFAULT_TILE_BYTES,
) -> np.ndarray:
    """Dense m_q x m_r Euclidean distances with degenerate-vector fixups.

    Reference patches are processed in column tiles bounded by tile_bytes
    so the working set stays flat no matter how many patches a reference
    carries; tiling cannot change any entry.
    """
    m_q = query_matrix.shape[0]
    m_r = reference_matrix.shape[0]
    out = np.empty((m_q, m_r), dtype=np.float64)
    col_bytes = max(1, 8 * m_q + 8 * query_matrix.shape[1])
    step = max(1, int(tile_bytes // col_bytes))
    for start in range(0, m_r, step):
        stop = min(m_r, start + step)
        out[:, start:stop] = cdist(query_matrix, reference_matrix[start:stop])
    if query_degenerate.any() or reference_degenerate.any():
        one_sided = query_degenerate[:, None] ^ reference_degenerate[None, :]
        out[one_sided] = DEGENERATE_DISTANCE
        out[np.ix_(query_degenerate, reference_degenerate)] = 0.0
    return out


def vector_distance(a: FeatureVector, b: FeatureVector) -> float:
    """Euclidean distance between two unit-normalized patch vectors.

    A degenerate (all-zero source) vector sits nowhere on the sphere, so it
    scores the diameter 2 against any real vector and 0 against another
    degenerate one.
    """
    if a.values.shape != b.values.shape:
        raise DimensionMismatchError(
            f"vector lengths differ: {a.values.shape[0]} vs {b.values.shape[0]}"
        )
    if a.degenerate or b.degenerate:
        return 0.0 if (a.degenerate and b.degenerate) else DEGENERATE_DISTANCE
    diff = a.values.astype(np.float64) - b.values.astype(np.float64)
    return float(np.sqrt(np.dot(diff, diff)))


def patch_distance_matrix(
    query: PatchFeatureSet,
    reference: PatchFeatureSet,
    tile_bytes: int = DEFAULT_TILE_BYTES,
) -> PatchDistanceMatrix:
    if query.dim != reference.dim:
        raise DimensionMismatchError(
            f"feature dims differ: {query.dim} vs {reference.dim}"
        )
    entries = _pair_distances(
        query.matrix,
        query.degenerate_mask,
        reference.matrix,
        reference.degenerate_mask,
        tile_bytes=tile_bytes,
    )
    return PatchDistanceMatrix(
        query_patches=len(query.vectors),
        reference_patches=len(reference.vectors),
        entries=entries,
    )


def patch_min_distance(
    query_patch: FeatureVector,
    reference: PatchFeatureSet,
    similarity: bool = False,
) -> float:
    """Best single-patch match of one query patch inside a reference."""
    if not reference.vectors:
        raise EmptySetError("reference patch set is empty")
    distances = [vector_distance(query_patch, r) for r in reference.vectors]
    return max(distances) if similarity else min(distances)


def image_distance(
    query: PatchFeatureSet,
    reference: PatchFeatureSet,
    similarity: bool = False,
    tile_bytes: int = DEFAULT_TILE_BYTES,
) -> float:
    """Total patch-pooled distance from query to reference.

    Asymmetric by design: every query patch looks for its best match, the
    reference owes nothing back.
    """
    if not query.vectors:
        raise EmptySetError("query patch set is empty")
    if not reference.vectors:
        raise EmptySetError("reference patch set is empty")
    matrix = patch_distance_matrix(query, reference, tile_bytes=tile_bytes)
    if similarity:
        per_patch = matrix.entries.max(axis=1)
    else:
        per_patch = matrix.entries.min(axis=1)
    total = 0.0
    for value in per_patch.tolist():  # fixed patch-order reduction
        total += value
    return total


def rank_references(
    query: PatchFeatureSet,
    index: list[PatchFeatureSet],
    similarity: bool = False,
    threads: int = 1,
    tile_bytes: int = DEFAULT_TILE_BYTES,
) -> RankedList:
    """Rank every reference by image_distance, ties broken by reference id."""
    if not index:
        raise EmptySetError("reference index is empty")

    def one(reference: PatchFeatureSet) -> tuple[str, float]:
        return reference.image_id, image_distance(
            query, reference, similarity=similarity, tile_bytes=tile_bytes
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scored = list(pool.map(one, index))
    else:
        scored = [one(reference) for reference in index]
    sign = 1.0 if not similarity else -1.0
    scored.sort(key=lambda item: (sign * item[1], item[0]))
    return RankedList(query_id=query.image_id, entries=tuple(scored), ascending=not similarity)


# -- quantized (1-bit) matching ---------------------------------------------
#
# Hamming distances on packed sign codes, pooled with the same min/sum
# structure. The per-patch quantized mode is an extension beyond the small
# single-vector footprints usually reported for binary codes; it exists so
# the compact codes can serve the same ranking interface.


@dataclass(frozen=True)
class QuantizedSet:
    """One image's packed patch codes in (level, i, j) order."""

    image_id: str
    levels: int
    codes: tuple[QuantizedCode, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "codes", tuple(self.codes))
        if not self.codes:
            raise EmptySetError(f"quantized set {self.image_id!r} is empty")
        widths = {c.n_bits for c in self.codes}
        if len(widths) != 1:
            raise DimensionMismatchError(f"mixed code widths {sorted(widths)}")

    @property
    def n_bits(self) -> int:
        return self.codes[0].n_bits

    @property
    def packed_matrix(self) -> np.ndarray:
        return np.stack([c.packed for c in self.codes])


def hamming_image_distance(query: QuantizedSet, reference: QuantizedSet) -> int:
    """Sum over query codes of the minimum Hamming distance to any reference code."""
    if query.n_bits != reference.n_bits:
        raise DimensionMismatchError(
            f"code widths differ: {query.n_bits} vs {reference.n_bits}"
        )
    q = query.packed_matrix[:, None, :]
    r = reference.packed_matrix[None, :, :]
    table = np.bitwise_count(np.bitwise_xor(q, r)).sum(axis=2, dtype=np.int64)
    return int(table.min(axis=1).sum())


def rank_references_quantized(
    query: QuantizedSet,
    index: list[QuantizedSet],
    threads: int = 1,
) -> RankedList:
    if not index:
        raise EmptySetError("reference index is empty")

    def one(reference: QuantizedSet) -> tuple[str, float]:
        return reference.image_id, float(hamming_image_distance(query, reference))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scored = list(pool.map(one, index))
    else:
        scored = [one(reference) for reference in index]
    scored.sort(key=lambda item: (item[1], item[0]))
    return RankedList(query_id=query.image_id, entries=tuple(scored), ascending=True)
