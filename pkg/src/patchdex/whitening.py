"""PCA whitening with dimensionality reduction, plus 1-bit code quantization.

A whitening model is fitted on patch-level feature vectors: subtract the
mean, rotate onto the principal axes, and rescale each kept axis by
1/sqrt(eigenvalue + eps). Keeping the top half of the axes halves the
dimensionality. Whitened coordinates are zero-centered, which makes sign
binarization a natural 1-bit quantizer: a 256-dim vector packs into 32 bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .encoder import FeatureVector
from .errors import (
    DegenerateTrainingSetError,
    DimensionMismatchError,
    NonFiniteValueError,
)

if TYPE_CHECKING:
    from .encoder import PatchFeatureSet

EPSILON_SCALE = 1e-8


@dataclass(frozen=True)
class WhiteningModel:
    """Mean vector plus a scaled eigenvector projection.

    ``projection`` rows are the top eigenvectors of the training covariance,
    each divided by sqrt(eigenvalue + epsilon), so projecting centered
    training data yields (approximately) identity covariance.
    """

    mean: np.ndarray
    projection: np.ndarray
    eigenvalues: np.ndarray
    epsilon: float

    @property
    def input_dim(self) -> int:
        return int(self.projection.shape[1])

    @property
    def kept_dim(self) -> int:
        return int(self.projection.shape[0])

    def project(self, vectors: np.ndarray) -> np.ndarray:
        """Center and project (pre-renormalization); accepts 1-D or 2-D input."""
        arr = np.asarray(vectors, dtype=np.float64)
        single = arr.ndim == 1
        arr = np.atleast_2d(arr)
        if arr.shape[1] != self.input_dim:
            raise DimensionMismatchError(
                f"model expects {self.input_dim}-dim vectors, got {arr.shape[1]}"
            )
        out = (arr - self.mean) @ self.projection.T
        return out[0] if single else out


@dataclass(frozen=True)
class QuantizedCode:
    """Sign bits of a whitened vector, packed little-endian within bytes."""

    packed: np.ndarray
    n_bits: int

    def __post_init__(self) -> None:
        expected = (self.n_bits + 7) // 8
        if self.packed.shape[0] != expected:
            raise DimensionMismatchError(
                f"{self.n_bits}-bit code needs {expected} bytes, got {self.packed.shape[0]}"
            )

    @property
    def n_bytes(self) -> int:
        return int(self.packed.shape[0])


def fit_whitening(train_vectors: np.ndarray, keep_ratio: float = 0.5) -> WhiteningModel:
    """Fit a whitening model on an (n, d) matrix of training vectors.

    The covariance is (X - mu)^T (X - mu) / n. Its eigendecomposition is
    sorted by descending eigenvalue and the top floor(d * keep_ratio) axes
    are kept. The regularizer eps = 1e-8 * trace(C) / d guards tiny
    eigenvalues while staying invariant to the data's overall scale. Each
    eigenvector's sign is fixed so its largest-magnitude coordinate is
    positive, making fits reproducible.
    """
    x = np.asarray(train_vectors, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"train_vectors must be 2-D (n, d), got shape {x.shape}")
    n, d = x.shape
    if n < 2:
        raise ValueError(f"need at least 2 training vectors, got {n}")
    if d < 2:
        raise ValueError(f"need at least 2 dimensions, got {d}")
    if not np.all(np.isfinite(x)):
        bad = int(np.flatnonzero(~np.isfinite(x))[0])
        raise NonFiniteValueError(f"training matrix has a non-finite value at flat index {bad}", bad)
    if not 0.0 < keep_ratio <= 1.0:
        raise ValueError(f"keep_ratio must be in (0, 1], got {keep_ratio}")

    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / n
    trace = float(np.trace(cov))
    scale = max(float(np.mean(x * x)), np.finfo(np.float64).tiny)
    if trace <= 1e-20 * scale:
        raise DegenerateTrainingSetError(
            "training vectors are all identical; covariance has rank 0"
        )

    epsilon = EPSILON_SCALE * trace / d
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    # eigh returns ascending order; flip to descending.
    eigenvalues = np.maximum(eigenvalues[::-1], 0.0)
    eigenvectors = eigenvectors[:, ::-1]

    kept = max(1, min(d, int(math.floor(d * keep_ratio))))
    rows = np.empty((kept, d), dtype=np.float64)
    for k in range(kept):
        vec = eigenvectors[:, k]
        if vec[int(np.argmax(np.abs(vec)))] < 0:
            vec = -vec
        rows[k] = vec / math.sqrt(eigenvalues[k] + epsilon)
    return WhiteningModel(
        mean=mean,
        projection=rows,
        eigenvalues=eigenvalues[:kept].copy(),
        epsilon=epsilon,
    )


def apply_whitening(model: WhiteningModel, vector: FeatureVector | np.ndarray) -> FeatureVector:
    """Whiten one vector and re-normalize it to the unit sphere.

    The mean vector itself projects to the origin; like any all-zero result
    it is returned un-normalized with the degenerate flag set.
    """
    if isinstance(vector, FeatureVector):
        values, patch = vector.values, vector.patch
    else:
        values, patch = np.asarray(vector), (1, 1, 1)
    projected = model.project(values)
    norm = float(np.linalg.norm(projected))
    if norm == 0.0:
        return FeatureVector(values=projected, patch=patch, normalized=True, degenerate=True)
    return FeatureVector(values=projected / norm, patch=patch, normalized=True, degenerate=False)


def whiten_feature_set(model: WhiteningModel, fset: "PatchFeatureSet") -> "PatchFeatureSet":
    """Whiten and re-normalize every vector of a patch feature set."""
    from .encoder import PatchFeatureSet

    vectors = []
    for vec in fset.vectors:
        out = apply_whitening(model, vec.values)
        vectors.append(
            FeatureVector(
                values=out.values.astype(np.float32),
                patch=vec.patch,
                normalized=True,
                degenerate=out.degenerate,
            )
        )
    return PatchFeatureSet(
        image_id=fset.image_id, levels=fset.levels, grid=fset.grid, vectors=vectors
    )


def quantize(vector: FeatureVector | np.ndarray) -> QuantizedCode:
    """Binarize a whitened vector to one sign bit per dimension.

    Whitened coordinates are zero-centered, so thresholding at zero splits
    each dimension roughly in half. Bits pack little-endian within bytes:
    dimension k lands in byte k // 8 at bit position k % 8.
    """
    values = vector.values if isinstance(vector, FeatureVector) else np.asarray(vector)
    bits = (values > 0).astype(np.uint8)
    return QuantizedCode(packed=np.packbits(bits, bitorder="little"), n_bits=int(bits.shape[0]))


def hamming_distance(a: QuantizedCode, b: QuantizedCode) -> int:
    """Number of differing bits between two codes of equal length.

    On {0,1} embeddings this is the squared Euclidean distance, so ranking
    by it realizes the L2 metric for binary codes.
    """
    if a.n_bits != b.n_bits:
        raise DimensionMismatchError(f"code lengths differ: {a.n_bits} vs {b.n_bits}")
    return int(np.bitwise_count(np.bitwise_xor(a.packed, b.packed)).sum())
