from __future__ import annotations

import numpy as np

from patchdex import FeatureVector, PatchFeatureSet, l2_normalize, patch_count


def unit_vectors(rng: np.random.Generator, count: int, dim: int) -> list[np.ndarray]:
    raw = rng.normal(size=(count, dim))
    return [v / np.linalg.norm(v) for v in raw]


def feature_set(
    rng: np.random.Generator, image_id: str, levels: int, dim: int, grid: int = 1
) -> PatchFeatureSet:
    """Random normalized patch set with the proper (level, i, j) structure."""
    vectors = []
    raw = unit_vectors(rng, patch_count(levels), dim)
    index = 0
    for level in range(1, levels + 1):
        for i in range(1, level + 1):
            for j in range(1, level + 1):
                vec = l2_normalize(raw[index].astype(np.float32))
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
