from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patchdex import (
    DimensionMismatchError,
    EmptySetError,
    FeatureVector,
    PatchFeatureSet,
    QuantizedSet,
    RankedList,
    hamming_image_distance,
    image_distance,
    patch_distance_matrix,
    patch_min_distance,
    quantize,
    rank_references,
    rank_references_quantized,
    slice_levels,
    vector_distance,
)

from helpers import feature_set, unit_vectors
from oracles import oracle_image_distance, oracle_vector_distance


def _fv(values, degenerate=False):
    return FeatureVector(
        values=np.asarray(values, dtype=np.float32),
        normalized=True,
        degenerate=degenerate,
    )


def test_vector_distance_trivials():
    e1 = _fv([1.0, 0.0, 0.0])
    e2 = _fv([0.0, 1.0, 0.0])
    assert vector_distance(e1, e1) == 0.0
    assert abs(vector_distance(e1, e2) - np.sqrt(2.0)) < 1e-12
    assert abs(vector_distance(e1, _fv([-1.0, 0.0, 0.0])) - 2.0) < 1e-12


def test_vector_distance_degenerate_semantics():
    zero = _fv([0.0, 0.0], degenerate=True)
    unit = _fv([1.0, 0.0])
    assert vector_distance(zero, unit) == 2.0
    assert vector_distance(unit, zero) == 2.0
    assert vector_distance(zero, zero) == 0.0


def test_vector_distance_length_mismatch():
    with pytest.raises(DimensionMismatchError):
        vector_distance(_fv([1.0, 0.0]), _fv([1.0, 0.0, 0.0]))


def test_patch_min_distance_singleton_and_exact_match(rng):
    reference = feature_set(rng, "ref", levels=1, dim=8)
    query_patch = reference.vectors[0]
    assert patch_min_distance(query_patch, reference) == 0.0
    other = _fv(unit_vectors(rng, 1, 8)[0])
    want = vector_distance(other, reference.vectors[0])
    assert patch_min_distance(other, reference) == want


def test_patch_min_distance_brute_force(rng):
    query = feature_set(rng, "q", levels=3, dim=16)
    reference = feature_set(rng, "r", levels=4, dim=16)
    for q in query.vectors:
        want = min(vector_distance(q, r) for r in reference.vectors)
        assert abs(patch_min_distance(q, reference) - want) < 1e-12
        want_max = max(vector_distance(q, r) for r in reference.vectors)
        assert abs(patch_min_distance(q, reference, similarity=True) - want_max) < 1e-12


def test_image_distance_matches_oracle(rng):
    for _ in range(50):
        levels_q = int(rng.integers(1, 4))
        levels_r = int(rng.integers(1, 5))
        dim = int(rng.integers(2, 65))
        query = feature_set(rng, "q", levels=levels_q, dim=dim)
        reference = feature_set(rng, "r", levels=levels_r, dim=dim)
        got = image_distance(query, reference)
        want = oracle_image_distance(
            [v.values.astype(np.float64) for v in query.vectors],
            [v.values.astype(np.float64) for v in reference.vectors],
        )
        assert abs(got - want) < 1e-12


def test_image_distance_with_degenerates(rng):
    query = feature_set(rng, "q", levels=2, dim=8)
    reference = feature_set(rng, "r", levels=2, dim=8)
    zero = FeatureVector(
        values=np.zeros(8, dtype=np.float32),
        patch=(2, 2, 2),
        normalized=True,
        degenerate=True,
    )
    q_vecs = list(query.vectors[:-1]) + [zero]
    r_vecs = list(reference.vectors[:-1]) + [zero]
    query = PatchFeatureSet(image_id="q", levels=2, grid=1, vectors=q_vecs)
    reference = PatchFeatureSet(image_id="r", levels=2, grid=1, vectors=r_vecs)
    got = image_distance(query, reference)
    want = oracle_image_distance(
        [v.values.astype(np.float64) for v in query.vectors],
        [v.values.astype(np.float64) for v in reference.vectors],
    )
    assert abs(got - want) < 1e-12
    # the degenerate query patch found the degenerate reference patch
    matrix = patch_distance_matrix(query, reference)
    assert matrix.entries[-1, -1] == 0.0
    assert matrix.entries[-1, 0] == 2.0 and matrix.entries[0, -1] == 2.0


def test_image_distance_asymmetric(rng):
    a = feature_set(rng, "a", levels=1, dim=8)
    b = feature_set(rng, "b", levels=3, dim=8)
    assert image_distance(a, b) != image_distance(b, a)


def test_subset_zero_law(rng):
    reference = feature_set(rng, "big", levels=4, dim=12)
    query = slice_levels(reference, 3)
    assert image_distance(query, reference) == 0.0


def test_distance_matrix_shape_and_zero_iff_equal(rng):
    query = feature_set(rng, "q", levels=2, dim=6)
    reference = feature_set(rng, "r", levels=3, dim=6)
    matrix = patch_distance_matrix(query, reference)
    assert matrix.entries.shape == (5, 14)
    assert matrix.entries.min() >= 0.0
    same = patch_distance_matrix(query, query)
    for a in range(5):
        for b in range(5):
            if matrix_equal(query.vectors[a].values, query.vectors[b].values):
                assert same.entries[a, b] < 1e-9
            else:
                assert same.entries[a, b] > 1e-9


def matrix_equal(x, y):
    return bool(np.array_equal(x, y))


def test_tiling_does_not_change_distances(rng):
    query = feature_set(rng, "q", levels=3, dim=24)
    reference = feature_set(rng, "r", levels=4, dim=24)
    full = patch_distance_matrix(query, reference, tile_bytes=1 << 30)
    tiny = patch_distance_matrix(query, reference, tile_bytes=1)
    np.testing.assert_array_equal(full.entries, tiny.entries)
    assert image_distance(query, reference, tile_bytes=1) == image_distance(
        query, reference, tile_bytes=1 << 30
    )


def test_rank_references_self_first(rng):
    index = [feature_set(rng, f"r{k}", levels=4, dim=10) for k in range(5)]
    query = slice_levels(index[2], 3)
    query = PatchFeatureSet(
        image_id="r2", levels=3, grid=1, vectors=list(query.vectors)
    )
    ranked = rank_references(query, index)
    assert ranked.entries[0][0] == "r2"
    assert ranked.entries[0][1] == 0.0
    assert set(ranked.ids) == {f"r{k}" for k in range(5)}


def test_rank_references_planted_patch_wins(rng):
    shared = unit_vectors(rng, 1, 8)[0]
    query = feature_set(rng, "q", levels=1, dim=8)
    query = PatchFeatureSet(
        image_id="q",
        levels=1,
        grid=1,
        vectors=[
            FeatureVector(
                values=shared.astype(np.float32), patch=(1, 1, 1), normalized=True
            )
        ],
    )
    sharing = feature_set(rng, "withpatch", levels=2, dim=8)
    vecs = list(sharing.vectors)
    vecs[3] = FeatureVector(
        values=shared.astype(np.float32), patch=vecs[3].patch, normalized=True
    )
    sharing = PatchFeatureSet(image_id="withpatch", levels=2, grid=1, vectors=vecs)
    other = feature_set(rng, "without", levels=2, dim=8)
    ranked = rank_references(query, [other, sharing])
    assert ranked.ids[0] == "withpatch"


def test_rank_references_tie_break_by_id(rng):
    base = feature_set(rng, "z", levels=2, dim=8)
    clones = [
        PatchFeatureSet(image_id=name, levels=2, grid=1, vectors=list(base.vectors))
        for name in ("delta", "alpha", "charlie")
    ]
    query = feature_set(rng, "q", levels=1, dim=8)
    ranked = rank_references(query, clones)
    assert ranked.ids == ("alpha", "charlie", "delta")


def test_rank_references_threads_deterministic(rng):
    index = [feature_set(rng, f"r{k}", levels=3, dim=12) for k in range(8)]
    query = feature_set(rng, "q", levels=2, dim=12)
    single = rank_references(query, index, threads=1)
    multi = rank_references(query, index, threads=4)
    assert single == multi


def test_similarity_mode_descending(rng):
    index = [feature_set(rng, f"r{k}", levels=2, dim=8) for k in range(4)]
    query = feature_set(rng, "q", levels=2, dim=8)
    ranked = rank_references(query, index, similarity=True)
    values = [v for _, v in ranked.entries]
    assert values == sorted(values, reverse=True)
    assert not ranked.ascending
    # per-patch maxima, summed
    want = {}
    for ref in index:
        total = 0.0
        for q in query.vectors:
            total += max(vector_distance(q, r) for r in ref.vectors)
        want[ref.image_id] = total
    for ref_id, value in ranked.entries:
        assert abs(value - want[ref_id]) < 1e-12


def test_empty_inputs_rejected(rng):
    query = feature_set(rng, "q", levels=1, dim=4)
    with pytest.raises(EmptySetError):
        rank_references(query, [])


def test_ranked_list_validation():
    with pytest.raises(ValueError):
        RankedList(query_id="q", entries=(("a", 2.0), ("b", 1.0)))
    with pytest.raises(ValueError):
        RankedList(query_id="q", entries=(("a", 1.0), ("a", 2.0)))
    RankedList(query_id="q", entries=(("a", 1.0), ("b", 1.0)))  # tie ordered by id
    with pytest.raises(ValueError):
        RankedList(query_id="q", entries=(("b", 1.0), ("a", 1.0)))


@given(seed=st.integers(0, 2**32 - 1), dim=st.integers(2, 16))
@settings(max_examples=60, deadline=None)
def test_distance_bound_and_monotonicity(seed, dim):
    rng = np.random.default_rng(seed)
    query = feature_set(rng, "q", levels=2, dim=dim)
    small = feature_set(rng, "r", levels=2, dim=dim)
    big_vectors = list(small.vectors) + [
        FeatureVector(
            values=(v / np.linalg.norm(v)).astype(np.float32),
            patch=(3, 1, 1),
            normalized=True,
        )
        for v in rng.normal(size=(9, dim))
    ]
    # assemble a 3-level set whose first 5 patches equal the 2-level set
    patches = [
        (l, i, j) for l in (1, 2, 3) for i in range(1, l + 1) for j in range(1, l + 1)
    ]
    big = PatchFeatureSet(
        image_id="r",
        levels=3,
        grid=1,
        vectors=[
            FeatureVector(values=v.values, patch=p, normalized=True, degenerate=v.degenerate)
            for v, p in zip(big_vectors, patches)
        ],
    )
    d_small = image_distance(query, small)
    d_big = image_distance(query, big)
    assert d_big <= d_small + 1e-12
    assert 0.0 <= d_big <= 2.0 * len(query.vectors)
    assert 0.0 <= d_small <= 2.0 * len(query.vectors)


def _qset(rng, image_id, levels, dim):
    fset = feature_set(rng, image_id, levels=levels, dim=dim)
    codes = tuple(quantize(v.values.astype(np.float64) - 0.01) for v in fset.vectors)
    return QuantizedSet(image_id=image_id, levels=levels, codes=codes)


def test_hamming_image_distance_brute_force(rng):
    query = _qset(rng, "q", 2, 32)
    reference = _qset(rng, "r", 3, 32)
    got = hamming_image_distance(query, reference)
    want = 0
    for qc in query.codes:
        best = min(
            int(np.bitwise_count(np.bitwise_xor(qc.packed, rc.packed)).sum())
            for rc in reference.codes
        )
        want += best
    assert got == want


def test_rank_references_quantized(rng):
    refs = [_qset(rng, f"r{k}", 2, 32) for k in range(6)]
    query = QuantizedSet(image_id="q", levels=refs[3].levels, codes=refs[3].codes)
    ranked = rank_references_quantized(query, refs)
    assert ranked.ids[0] == "r3"
    assert ranked.entries[0][1] == 0.0
    multi = rank_references_quantized(query, refs, threads=3)
    assert ranked_equal(ranked, multi)


def ranked_equal(a, b):
    return a.query_id == b.query_id and a.entries == b.entries
