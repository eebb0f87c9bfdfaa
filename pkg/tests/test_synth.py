from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
import pytest

from patchdex import (
    ConfigError,
    SynthSpec,
    encode_stack,
    evaluate,
    generate_dataset,
    load_manifest,
    rank_references,
    read_response_map,
    synth_dataset,
)

from oracles import oracle_encode_stack, oracle_image_distance, oracle_mean_ap, oracle_rank


def _tiny_spec(seed=3, **overrides):
    base = dict(
        n_instances=3,
        refs_per_instance=2,
        n_queries=3,
        channels=8,
        levels=3,
        base_cells=4,
        noise_sigma=0.1,
        max_plant_level=3,
    )
    base.update(overrides)
    return SynthSpec(seed=seed, **base)


def _tree_digest(root: Path) -> str:
    digest = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.is_file():
            digest.update(path.relative_to(root).as_posix().encode())
            digest.update(path.read_bytes())
    return digest.hexdigest()


def test_generate_dataset_shapes_and_ids():
    spec = _tiny_spec()
    manifest, stacks = generate_dataset(spec)
    ref_ids = sorted(e.image_id for e in manifest.references)
    assert ref_ids == [f"i{k:03d}r{r}" for k in range(3) for r in range(2)]
    query_ids = sorted(e.image_id for e in manifest.queries)
    assert query_ids == [f"q{k:03d}" for k in range(3)]
    assert sorted(stacks) == sorted(ref_ids + query_ids)
    for image_id in ("i000r0", "q000"):
        stack = stacks[image_id]
        assert [m.scale_level for m in stack] == [1, 2, 3]
        for rmap in stack:
            side = spec.map_side(rmap.scale_level)
            assert rmap.values.shape == (side, side, spec.channels)
            assert rmap.image_id == image_id


def test_map_side_progression():
    spec = _tiny_spec(base_cells=12, levels=4, max_plant_level=4)
    assert [spec.map_side(level) for level in (1, 2, 3, 4)] == [12, 18, 24, 30]


def test_generate_dataset_manifest_relevance():
    spec = _tiny_spec()
    manifest, _ = generate_dataset(spec)
    assert manifest.dataset_name == "synth"
    assert manifest.levels_reference == 3
    assert manifest.levels_query == 3
    for q in range(3):
        query_id = f"q{q:03d}"
        instance = q % spec.n_instances
        relevant = manifest.relevant_ids(query_id)
        assert relevant == {f"i{instance:03d}r{r}" for r in range(2)}


def test_generate_dataset_deterministic():
    spec = _tiny_spec(seed=11)
    _, a = generate_dataset(spec)
    _, b = generate_dataset(spec)
    for image_id, stack in a.items():
        for rmap, other in zip(stack, b[image_id]):
            np.testing.assert_array_equal(rmap.values, other.values)
    _, c = generate_dataset(_tiny_spec(seed=12))
    same = all(
        np.array_equal(rmap.values, other.values)
        for image_id, stack in a.items()
        for rmap, other in zip(stack, c[image_id])
    )
    assert not same


def test_synth_dataset_writes_identical_trees(tmp_path):
    spec = _tiny_spec(seed=7)
    first = tmp_path / "a"
    second = tmp_path / "b"
    synth_dataset(spec, first)
    synth_dataset(spec, second)
    assert _tree_digest(first) == _tree_digest(second)
    manifest = load_manifest(first / "manifest.json")
    assert len(manifest.queries) == 3
    assert len(manifest.references) == 6
    rmap = read_response_map(first / "i000r0.s1.rmap")
    assert rmap.image_id == "i000r0"
    assert rmap.scale_level == 1
    assert rmap.values.shape == (spec.map_side(1), spec.map_side(1), spec.channels)


def _encode_all(manifest, stacks, levels_query):
    refs = [
        encode_stack(stacks[e.image_id], manifest.levels_reference)
        for e in manifest.references
    ]
    queries = [
        encode_stack(stacks[e.image_id], levels_query) for e in manifest.queries
    ]
    return refs, queries


def test_zero_noise_gives_clean_instances():
    spec = _tiny_spec(seed=5, noise_sigma=0.0)
    manifest, stacks = generate_dataset(spec)
    refs, queries = _encode_all(manifest, stacks, levels_query=3)
    ranked = [rank_references(q, refs) for q in queries]
    report = evaluate(manifest, ranked, "MR3+Jtr3", refs[0].dim * len(refs[0]))
    assert report.mean_ap == 1.0


def test_spec_validation():
    with pytest.raises(ConfigError):
        _tiny_spec(base_cells=5)
    with pytest.raises(ConfigError):
        _tiny_spec(levels=0)
    with pytest.raises(ConfigError):
        _tiny_spec(min_plant_level=3, max_plant_level=2)
    with pytest.raises(ConfigError):
        _tiny_spec(max_plant_level=9)
    with pytest.raises(ConfigError):
        _tiny_spec(noise_sigma=-0.5)
    with pytest.raises(ConfigError):
        _tiny_spec(position_policy="diagonal")
    with pytest.raises(ConfigError):
        _tiny_spec(query_policy="zoom")
    with pytest.raises(ConfigError):
        _tiny_spec(n_queries=0)
    with pytest.raises(ConfigError):
        _tiny_spec(channels=1)


def test_engine_matches_oracle_on_small_dataset():
    spec = _tiny_spec(seed=21, n_instances=4, refs_per_instance=2, n_queries=4, channels=12)
    manifest, stacks = generate_dataset(spec)
    refs, queries = _encode_all(manifest, stacks, levels_query=3)
    ranked = [rank_references(q, refs) for q in queries]
    report = evaluate(manifest, ranked, "MR3+Jtr3", refs[0].dim * len(refs[0]))

    side = int(round(spec.resize_area**0.5))
    by_level = {
        image_id: {m.scale_level: m.values.astype(np.float64) for m in stack}
        for image_id, stack in stacks.items()
    }
    oracle_vectors = {
        image_id: oracle_encode_stack(
            by_level[image_id],
            side,
            side,
            3 if image_id.startswith("q") else manifest.levels_reference,
        )
        for image_id in stacks
    }
    ref_ids = [e.image_id for e in manifest.references]
    per_query_ranked = {}
    for entry in manifest.queries:
        distances = {
            r: oracle_image_distance(oracle_vectors[entry.image_id], oracle_vectors[r])
            for r in ref_ids
        }
        per_query_ranked[entry.image_id] = oracle_rank(entry.image_id, distances)
    labels = {e.image_id: manifest.labels_for(e.image_id) for e in manifest.queries}
    want = oracle_mean_ap(per_query_ranked, labels)
    assert abs(report.mean_ap - want) < 1e-12
