from __future__ import annotations

import io
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patchdex import (
    BadMagicError,
    InvalidHeaderError,
    NonFiniteValueError,
    ResponseMap,
    TruncatedFileError,
    UnsupportedVersionError,
    fit_whitening,
    quantize,
    read_feature_set,
    read_quantized_set,
    read_response_map,
    read_whitening_model,
    rmap_filename,
    write_feature_set,
    write_quantized_set,
    write_response_map,
    write_whitening_model,
)

from helpers import feature_set


def _roundtrip(rmap: ResponseMap) -> ResponseMap:
    buf = io.BytesIO()
    write_response_map(rmap, buf)
    buf.seek(0)
    return read_response_map(buf, image_id=rmap.image_id)


def test_minimal_map_is_28_bytes():
    rmap = ResponseMap(values=np.zeros((1, 1, 1), dtype=np.float32))
    buf = io.BytesIO()
    assert write_response_map(rmap, buf) == 28
    assert len(buf.getvalue()) == 24 + 4


def test_payload_size_arithmetic():
    rmap = ResponseMap(values=np.zeros((2, 3, 4), dtype=np.float32))
    buf = io.BytesIO()
    written = write_response_map(rmap, buf)
    assert written == 24 + 96
    # header fields, little-endian: magic, version, w, h, C, level
    header = buf.getvalue()[:24]
    assert header[:4] == b"RMAP"
    assert struct.unpack("<IIIII", header[4:]) == (1, 3, 2, 4, 1)


def test_roundtrip_large_map(rng):
    rmap = ResponseMap(
        values=rng.random((40, 40, 512), dtype=np.float64).astype(np.float32),
        image_id="big",
        scale_level=2,
    )
    back = _roundtrip(rmap)
    np.testing.assert_array_equal(back.values, rmap.values)
    assert back.scale_level == 2 and back.image_id == "big"


def test_filename_convention(tmp_path):
    assert rmap_filename("img7", 3) == "img7.s3.rmap"
    rmap = ResponseMap(values=np.ones((2, 2, 1), dtype=np.float32), scale_level=3)
    path = tmp_path / "img7.s3.rmap"
    write_response_map(rmap, path)
    back = read_response_map(path)
    assert back.image_id == "img7" and back.scale_level == 3


def test_bad_magic():
    with pytest.raises(BadMagicError):
        read_response_map(io.BytesIO(b"JUNKxxxxxxxxxxxxxxxxxxxxxxxx"))


def test_unsupported_version():
    data = b"RMAP" + struct.pack("<IIIII", 9, 1, 1, 1, 1) + b"\x00" * 4
    with pytest.raises(UnsupportedVersionError):
        read_response_map(io.BytesIO(data))


def test_zero_dimension_rejected():
    data = b"RMAP" + struct.pack("<IIIII", 1, 0, 1, 1, 1)
    with pytest.raises(InvalidHeaderError):
        read_response_map(io.BytesIO(data))


def test_truncated_payload():
    rmap = ResponseMap(values=np.ones((2, 2, 2), dtype=np.float32))
    buf = io.BytesIO()
    write_response_map(rmap, buf)
    clipped = buf.getvalue()[:-5]
    with pytest.raises(TruncatedFileError):
        read_response_map(io.BytesIO(clipped))


def test_nan_payload_names_flat_index():
    values = np.ones((2, 3, 4), dtype=np.float32)
    buf = io.BytesIO()
    write_response_map(ResponseMap(values=values), buf)
    raw = bytearray(buf.getvalue())
    flat_index = 13
    raw[24 + 4 * flat_index : 24 + 4 * (flat_index + 1)] = struct.pack("<f", float("nan"))
    with pytest.raises(NonFiniteValueError) as excinfo:
        read_response_map(io.BytesIO(bytes(raw)))
    assert excinfo.value.index == flat_index
    assert "13" in str(excinfo.value)


def test_writer_rejects_nonfinite_before_any_bytes():
    with pytest.raises(NonFiniteValueError):
        ResponseMap(values=np.array([[[np.inf]]], dtype=np.float32))


@given(
    shape=st.tuples(st.integers(1, 6), st.integers(1, 6), st.integers(1, 5)),
    scale_level=st.integers(1, 6),
    seed=st.integers(0, 2**16),
)
@settings(max_examples=60, deadline=None)
def test_roundtrip_property(shape, scale_level, seed):
    values = np.random.default_rng(seed).normal(size=shape).astype(np.float32)
    rmap = ResponseMap(values=values, image_id="p", scale_level=scale_level)
    buf = io.BytesIO()
    count = write_response_map(rmap, buf)
    assert count == 24 + 4 * values.size == len(buf.getvalue())
    buf.seek(0)
    back = read_response_map(buf, image_id="p")
    np.testing.assert_array_equal(back.values, rmap.values)
    assert back.scale_level == rmap.scale_level


def test_feature_set_roundtrip(rng, tmp_path):
    fset = feature_set(rng, "imgA", levels=3, dim=8, grid=1)
    path = tmp_path / "imgA.fset"
    write_feature_set(fset, path)
    back = read_feature_set(path)
    assert back.image_id == "imgA" and back.levels == 3 and back.grid == 1
    assert [v.patch for v in back.vectors] == [v.patch for v in fset.vectors]
    for a, b in zip(back.vectors, fset.vectors):
        np.testing.assert_array_equal(a.values, b.values)


def test_feature_set_roundtrip_grid2(rng, tmp_path):
    fset = feature_set(rng, "imgB", levels=2, dim=12, grid=2)
    path = tmp_path / "imgB.fset"
    write_feature_set(fset, path)
    back = read_feature_set(path)
    assert back.grid == 2 and back.dim == 12


def test_feature_set_truncation(rng, tmp_path):
    fset = feature_set(rng, "imgC", levels=2, dim=4)
    buf = io.BytesIO()
    write_feature_set(fset, buf)
    clipped = buf.getvalue()[:-3]
    with pytest.raises(TruncatedFileError):
        read_feature_set(io.BytesIO(clipped))


def test_whitening_model_roundtrip(rng, tmp_path):
    data = rng.normal(size=(200, 8)) * np.array([3, 1, 1, 1, 0.5, 2, 2, 1])
    model = fit_whitening(data, keep_ratio=0.5)
    path = tmp_path / "model.wmdl"
    write_whitening_model(model, path)
    back = read_whitening_model(path)
    np.testing.assert_array_equal(back.mean, model.mean)
    np.testing.assert_array_equal(back.projection, model.projection)
    np.testing.assert_array_equal(back.eigenvalues, model.eigenvalues)
    assert back.epsilon == model.epsilon
    probe = rng.normal(size=8)
    np.testing.assert_array_equal(back.project(probe), model.project(probe))


def test_quantized_set_roundtrip(rng, tmp_path):
    codes = [quantize(rng.normal(size=16).astype(np.float64)) for _ in range(5)]
    path = tmp_path / "img.qset"
    write_quantized_set("img", 2, codes, path)
    image_id, levels, back = read_quantized_set(path)
    assert image_id == "img" and levels == 2 and len(back) == 5
    for a, b in zip(back, codes):
        assert a.n_bits == b.n_bits
        np.testing.assert_array_equal(a.packed, b.packed)


def test_quantized_set_wrong_count(rng):
    codes = [quantize(rng.normal(size=16)) for _ in range(3)]
    with pytest.raises(InvalidHeaderError):
        write_quantized_set("img", 2, codes, io.BytesIO())
