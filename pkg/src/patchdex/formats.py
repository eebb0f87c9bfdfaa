"""Bit-exact binary formats for response maps, feature sets, models, and codes.

All integers are little-endian u32 and every format opens with a 4-byte
magic plus a version word:

  RMAP  magic | version=1 | width | height | channels | scale_level
        | float32 payload, row-major with channels fastest
        (flat index = (y * width + x) * channels + c).
        The image id travels in the filename: ``<image_id>.s<level>.rmap``.

  FSET  magic | version=1 | id_len | id bytes (UTF-8) | levels | grid
        | channels | float32 vectors in (level, i, j) order.

  WMDL  magic | version=1 | input_dim | kept_dim | epsilon f64 | mean
        f64[input_dim] | eigenvalues f64[kept_dim] | projection f64
        row-major (kept_dim x input_dim).

  QSET  magic | version=1 | id_len | id bytes | levels | n_bits | packed
        codes, ceil(n_bits/8) bytes each, in (level, i, j) order.

Readers validate eagerly (magic, version, dimensions, payload length,
finiteness) so corrupt data never propagates into distance computations.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .encoder import FeatureVector, PatchFeatureSet
from .errors import (
    BadMagicError,
    InvalidHeaderError,
    NonFiniteValueError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from .geometry import patch_count
from .whitening import QuantizedCode, WhiteningModel

RMAP_MAGIC = b"RMAP"
FSET_MAGIC = b"FSET"
WMDL_MAGIC = b"WMDL"
QSET_MAGIC = b"QSET"
FORMAT_VERSION = 1

RMAP_HEADER_BYTES = 24

_RMAP_NAME = re.compile(r"^(?P<image_id>.+)\.s(?P<level>\d+)\.rmap$")


@dataclass(frozen=True)
class ResponseMap:
    """Dense activation tensor for one image at one scale level.

    ``values`` has shape (height, width, channels) in float32; flattening it
    row-major gives the on-disk payload order. All values must be finite.
    """

    values: np.ndarray
    image_id: str = ""
    scale_level: int = 1

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.values, dtype=np.float32)
        object.__setattr__(self, "values", arr)
        if arr.ndim != 3:
            raise InvalidHeaderError(f"values must be (h, w, C), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise InvalidHeaderError(f"all dimensions must be >= 1, got shape {arr.shape}")
        if self.scale_level < 1:
            raise InvalidHeaderError(f"scale_level must be >= 1, got {self.scale_level}")
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr.ravel()))[0])
            raise NonFiniteValueError(
                f"response map has a non-finite value at flat index {bad}", bad
            )

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def channels(self) -> int:
        return int(self.values.shape[2])


def rmap_filename(image_id: str, scale_level: int) -> str:
    return f"{image_id}.s{scale_level}.rmap"


def _open_sink(destination: BinaryIO | str | Path):
    if isinstance(destination, (str, Path)):
        return open(destination, "wb"), True
    return destination, False


def _open_source(source: BinaryIO | str | Path):
    if isinstance(source, (str, Path)):
        return open(source, "rb"), True
    return source, False


def _read_exact(f: BinaryIO, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise TruncatedFileError(f"{what}: expected {n} bytes, got {len(data)}")
    return data


def _check_magic(f: BinaryIO, magic: bytes) -> None:
    got = f.read(len(magic))
    if got != magic:
        raise BadMagicError(f"expected magic {magic!r}, got {got!r}")


def _check_version(f: BinaryIO, what: str) -> None:
    (version,) = struct.unpack("<I", _read_exact(f, 4, f"{what} version"))
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"{what} version {version} is not supported")


# -- response maps ----------------------------------------------------------


def write_response_map(rmap: ResponseMap, destination: BinaryIO | str | Path) -> int:
    """Write one RMAP; returns the number of bytes emitted (24 + 4*w*h*C)."""
    f, owned = _open_sink(destination)
    try:
        header = RMAP_MAGIC + struct.pack(
            "<IIIII",
            FORMAT_VERSION,
            rmap.width,
            rmap.height,
            rmap.channels,
            rmap.scale_level,
        )
        payload = rmap.values.astype("<f4").tobytes()
        f.write(header)
        f.write(payload)
        return len(header) + len(payload)
    finally:
        if owned:
            f.close()


def read_response_map(source: BinaryIO | str | Path, image_id: str | None = None) -> ResponseMap:
    """Read one RMAP, inverting :func:`write_response_map` bit-exactly.

    When ``source`` is a path and no explicit id is given, the image id is
    recovered from the ``<image_id>.s<level>.rmap`` filename convention.
    """
    if image_id is None and isinstance(source, (str, Path)):
        match = _RMAP_NAME.match(Path(source).name)
        image_id = match.group("image_id") if match else Path(source).stem
    f, owned = _open_source(source)
    try:
        _check_magic(f, RMAP_MAGIC)
        _check_version(f, "RMAP")
        width, height, channels, scale_level = struct.unpack(
            "<IIII", _read_exact(f, 16, "RMAP header")
        )
        if min(width, height, channels) < 1:
            raise InvalidHeaderError(
                f"RMAP dimensions must be >= 1, got {width}x{height}x{channels}"
            )
        if scale_level < 1:
            raise InvalidHeaderError(f"RMAP scale_level must be >= 1, got {scale_level}")
        count = width * height * channels
        payload = _read_exact(f, 4 * count, "RMAP payload")
        values = np.frombuffer(payload, dtype="<f4").reshape(height, width, channels)
        return ResponseMap(values=values, image_id=image_id or "", scale_level=scale_level)
    finally:
        if owned:
            f.close()


# -- feature sets -----------------------------------------------------------


def write_feature_set(fset: PatchFeatureSet, destination: BinaryIO | str | Path) -> int:
    """Write a FSET of pooled, normalized patch vectors as float32."""
    dim = fset.dim
    if dim % (fset.grid * fset.grid) != 0:
        raise InvalidHeaderError(
            f"vector length {dim} is not a multiple of grid**2 = {fset.grid ** 2}"
        )
    channels = dim // (fset.grid * fset.grid)
    f, owned = _open_sink(destination)
    try:
        id_bytes = fset.image_id.encode("utf-8")
        f.write(FSET_MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(id_bytes)))
        f.write(id_bytes)
        f.write(struct.pack("<III", fset.levels, fset.grid, channels))
        payload = np.stack([v.values for v in fset.vectors]).astype("<f4").tobytes()
        f.write(payload)
        return 4 + 8 + len(id_bytes) + 12 + len(payload)
    finally:
        if owned:
            f.close()


def read_feature_set(source: BinaryIO | str | Path) -> PatchFeatureSet:
    f, owned = _open_source(source)
    try:
        _check_magic(f, FSET_MAGIC)
        _check_version(f, "FSET")
        (id_len,) = struct.unpack("<I", _read_exact(f, 4, "FSET id length"))
        image_id = _read_exact(f, id_len, "FSET image id").decode("utf-8")
        levels, grid, channels = struct.unpack("<III", _read_exact(f, 12, "FSET header"))
        if levels < 1 or grid < 1 or channels < 1:
            raise InvalidHeaderError(
                f"FSET fields must be >= 1, got levels={levels} grid={grid} channels={channels}"
            )
        count = patch_count(levels)
        dim = grid * grid * channels
        payload = _read_exact(f, 4 * count * dim, "FSET payload")
        matrix = np.frombuffer(payload, dtype="<f4").reshape(count, dim)
        if not np.all(np.isfinite(matrix)):
            bad = int(np.flatnonzero(~np.isfinite(matrix.ravel()))[0])
            raise NonFiniteValueError(
                f"feature set has a non-finite value at flat index {bad}", bad
            )
        vectors = []
        index = 0
        for level in range(1, levels + 1):
            for i in range(1, level + 1):
                for j in range(1, level + 1):
                    row = matrix[index]
                    degenerate = not row.any()
                    vectors.append(
                        FeatureVector(
                            values=row.copy(),
                            patch=(level, i, j),
                            normalized=True,
                            degenerate=degenerate,
                        )
                    )
                    index += 1
        return PatchFeatureSet(image_id=image_id, levels=levels, grid=grid, vectors=vectors)
    finally:
        if owned:
            f.close()


# -- whitening models -------------------------------------------------------


def write_whitening_model(model: WhiteningModel, destination: BinaryIO | str | Path) -> int:
    f, owned = _open_sink(destination)
    try:
        f.write(WMDL_MAGIC)
        f.write(struct.pack("<III", FORMAT_VERSION, model.input_dim, model.kept_dim))
        f.write(struct.pack("<d", model.epsilon))
        mean = model.mean.astype("<f8").tobytes()
        eigenvalues = model.eigenvalues.astype("<f8").tobytes()
        projection = np.ascontiguousarray(model.projection, dtype="<f8").tobytes()
        f.write(mean)
        f.write(eigenvalues)
        f.write(projection)
        return 4 + 12 + 8 + len(mean) + len(eigenvalues) + len(projection)
    finally:
        if owned:
            f.close()


def read_whitening_model(source: BinaryIO | str | Path) -> WhiteningModel:
    f, owned = _open_source(source)
    try:
        _check_magic(f, WMDL_MAGIC)
        _check_version(f, "WMDL")
        input_dim, kept_dim = struct.unpack("<II", _read_exact(f, 8, "WMDL dims"))
        if input_dim < 1 or kept_dim < 1:
            raise InvalidHeaderError(
                f"WMDL dims must be >= 1, got input={input_dim} kept={kept_dim}"
            )
        if kept_dim > input_dim:
            raise InvalidHeaderError(f"kept_dim {kept_dim} exceeds input_dim {input_dim}")
        (epsilon,) = struct.unpack("<d", _read_exact(f, 8, "WMDL epsilon"))
        mean = np.frombuffer(_read_exact(f, 8 * input_dim, "WMDL mean"), dtype="<f8")
        eigenvalues = np.frombuffer(
            _read_exact(f, 8 * kept_dim, "WMDL eigenvalues"), dtype="<f8"
        )
        projection = np.frombuffer(
            _read_exact(f, 8 * kept_dim * input_dim, "WMDL projection"), dtype="<f8"
        ).reshape(kept_dim, input_dim)
        for name, arr in (("mean", mean), ("eigenvalues", eigenvalues), ("projection", projection)):
            if not np.all(np.isfinite(arr)):
                bad = int(np.flatnonzero(~np.isfinite(arr.ravel()))[0])
                raise NonFiniteValueError(
                    f"WMDL {name} has a non-finite value at flat index {bad}", bad
                )
        return WhiteningModel(
            mean=mean.copy(),
            projection=projection.copy(),
            eigenvalues=eigenvalues.copy(),
            epsilon=epsilon,
        )
    finally:
        if owned:
            f.close()


# -- quantized code sets ----------------------------------------------------


def write_quantized_set(
    image_id: str,
    levels: int,
    codes: list[QuantizedCode],
    destination: BinaryIO | str | Path,
) -> int:
    """Write one image's packed patch codes in (level, i, j) order."""
    expected = patch_count(levels)
    if len(codes) != expected:
        raise InvalidHeaderError(f"expected {expected} codes for {levels} levels, got {len(codes)}")
    n_bits = {c.n_bits for c in codes}
    if len(n_bits) != 1:
        raise InvalidHeaderError(f"mixed code lengths {sorted(n_bits)}")
    f, owned = _open_sink(destination)
    try:
        id_bytes = image_id.encode("utf-8")
        f.write(QSET_MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(id_bytes)))
        f.write(id_bytes)
        f.write(struct.pack("<II", levels, n_bits.pop()))
        payload = np.concatenate([c.packed for c in codes]).tobytes()
        f.write(payload)
        return 4 + 8 + len(id_bytes) + 8 + len(payload)
    finally:
        if owned:
            f.close()


def read_quantized_set(source: BinaryIO | str | Path) -> tuple[str, int, list[QuantizedCode]]:
    f, owned = _open_source(source)
    try:
        _check_magic(f, QSET_MAGIC)
        _check_version(f, "QSET")
        (id_len,) = struct.unpack("<I", _read_exact(f, 4, "QSET id length"))
        image_id = _read_exact(f, id_len, "QSET image id").decode("utf-8")
        levels, n_bits = struct.unpack("<II", _read_exact(f, 8, "QSET header"))
        if levels < 1 or n_bits < 1:
            raise InvalidHeaderError(f"QSET fields must be >= 1, got levels={levels} bits={n_bits}")
        count = patch_count(levels)
        n_bytes = (n_bits + 7) // 8
        payload = _read_exact(f, count * n_bytes, "QSET payload")
        raw = np.frombuffer(payload, dtype=np.uint8).reshape(count, n_bytes)
        codes = [QuantizedCode(packed=raw[k].copy(), n_bits=n_bits) for k in range(count)]
        return image_id, levels, codes
    finally:
        if owned:
            f.close()
