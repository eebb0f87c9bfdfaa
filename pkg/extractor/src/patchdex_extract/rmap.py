"""Response-map files and the manifest subset the extractor consumes.

The RMAP format is the contract between this package and the retrieval
engine: 4-byte magic ``RMAP``, five little-endian u32 words (version,
width, height, channels, scale level), then the float32 payload in
row-major order with channels fastest.  The image id travels in the
filename, ``<image_id>.s<level>.rmap``.  Files are written atomically:
the payload lands in a temporary sibling which is renamed into place,
so a crashed run never leaves a truncated map behind.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ImageError, ManifestError

RMAP_MAGIC = b"RMAP"
FORMAT_VERSION = 1

ROLE_REFERENCE = "reference"
ROLE_QUERY = "query"
ROLE_TRAIN = "train"
ROLES = (ROLE_REFERENCE, ROLE_QUERY, ROLE_TRAIN)

DEFAULT_RESIZE_AREA = 360000
DEFAULT_LEVELS_REFERENCE = 4
DEFAULT_LEVELS_QUERY = 3


def rmap_filename(image_id: str, scale_level: int) -> str:
    return f"{image_id}.s{scale_level}.rmap"


def write_response_map(values: np.ndarray, scale_level: int, path: str | Path) -> int:
    """Atomically write one response map; returns the byte count.

    ``values`` must be a (height, width, channels) array of finite
    numbers; it is stored as little-endian float32.
    """
    arr = np.ascontiguousarray(values, dtype="<f4")
    if arr.ndim != 3 or min(arr.shape) < 1:
        raise ImageError(f"response map must be (h, w, C) with no empty axis, got {arr.shape}")
    if scale_level < 1:
        raise ImageError(f"scale_level must be >= 1, got {scale_level}")
    if not np.all(np.isfinite(arr)):
        raise ImageError("response map contains non-finite values")
    height, width, channels = arr.shape
    header = RMAP_MAGIC + struct.pack(
        "<IIIII", FORMAT_VERSION, width, height, channels, scale_level
    )
    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(header)
            f.write(arr.tobytes())
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise
    return len(header) + 4 * arr.size


# -- manifest reading --------------------------------------------------------


@dataclass(frozen=True)
class ImageJob:
    """One image to extract: its id, role, and optional query bbox."""

    image_id: str
    role: str
    bbox: tuple[int, int, int, int] | None = None


@dataclass(frozen=True)
class ManifestInfo:
    """The slice of a dataset manifest the extractor acts on."""

    dataset_name: str
    resize_area: int
    levels_reference: int
    levels_query: int
    images: tuple[ImageJob, ...]

    def levels_for(self, role: str) -> int:
        return self.levels_query if role == ROLE_QUERY else self.levels_reference


def read_manifest(path: str | Path) -> ManifestInfo:
    """Parse the dataset manifest JSON, keeping only extraction fields."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ManifestError("manifest root must be a JSON object")
    name = doc.get("dataset_name")
    if not isinstance(name, str) or not name:
        raise ManifestError("manifest: dataset_name must be a non-empty string")
    images_raw = doc.get("images", [])
    if not isinstance(images_raw, list):
        raise ManifestError("manifest: images must be a list")
    jobs = []
    for k, entry in enumerate(images_raw):
        where = f"manifest images[{k}]"
        if not isinstance(entry, dict):
            raise ManifestError(f"{where}: entry must be an object")
        image_id = entry.get("image_id")
        role = entry.get("role")
        if not isinstance(image_id, str) or not image_id:
            raise ManifestError(f"{where}: image_id must be a non-empty string")
        if role not in ROLES:
            raise ManifestError(f"{where}: unknown role {role!r}")
        bbox_raw = entry.get("bbox")
        bbox: tuple[int, int, int, int] | None = None
        if bbox_raw is not None:
            if role != ROLE_QUERY:
                raise ManifestError(f"{where}: bbox is query-only")
            if not isinstance(bbox_raw, list) or len(bbox_raw) != 4:
                raise ManifestError(f"{where}: bbox must be a 4-element list")
            bbox = (int(bbox_raw[0]), int(bbox_raw[1]), int(bbox_raw[2]), int(bbox_raw[3]))
        jobs.append(ImageJob(image_id=image_id, role=role, bbox=bbox))
    return ManifestInfo(
        dataset_name=name,
        resize_area=int(doc.get("resize_area", DEFAULT_RESIZE_AREA)),
        levels_reference=int(doc.get("levels_reference", DEFAULT_LEVELS_REFERENCE)),
        levels_query=int(doc.get("levels_query", DEFAULT_LEVELS_QUERY)),
        images=tuple(jobs),
    )
