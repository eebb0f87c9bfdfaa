"""Dataset manifest: the JSON document tying image ids to retrieval roles.

Schema (UTF-8 JSON, one object):

  {
    "dataset_name": "toy",
    "resize_area": 360000,          # optional, default 360000
    "levels_reference": 4,          # optional, default 4
    "levels_query": 3,              # optional, default 3
    "pool_grid": 1,                 # optional, default 1
    "images": [
      {"image_id": "r1", "role": "reference",
       "relevance": {"q1": "good", "q2": "junk"}},
      {"image_id": "q1", "role": "query", "bbox": [40, 60, 410, 380]},
      {"image_id": "t1", "role": "train"}
    ]
  }

Reference entries may carry a per-query relevance map with labels
good|ok|junk|negative; a reference absent from a query's map counts as
negative. Queries may carry a pixel bbox [x0, y0, x1, y1] (exclusive
upper corner); train entries carry neither.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Mapping

from .errors import ManifestError

ROLE_REFERENCE = "reference"
ROLE_QUERY = "query"
ROLE_TRAIN = "train"
ROLES = (ROLE_REFERENCE, ROLE_QUERY, ROLE_TRAIN)

LABEL_GOOD = "good"
LABEL_OK = "ok"
LABEL_JUNK = "junk"
LABEL_NEGATIVE = "negative"
LABELS = (LABEL_GOOD, LABEL_OK, LABEL_JUNK, LABEL_NEGATIVE)

DEFAULT_RESIZE_AREA = 360000
DEFAULT_LEVELS_REFERENCE = 4
DEFAULT_LEVELS_QUERY = 3
DEFAULT_POOL_GRID = 1


@dataclass(frozen=True)
class ImageEntry:
    """One image in the dataset, in exactly one role."""

    image_id: str
    role: str
    relevance: Mapping[str, str] = field(default_factory=dict)
    bbox: tuple[int, int, int, int] | None = None

    def __post_init__(self) -> None:
        if not self.image_id:
            raise ManifestError("image_id must be non-empty")
        if self.role not in ROLES:
            raise ManifestError(f"unknown role {self.role!r} for image {self.image_id!r}")
        if self.relevance and self.role != ROLE_REFERENCE:
            raise ManifestError(
                f"relevance labels are reference-only, found on {self.role} {self.image_id!r}"
            )
        for query_id, label in self.relevance.items():
            if label not in LABELS:
                raise ManifestError(
                    f"unknown relevance label {label!r} on {self.image_id!r} for {query_id!r}"
                )
        if self.bbox is not None:
            if self.role != ROLE_QUERY:
                raise ManifestError(
                    f"bbox is query-only, found on {self.role} {self.image_id!r}"
                )
            x0, y0, x1, y1 = self.bbox
            if x1 <= x0 or y1 <= y0:
                raise ManifestError(f"bbox {self.bbox} of {self.image_id!r} is empty")


@dataclass(frozen=True)
class DatasetManifest:
    """Parsed manifest with defaults applied."""

    dataset_name: str
    images: tuple[ImageEntry, ...]
    resize_area: int = DEFAULT_RESIZE_AREA
    levels_reference: int = DEFAULT_LEVELS_REFERENCE
    levels_query: int = DEFAULT_LEVELS_QUERY
    pool_grid: int = DEFAULT_POOL_GRID

    def __post_init__(self) -> None:
        if self.resize_area < 1:
            raise ManifestError(f"resize_area must be >= 1, got {self.resize_area}")
        for name in ("levels_reference", "levels_query", "pool_grid"):
            if getattr(self, name) < 1:
                raise ManifestError(f"{name} must be >= 1, got {getattr(self, name)}")
        for role in (ROLE_REFERENCE, ROLE_QUERY):
            ids = [e.image_id for e in self.images if e.role == role]
            if len(ids) != len(set(ids)):
                dup = sorted({i for i in ids if ids.count(i) > 1})[0]
                raise ManifestError(f"duplicate {role} id {dup!r}")
        query_ids = {e.image_id for e in self.images if e.role == ROLE_QUERY}
        for entry in self.images:
            for query_id in entry.relevance:
                if query_id not in query_ids:
                    raise ManifestError(
                        f"reference {entry.image_id!r} labels unknown query {query_id!r}"
                    )

    @property
    def queries(self) -> tuple[ImageEntry, ...]:
        return tuple(e for e in self.images if e.role == ROLE_QUERY)

    @property
    def references(self) -> tuple[ImageEntry, ...]:
        return tuple(e for e in self.images if e.role == ROLE_REFERENCE)

    @property
    def train_ids(self) -> tuple[str, ...]:
        return tuple(e.image_id for e in self.images if e.role == ROLE_TRAIN)

    def labels_for(self, query_id: str) -> dict[str, str]:
        """Complete relevance map for one query; unlabeled references are negative."""
        if query_id not in {e.image_id for e in self.queries}:
            raise ManifestError(f"unknown query {query_id!r}")
        return {
            e.image_id: e.relevance.get(query_id, LABEL_NEGATIVE) for e in self.references
        }

    def relevant_ids(self, query_id: str) -> set[str]:
        labels = self.labels_for(query_id)
        return {i for i, label in labels.items() if label in (LABEL_GOOD, LABEL_OK)}


def _require(obj: Mapping, key: str, kind: type, where: str):
    if key not in obj:
        raise ManifestError(f"{where}: missing required field {key!r}")
    value = obj[key]
    if not isinstance(value, kind):
        raise ManifestError(f"{where}: field {key!r} must be {kind.__name__}")
    return value


def _entry_from_json(obj: object, index: int) -> ImageEntry:
    where = f"images[{index}]"
    if not isinstance(obj, dict):
        raise ManifestError(f"{where}: entry must be an object")
    image_id = _require(obj, "image_id", str, where)
    role = _require(obj, "role", str, where)
    relevance = obj.get("relevance", {})
    if not isinstance(relevance, dict):
        raise ManifestError(f"{where}: relevance must be an object")
    bbox_raw = obj.get("bbox")
    bbox: tuple[int, int, int, int] | None = None
    if bbox_raw is not None:
        if not isinstance(bbox_raw, list) or len(bbox_raw) != 4:
            raise ManifestError(f"{where}: bbox must be a 4-element list")
        bbox = (int(bbox_raw[0]), int(bbox_raw[1]), int(bbox_raw[2]), int(bbox_raw[3]))
    known = {"image_id", "role", "relevance", "bbox"}
    extra = sorted(set(obj) - known)
    if extra:
        raise ManifestError(f"{where}: unknown fields {extra}")
    return ImageEntry(image_id=image_id, role=role, relevance=dict(relevance), bbox=bbox)


def load_manifest(source: IO[str] | str | Path) -> DatasetManifest:
    """Parse a manifest document, applying defaults for absent knobs."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ManifestError("manifest root must be a JSON object")
    dataset_name = _require(doc, "dataset_name", str, "manifest")
    images_raw = doc.get("images", [])
    if not isinstance(images_raw, list):
        raise ManifestError("manifest: images must be a list")
    images = tuple(_entry_from_json(e, k) for k, e in enumerate(images_raw))
    return DatasetManifest(
        dataset_name=dataset_name,
        images=images,
        resize_area=int(doc.get("resize_area", DEFAULT_RESIZE_AREA)),
        levels_reference=int(doc.get("levels_reference", DEFAULT_LEVELS_REFERENCE)),
        levels_query=int(doc.get("levels_query", DEFAULT_LEVELS_QUERY)),
        pool_grid=int(doc.get("pool_grid", DEFAULT_POOL_GRID)),
    )


def save_manifest(manifest: DatasetManifest, destination: IO[str] | str | Path) -> None:
    """Write a manifest as stable, human-editable JSON (keys in schema order)."""
    doc = {
        "dataset_name": manifest.dataset_name,
        "resize_area": manifest.resize_area,
        "levels_reference": manifest.levels_reference,
        "levels_query": manifest.levels_query,
        "pool_grid": manifest.pool_grid,
        "images": [
            {
                "image_id": e.image_id,
                "role": e.role,
                **({"relevance": dict(e.relevance)} if e.relevance else {}),
                **({"bbox": list(e.bbox)} if e.bbox is not None else {}),
            }
            for e in manifest.images
        ],
    }
    text = json.dumps(doc, indent=2) + "\n"
    if isinstance(destination, (str, Path)):
        Path(destination).write_text(text, encoding="utf-8")
    else:
        destination.write(text)
