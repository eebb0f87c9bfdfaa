"""Turning images into per-level response-map files.

The pipeline for one image is: optionally extend and crop the query
bbox, normalize the image area, then for each scale level l grow the
image by (l+1)/2 so the level-l patch side spans the same extent the
whole image had at level 1, and run the network once on the grown
image.  Each forward pass yields one RMAP file.

Per-patch mode trades those L passes for one pass per patch: every
patch rectangle is cropped out, normalized to the common area, and sent
through the network on its own.  The resulting maps are written under
ids of the form ``<image_id>.p<level>_<i>_<j>`` so a stack of them can
be consumed as pre-cropped patch maps.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .backbones import Backbone, ExtractorConfig, build_backbone
from .errors import ImageError
from .preprocess import (
    CHANNEL_MEAN,
    CHANNEL_STD,
    extend_query_bbox,
    level_scaled_dims,
    patch_rects,
    resize_to_area,
)
from .rmap import ManifestInfo, rmap_filename, write_response_map

IMAGE_SUFFIXES = ("", ".png", ".jpg", ".jpeg", ".bmp", ".ppm", ".tif", ".tiff")


def to_input_tensor(image: Image.Image) -> torch.Tensor:
    """Convert an RGB image to a normalized (1, 3, h, w) float tensor."""
    arr = np.asarray(image.convert("RGB"), dtype=np.float32) / 255.0
    arr -= np.asarray(CHANNEL_MEAN, dtype=np.float32)
    arr /= np.asarray(CHANNEL_STD, dtype=np.float32)
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))[None]


def forward_map(backbone: Backbone, image: Image.Image) -> np.ndarray:
    """Run one forward pass, returning the (h, w, C) activation array."""
    try:
        with torch.no_grad():
            out = backbone.module(to_input_tensor(image))
    except RuntimeError as exc:
        raise ImageError(
            f"image of size {image.width}x{image.height} is too small for the network: {exc}"
        ) from exc
    if out.shape[-2] < 1 or out.shape[-1] < 1:
        raise ImageError(
            f"image of size {image.width}x{image.height} is too small for the network"
        )
    return np.ascontiguousarray(out[0].permute(1, 2, 0).numpy(), dtype=np.float32)


def prepare_image(
    image: Image.Image,
    backbone: Backbone,
    config: ExtractorConfig,
    bbox: tuple[int, int, int, int] | None = None,
) -> Image.Image:
    """Apply the query bbox (extend, then crop) and normalize the area."""
    image = image.convert("RGB")
    if bbox is not None:
        extended = extend_query_bbox(bbox, backbone.receptive_field, (image.width, image.height))
        image = image.crop(extended)
    return resize_to_area(image, config.resize_area)


def extract_scale_maps(
    image: Image.Image,
    backbone: Backbone,
    config: ExtractorConfig,
    bbox: tuple[int, int, int, int] | None = None,
    levels: int | None = None,
) -> list[np.ndarray]:
    """Response maps for levels 1..L, one whole-image pass per level."""
    levels = config.levels if levels is None else levels
    prepared = prepare_image(image, backbone, config, bbox)
    maps = []
    for level in range(1, levels + 1):
        dims = level_scaled_dims(prepared.width, prepared.height, level)
        scaled = prepared if dims == prepared.size else prepared.resize(dims, Image.BILINEAR)
        maps.append(forward_map(backbone, scaled))
    return maps


def extract_patch_maps(
    image: Image.Image,
    backbone: Backbone,
    config: ExtractorConfig,
    bbox: tuple[int, int, int, int] | None = None,
    levels: int | None = None,
) -> list[tuple[int, int, int, np.ndarray]]:
    """Per-patch maps as (level, i, j, values), one pass per patch."""
    levels = config.levels if levels is None else levels
    prepared = prepare_image(image, backbone, config, bbox)
    out = []
    for level in range(1, levels + 1):
        rects = patch_rects(prepared.width, prepared.height, level)
        for index, rect in enumerate(rects):
            i = index // level + 1
            j = index % level + 1
            patch = resize_to_area(prepared.crop(rect), config.resize_area)
            out.append((level, i, j, forward_map(backbone, patch)))
    return out


def find_image_file(images_dir: str | Path, image_id: str) -> Path:
    """Locate ``<image_id>`` in ``images_dir``, trying common suffixes."""
    base = Path(images_dir)
    for suffix in IMAGE_SUFFIXES:
        candidate = base / (image_id + suffix)
        if candidate.is_file():
            return candidate
    raise ImageError(f"no image file for id {image_id!r} under {base}")


def process_image(
    image_path: str | Path,
    image_id: str,
    backbone: Backbone,
    config: ExtractorConfig,
    out_dir: str | Path,
    bbox: tuple[int, int, int, int] | None = None,
    levels: int | None = None,
    per_patch: bool = False,
) -> list[Path]:
    """Extract one image and write its RMAP files; returns the paths."""
    try:
        with Image.open(image_path) as handle:
            image = handle.convert("RGB")
    except OSError as exc:
        raise ImageError(f"cannot read image {image_path}: {exc}") from exc
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if per_patch:
        for level, i, j, values in extract_patch_maps(image, backbone, config, bbox, levels):
            name = rmap_filename(f"{image_id}.p{level}_{i}_{j}", level)
            path = out_dir / name
            write_response_map(values, level, path)
            written.append(path)
    else:
        for index, values in enumerate(extract_scale_maps(image, backbone, config, bbox, levels)):
            path = out_dir / rmap_filename(image_id, index + 1)
            write_response_map(values, index + 1, path)
            written.append(path)
    return written


def run_extraction(
    manifest: ManifestInfo,
    images_dir: str | Path,
    out_dir: str | Path,
    config: ExtractorConfig,
    per_patch: bool = False,
    levels_override: int | None = None,
    progress=None,
) -> int:
    """Extract every manifest image; returns the number of files written.

    Levels follow the manifest's per-role counts unless
    ``levels_override`` pins one count for all roles.  ``progress`` may
    be a callable taking (image_id, n_files).
    """
    backbone = build_backbone(config)
    total = 0
    for job in manifest.images:
        path = find_image_file(images_dir, job.image_id)
        levels = levels_override if levels_override is not None else manifest.levels_for(job.role)
        written = process_image(
            path,
            job.image_id,
            backbone,
            config,
            out_dir,
            bbox=job.bbox,
            levels=levels,
            per_patch=per_patch,
        )
        total += len(written)
        if progress is not None:
            progress(job.image_id, len(written))
    return total
