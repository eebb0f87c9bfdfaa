"""Convolutional response-map extraction for patch-based retrieval.

This package turns dataset images into per-level RMAP files that the
retrieval engine reads.  The two sides share only that file format (and
the dataset manifest): nothing here imports the engine.
"""

from .backbones import NETWORK_IDS, Backbone, ExtractorConfig, build_backbone
from .errors import ConfigError, ExtractorError, ImageError, ManifestError
from .extract import (
    extract_patch_maps,
    extract_scale_maps,
    find_image_file,
    forward_map,
    prepare_image,
    process_image,
    run_extraction,
)
from .preprocess import (
    area_normalized_dims,
    extend_query_bbox,
    level_scaled_dims,
    patch_rects,
    patch_side,
    resize_to_area,
    round_half_up,
)
from .rmap import (
    ImageJob,
    ManifestInfo,
    read_manifest,
    rmap_filename,
    write_response_map,
)

__version__ = "1.0.0"

__all__ = [
    "NETWORK_IDS",
    "Backbone",
    "ExtractorConfig",
    "ConfigError",
    "ExtractorError",
    "ImageError",
    "ManifestError",
    "ImageJob",
    "ManifestInfo",
    "area_normalized_dims",
    "build_backbone",
    "extend_query_bbox",
    "extract_patch_maps",
    "extract_scale_maps",
    "find_image_file",
    "forward_map",
    "level_scaled_dims",
    "patch_rects",
    "patch_side",
    "prepare_image",
    "process_image",
    "read_manifest",
    "resize_to_area",
    "rmap_filename",
    "round_half_up",
    "run_extraction",
    "write_response_map",
    "__version__",
]
