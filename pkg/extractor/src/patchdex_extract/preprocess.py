"""Image-side preparation: area normalization, bbox extension, patch layout.

All geometry here works in integer pixel coordinates with half-up
rounding, matching the conventions of the retrieval engine that will
consume the emitted response maps.  The extractor deliberately carries
its own copy of the patch-layout arithmetic: the two packages share
file formats, not code.
"""

from __future__ import annotations

import math

from PIL import Image

from .errors import ConfigError, ImageError

# ImageNet channel statistics, applied to inputs scaled to [0, 1].
CHANNEL_MEAN = (0.485, 0.456, 0.406)
CHANNEL_STD = (0.229, 0.224, 0.225)


def round_half_up(value: float) -> int:
    """Round to the nearest integer, with .5 going up."""
    return int(math.floor(value + 0.5))


def area_normalized_dims(width: int, height: int, area: int) -> tuple[int, int]:
    """Return the aspect-preserving dimensions whose product is near ``area``."""
    if width <= 0 or height <= 0:
        raise ImageError(f"image has degenerate dimensions {width}x{height}")
    if area <= 0:
        raise ConfigError(f"target area must be positive, got {area}")
    factor = math.sqrt(area / (width * height))
    new_w = max(1, round_half_up(width * factor))
    new_h = max(1, round_half_up(height * factor))
    return new_w, new_h


def resize_to_area(image: Image.Image, area: int) -> Image.Image:
    """Resize ``image`` so its pixel count is near ``area``, keeping aspect.

    Resampling is bilinear.  An image already at the target area is
    returned unchanged.
    """
    new_w, new_h = area_normalized_dims(image.width, image.height, area)
    if (new_w, new_h) == (image.width, image.height):
        return image
    return image.resize((new_w, new_h), Image.BILINEAR)


def extend_query_bbox(
    bbox: tuple[int, int, int, int],
    receptive_field: int,
    bounds: tuple[int, int],
) -> tuple[int, int, int, int]:
    """Push each bbox side outward by half the receptive field, clamped.

    ``bbox`` is (x0, y0, x1, y1) with exclusive upper edges, in pixels of
    the image whose (width, height) is ``bounds``.  A zero receptive
    field returns the bbox unchanged.
    """
    x0, y0, x1, y1 = bbox
    width, height = bounds
    if not (0 <= x0 < x1 <= width and 0 <= y0 < y1 <= height):
        raise ImageError(f"bbox {bbox} does not fit inside {width}x{height}")
    if receptive_field < 0:
        raise ConfigError(f"receptive field must be non-negative, got {receptive_field}")
    margin = round_half_up(receptive_field / 2.0)
    return (
        max(0, x0 - margin),
        max(0, y0 - margin),
        min(width, x1 + margin),
        min(height, y1 + margin),
    )


def level_scaled_dims(width: int, height: int, level: int) -> tuple[int, int]:
    """Dimensions of the level-``level`` network input for an image.

    At level l the square patch side is 2*max(w, h)/(l+1), and the image
    is rescaled so that side maps onto the level-1 input extent, which
    means growing both dimensions by (l+1)/2.
    """
    if level < 1:
        raise ConfigError(f"scale level must be >= 1, got {level}")
    factor = (level + 1) / 2.0
    return (
        max(1, round_half_up(width * factor)),
        max(1, round_half_up(height * factor)),
    )


def patch_side(width: int, height: int, level: int) -> int:
    """Side of the square patches at ``level``, rounded half-up."""
    return round_half_up(2.0 * max(width, height) / (level + 1))


def patch_rects(width: int, height: int, level: int) -> list[tuple[int, int, int, int]]:
    """The l*l square patch rectangles at ``level``, in row-major (i, j) order.

    Centers are spread uniformly so the grid spans the image, edges are
    rounded from the float center, and rectangles are clamped to the
    image while staying non-empty.
    """
    if width <= 0 or height <= 0:
        raise ImageError(f"image has degenerate dimensions {width}x{height}")
    if level < 1:
        raise ConfigError(f"level must be >= 1, got {level}")
    side = patch_side(width, height, level)
    w_l = min(side, width)
    h_l = min(side, height)
    if level == 1:
        step_x = step_y = 0.0
    else:
        step_x = (width - w_l) / (level - 1)
        step_y = (height - h_l) / (level - 1)
    rects = []
    for i in range(1, level + 1):
        cx = w_l / 2.0 + (i - 1) * step_x
        for j in range(1, level + 1):
            cy = h_l / 2.0 + (j - 1) * step_y
            x0 = round_half_up(cx - side / 2.0)
            y0 = round_half_up(cy - side / 2.0)
            cx0 = max(0, min(x0, width - 1))
            cy0 = max(0, min(y0, height - 1))
            x1 = min(width, max(x0 + side, cx0 + 1))
            y1 = min(height, max(y0 + side, cy0 + 1))
            rects.append((cx0, cy0, x1, y1))
    return rects
