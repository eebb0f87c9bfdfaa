"""Multi-resolution sub-patch layouts and image-to-feature-map coordinate mapping.

A layout covers an image with square patches at ``L`` size levels: level ``l``
contributes an ``l × l`` grid of patches whose side shrinks like
``2·max(w, h)/(l + 1)``, so level 1 is the whole image and deeper levels tile
progressively smaller, overlapping windows. Everything here is deterministic
integer arithmetic; there is no randomness in this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


def _round_half_up(x: float) -> int:
    # Ties round toward +inf so layouts are bit-reproducible across platforms.
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class PatchRect:
    """One sub-patch: grid position (level, i, j) plus its pixel rectangle.

    ``i`` indexes the horizontal grid position and ``j`` the vertical one,
    both 1-based in ``[1, level]``. Coordinates are inclusive-exclusive and
    already clamped to the image, so the rectangle may be non-square at the
    borders even though the nominal patch is a square.
    """

    level: int
    i: int
    j: int
    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0


@dataclass(frozen=True)
class CellRect:
    """An axis-aligned cell rectangle on a feature map, inclusive-exclusive."""

    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0


@dataclass(frozen=True)
class PatchLayout:
    """All patches of an image, ordered by (level, i, j)."""

    width: int
    height: int
    levels: int
    patches: tuple[PatchRect, ...]

    def level_patches(self, level: int) -> tuple[PatchRect, ...]:
        return tuple(p for p in self.patches if p.level == level)


def patch_count(levels: int) -> int:
    """Number of patches in an ``levels``-level layout: sum of l**2."""
    return sum(l * l for l in range(1, levels + 1))


def _check_dims(width: int, height: int, levels: int) -> None:
    if width < 1 or height < 1:
        raise ValueError(f"image dimensions must be >= 1, got {width}x{height}")
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")


def patch_sides(width: int, height: int, levels: int) -> list[int]:
    """Nominal square side per level: max(2w/(l+1), 2h/(l+1)), in whole pixels.

    Level 1 therefore has side max(w, h) and deeper levels shrink
    harmonically. Sides are rounded to the nearest pixel and never fall
    below 1.
    """
    _check_dims(width, height, levels)
    sides = []
    for level in range(1, levels + 1):
        side = max(2.0 * width / (level + 1), 2.0 * height / (level + 1))
        sides.append(max(1, _round_half_up(side)))
    return sides


def patch_layout(width: int, height: int, levels: int) -> PatchLayout:
    """Build the full multi-resolution grid of sub-patches for an image.

    At level ``l`` the grid places ``l * l`` square patches of side
    ``patch_sides(...)[l-1]`` with centers spaced evenly so the first and
    last patch of a row touch the opposite image borders. Level 1 has a
    single center patch; its clamped rectangle is always the whole image.
    Patches whose square sticks out of the image keep only the in-bounds
    rectangle (they are not re-centered).
    """
    _check_dims(width, height, levels)
    sides = patch_sides(width, height, levels)
    patches: list[PatchRect] = []
    for level in range(1, levels + 1):
        w_l = 2.0 * width / (level + 1)
        h_l = 2.0 * height / (level + 1)
        if level == 1:
            step_x = step_y = 0.0
        else:
            step_x = (width - w_l) / (level - 1)
            step_y = (height - h_l) / (level - 1)
        side = sides[level - 1]
        for i in range(1, level + 1):
            cx = w_l / 2.0 + (i - 1) * step_x
            for j in range(1, level + 1):
                cy = h_l / 2.0 + (j - 1) * step_y
                # Round the edges, not the center: an odd side around a
                # half-integer center must not drift off the image border.
                x0 = _round_half_up(cx - side / 2.0)
                y0 = _round_half_up(cy - side / 2.0)
                cx0 = max(0, min(x0, width - 1))
                cy0 = max(0, min(y0, height - 1))
                patches.append(
                    PatchRect(
                        level=level,
                        i=i,
                        j=j,
                        x0=cx0,
                        y0=cy0,
                        x1=min(width, max(x0 + side, cx0 + 1)),
                        y1=min(height, max(y0 + side, cy0 + 1)),
                    )
                )
    return PatchLayout(width=width, height=height, levels=levels, patches=tuple(patches))


def map_to_feature_coords(
    rect: PatchRect,
    image_dims: tuple[int, int],
    map_dims: tuple[int, int],
) -> CellRect:
    """Project a pixel rectangle onto a feature map of the same image.

    Each edge coordinate is scaled proportionally (map extent over image
    extent) and rounded to the nearest cell. The result always spans at
    least one cell in each direction and stays within the map bounds, so
    even a one-pixel rectangle maps to a poolable region.
    """
    image_w, image_h = image_dims
    map_w, map_h = map_dims
    if map_w < 1 or map_h < 1:
        raise ValueError(f"map dimensions must be >= 1, got {map_w}x{map_h}")
    fx0 = _round_half_up(rect.x0 * map_w / image_w)
    fx1 = _round_half_up(rect.x1 * map_w / image_w)
    fy0 = _round_half_up(rect.y0 * map_h / image_h)
    fy1 = _round_half_up(rect.y1 * map_h / image_h)
    fx0, fx1 = _ensure_span(fx0, fx1, map_w)
    fy0, fy1 = _ensure_span(fy0, fy1, map_h)
    return CellRect(x0=fx0, y0=fy0, x1=fx1, y1=fy1)


def _ensure_span(lo: int, hi: int, extent: int) -> tuple[int, int]:
    lo = max(0, min(lo, extent - 1))
    hi = min(extent, hi)
    if hi <= lo:
        hi = lo + 1
    return lo, hi
