"""Area normalization, bbox extension, and the patch layout copy."""

from __future__ import annotations

import numpy as np
import pytest
from PIL import Image

import patchdex_extract as px
from patchdex_extract.errors import ConfigError, ImageError


class TestAreaNormalization:
    def test_square_at_target_area_is_unchanged(self):
        assert px.area_normalized_dims(600, 600, 360000) == (600, 600)

    def test_wide_image_at_target_area_is_unchanged(self):
        assert px.area_normalized_dims(1200, 300, 360000) == (1200, 300)

    def test_four_by_three_image_shrinks_to_area(self):
        assert px.area_normalized_dims(800, 600, 360000) == (693, 520)

    def test_small_image_grows_to_area(self):
        width, height = px.area_normalized_dims(64, 48, 360000)
        assert abs(width * height - 360000) <= width + height
        assert abs(width / height - 64 / 48) < 0.02

    def test_product_stays_near_area(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            w = int(rng.integers(8, 3000))
            h = int(rng.integers(8, 3000))
            area = int(rng.integers(1000, 800000))
            nw, nh = px.area_normalized_dims(w, h, area)
            assert nw >= 1 and nh >= 1
            assert abs(nw * nh - area) <= nw + nh + 1

    def test_degenerate_image_rejected(self):
        with pytest.raises(ImageError):
            px.area_normalized_dims(0, 100, 360000)

    def test_non_positive_area_rejected(self):
        with pytest.raises(ConfigError):
            px.area_normalized_dims(100, 100, 0)

    def test_resize_returns_same_object_when_already_at_area(self):
        image = Image.new("RGB", (600, 600))
        assert px.resize_to_area(image, 360000) is image

    def test_resize_changes_dimensions(self):
        image = Image.new("RGB", (800, 600))
        resized = px.resize_to_area(image, 360000)
        assert resized.size == (693, 520)


class TestBboxExtension:
    def test_zero_receptive_field_is_identity(self):
        assert px.extend_query_bbox((40, 60, 410, 380), 0, (600, 480)) == (40, 60, 410, 380)

    def test_centered_box_grows_by_half_field_per_side(self):
        grown = px.extend_query_bbox((250, 250, 350, 350), 32, (600, 600))
        assert grown == (234, 234, 366, 366)
        assert grown[2] - grown[0] == 132
        assert grown[3] - grown[1] == 132

    def test_border_touching_sides_stay_clamped(self):
        assert px.extend_query_bbox((0, 0, 600, 480), 64, (600, 480)) == (0, 0, 600, 480)

    def test_partial_clamp_near_one_corner(self):
        assert px.extend_query_bbox((10, 10, 100, 100), 40, (600, 480)) == (0, 0, 120, 120)

    def test_odd_field_margin_rounds_half_up(self):
        grown = px.extend_query_bbox((100, 100, 200, 200), 33, (600, 600))
        assert grown == (83, 83, 217, 217)

    def test_bbox_outside_bounds_rejected(self):
        with pytest.raises(ImageError):
            px.extend_query_bbox((0, 0, 700, 480), 0, (600, 480))

    def test_empty_bbox_rejected(self):
        with pytest.raises(ImageError):
            px.extend_query_bbox((50, 50, 50, 120), 0, (600, 480))

    def test_negative_field_rejected(self):
        with pytest.raises(ConfigError):
            px.extend_query_bbox((10, 10, 50, 50), -2, (600, 480))


class TestLevelScaling:
    def test_growth_factor_is_half_level_plus_one(self):
        dims = [px.level_scaled_dims(600, 600, level) for level in (1, 2, 3, 4)]
        assert dims == [(600, 600), (900, 900), (1200, 1200), (1500, 1500)]

    def test_non_square_dims_scale_together(self):
        assert px.level_scaled_dims(693, 520, 3) == (1386, 1040)

    def test_rounding_is_half_up(self):
        assert px.level_scaled_dims(11, 11, 2) == (17, 17)

    def test_level_below_one_rejected(self):
        with pytest.raises(ConfigError):
            px.level_scaled_dims(600, 600, 0)


class TestPatchLayout:
    def test_sides_for_square_image(self):
        assert [px.patch_side(600, 600, level) for level in (1, 2, 3, 4)] == [600, 400, 300, 240]

    def test_level_one_patch_is_whole_image(self):
        for width, height in ((600, 600), (640, 480), (31, 47), (7, 7)):
            assert px.patch_rects(width, height, 1) == [(0, 0, width, height)]

    def test_patch_count_is_level_squared(self):
        for level in range(1, 5):
            assert len(px.patch_rects(640, 480, level)) == level * level

    def test_level_two_rects_on_square(self):
        assert px.patch_rects(600, 600, 2) == [
            (0, 0, 400, 400),
            (0, 200, 400, 600),
            (200, 0, 600, 400),
            (200, 200, 600, 600),
        ]

    def test_rects_stay_inside_image(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            width = int(rng.integers(5, 900))
            height = int(rng.integers(5, 900))
            level = int(rng.integers(1, 5))
            for x0, y0, x1, y1 in px.patch_rects(width, height, level):
                assert 0 <= x0 < x1 <= width
                assert 0 <= y0 < y1 <= height

    def test_level_below_one_rejected(self):
        with pytest.raises(ConfigError):
            px.patch_rects(600, 600, 0)
