"""Shared fixtures: a small fast backbone for the whole suite."""

from __future__ import annotations

import pytest

import patchdex_extract as px


@pytest.fixture(scope="session")
def tinynet():
    config = px.ExtractorConfig(network_id="tinynet", levels=3, resize_area=9216, seed=5)
    return config, px.build_backbone(config)
