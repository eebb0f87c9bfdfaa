"""Acceptance gate for the extractor package.

Each test prints one [PASS]/[FAIL] line naming the guarantee it checks,
mirroring the engine's acceptance suite.
"""

from __future__ import annotations

import contextlib

import patchdex
import patchdex_extract as px

from extract_helpers import make_image


@contextlib.contextmanager
def announce(capsys, number, text):
    try:
        yield
    except BaseException:
        with capsys.disabled():
            print(f"[FAIL] acceptance {number}: {text}")
        raise
    with capsys.disabled():
        print(f"[PASS] acceptance {number}: {text}")


def test_reference_network_level_one_map_geometry(capsys, tmp_path):
    with announce(
        capsys,
        "S1",
        "600x600 level-1 map on the reference topology has 512 channels, "
        "30..50 cells per side, and round-trips the map file format",
    ):
        config = px.ExtractorConfig(network_id="vgg19-random", levels=1)
        backbone = px.build_backbone(config)
        source = tmp_path / "probe.png"
        make_image(600, 600, 600).save(source)
        written = px.process_image(source, "probe", backbone, config, tmp_path / "maps")
        assert [p.name for p in written] == ["probe.s1.rmap"]

        rmap = patchdex.read_response_map(written[0])
        assert rmap.image_id == "probe"
        assert rmap.scale_level == 1
        assert rmap.channels == 512
        assert 30 <= rmap.width <= 50
        assert 30 <= rmap.height <= 50
