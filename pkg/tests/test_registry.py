import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from illusion_agent.registry import (
    InvalidRasterError,
    Raster,
    Registry,
    UnknownResourceError,
    format_id,
    is_valid_id,
)


def test_init_has_only_original(white10):
    assert white10.list_ids() == ["original"]
    assert white10.next_id == "img_001"
    assert white10.get("original").provenance.tool_name == ""
    assert white10.get("original").provenance.source_ids == ()


@pytest.mark.parametrize("shape", [(5, 0, 3), (0, 4, 3)])
def test_zero_dimension_raster_rejected(shape):
    with pytest.raises(InvalidRasterError):
        Registry(Raster(np.zeros(shape, dtype=np.uint8)))


def test_out_of_range_channels_rejected():
    with pytest.raises(InvalidRasterError):
        Raster(np.full((2, 2, 3), 256))


def test_sequential_ids(white10):
    r = Raster.solid(2, 2, (0, 0, 0))
    assert white10.allocate(r, "crop", {}, ["original"]) == "img_001"
    assert white10.allocate(r, "crop", {}, ["img_001"]) == "img_002"
    assert white10.list_ids() == ["original", "img_001", "img_002"]
    assert white10.list_ids() == white10.list_ids()


def test_unknown_source_rejected_and_registry_unchanged(white10):
    with pytest.raises(UnknownResourceError):
        white10.allocate(Raster.solid(1, 1, (0, 0, 0)), "crop", {}, ["ghost"])
    assert len(white10) == 1
    assert white10.next_id == "img_001"


def test_get_missing(white10):
    with pytest.raises(UnknownResourceError):
        white10.get("img_001")


def test_twelve_allocations_keep_original_hash(white10):
    before = white10.get("original").raster.content_hash()
    last = None
    for k in range(12):
        last = white10.allocate(Raster.solid(3, 3, (k, k, k)), "blur", {"radius": k}, ["original"])
    assert last == "img_012"
    assert white10.get("original").raster.content_hash() == before


def test_creation_index(white10):
    for _ in range(3):
        white10.allocate(Raster.solid(1, 1, (1, 2, 3)), "crop", {}, ["original"])
    assert white10.get("img_002").provenance.creation_index == 2


def test_id_forms():
    assert format_id(7) == "img_007"
    assert format_id(1000) == "img_1000"
    assert is_valid_id("original") and is_valid_id("img_001") and is_valid_id("img_1000")
    assert not is_valid_id("img_01") and not is_valid_id("img1") and not is_valid_id("orig")


def test_raster_is_read_only():
    r = Raster.solid(2, 2, (1, 1, 1))
    with pytest.raises(ValueError):
        r.pixels[0, 0] = (9, 9, 9)


def test_raster_copies_input():
    src = np.zeros((2, 2, 3), dtype=np.uint8)
    r = Raster(src)
    src[:] = 200
    assert r.pixel(0, 0) == (0, 0, 0)


def test_png_round_trip(rng):
    r = Raster(rng.integers(0, 256, (7, 11, 3), dtype=np.uint8))
    assert Raster.from_png(r.to_png()) == r


def test_canonical_provenance_arguments(white10):
    white10.allocate(Raster.solid(1, 1, (0, 0, 0)), "crop", {"y0": 1, "x0": 2}, ["original"])
    assert white10.get("img_001").provenance.arguments == '{"x0":2,"y0":1}'


def test_archive(tmp_path, white10):
    white10.allocate(Raster.solid(2, 3, (9, 9, 9)), "crop", {"x0": 0}, ["original"])
    white10.archive(tmp_path / "s1")
    assert (tmp_path / "s1" / "original.png").exists()
    assert Raster.open(tmp_path / "s1" / "img_001.png") == Raster.solid(2, 3, (9, 9, 9))
    meta = json.loads((tmp_path / "s1" / "registry.json").read_text())
    assert [m["id"] for m in meta] == ["original", "img_001"]
    assert meta[1]["width"] == 2 and meta[1]["height"] == 3
    assert meta[1]["provenance"]["source_ids"] == ["original"]
    assert meta[1]["content_hash"] == Raster.solid(2, 3, (9, 9, 9)).content_hash()


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=50), max_size=25))
def test_branching_allocations_keep_every_hash(choices):
    reg = Registry(Raster.solid(4, 4, (255, 255, 255)))
    for k, c in enumerate(choices):
        ids = reg.list_ids()
        before = reg.content_hashes()
        src = ids[c % len(ids)]
        new = reg.allocate(Raster.solid(2, 2, (k % 256, 0, 0)), "draw_line", {}, [src])
        assert new == f"img_{k + 1:03d}"
        after = reg.content_hashes()
        assert {i: after[i] for i in before} == before
        assert all(reg.get(i).raster.content_hash() == h for i, h in before.items())
    assert len(reg.list_ids()) == 1 + len(choices)
