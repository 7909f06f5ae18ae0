import json

import numpy as np
import pytest

from illusion_agent.registry import Registry
from illusion_agent.routing import TaskKind
from illusion_agent.stimuli import (
    KINDS,
    SEPARATOR_RGB,
    StimulusError,
    StimulusSpec,
    emit_manifest,
    generate,
    make_specs,
)
from illusion_agent.tools import sample_color

SEEDS = range(25)


def _hexes(sample):
    reg = Registry(sample.raster)
    return [sample_color(reg, "original", tuple(p)).value["hex"] for p in sample.probes["points"]]


# Independent pixel-level decisions (not the scripted policy's code path)


def contrast_holds(sample):
    a, b = _hexes(sample)
    return a == b


def bands_hold(sample):
    px = sample.raster.pixels
    return not np.all(px == np.array(SEPARATOR_RGB, np.uint8), axis=-1).any()


def line_holds(sample):
    px = sample.raster.pixels
    (x0, yt), (x1, _) = sample.probes["endpoints"]
    ys, xs = np.nonzero(np.all(px == 0, axis=-1))
    assert xs.min() == x0 and xs.max() == x1
    return int(np.abs(ys - yt).max()) == 0


DECIDE = {"contrast_pair": contrast_holds, "band_stack": bands_hold, "reference_line": line_holds}


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("polarity", ["positive", "negative"])
def test_label_soundness(kind, polarity):
    for seed in SEEDS:
        for orient in ("vertical", "horizontal"):
            s = generate(StimulusSpec(kind, polarity, seed, orient))
            assert DECIDE[kind](s) == (s.label == "Yes"), (kind, polarity, seed, orient)


def test_counterfactual_hex_pair_reproduced():
    found = None
    for seed in range(300):
        s = generate(StimulusSpec("contrast_pair", "negative", seed))
        if _hexes(s) == ["#8F8F8F", "#909090"]:
            found = seed
            break
    assert found is not None


def test_negative_offsets_in_range():
    for seed in SEEDS:
        a, b = _hexes(generate(StimulusSpec("contrast_pair", "negative", seed)))
        assert 1 <= int(b[1:3], 16) - int(a[1:3], 16) <= 16


def test_contrast_backgrounds_dark_and_light():
    s = generate(StimulusSpec("contrast_pair", "positive", 4))
    px = s.raster.pixels
    assert px[0, 0, 0] < 0x40 and px[0, -1, 0] > 0xC0


@pytest.mark.parametrize("seed", range(20))
def test_band_orientations_are_transposes(seed):
    for pol in ("positive", "negative"):
        v = generate(StimulusSpec("band_stack", pol, seed, "vertical"))
        h = generate(StimulusSpec("band_stack", pol, seed, "horizontal"))
        assert np.array_equal(v.raster.pixels, h.raster.pixels.transpose(1, 0, 2))


def test_band_transpose_non_square():
    v = generate(StimulusSpec("band_stack", "negative", 5, "vertical", (96, 64)))
    h = generate(StimulusSpec("band_stack", "negative", 5, "horizontal", (64, 96)))
    assert v.raster.width == 96 and v.raster.height == 64
    assert np.array_equal(v.raster.pixels, h.raster.pixels.transpose(1, 0, 2))


def test_band_negative_separator_at_an_interface():
    s = generate(StimulusSpec("band_stack", "negative", 2, "horizontal"))
    px = s.raster.pixels
    flagged = []
    for x0, y0, x1, y1 in s.probes["interfaces"]:
        crop = px[y0:y1, x0:x1]
        cols = [x for x in range(crop.shape[1]) if np.all(crop[:, x] == SEPARATOR_RGB)]
        if cols:
            flagged.append(cols)
    assert len(flagged) == 1 and len(flagged[0]) == 1


def test_bowed_deflection_range():
    for seed in SEEDS:
        s = generate(StimulusSpec("reference_line", "negative", seed))
        (_, yt), _ = s.probes["endpoints"]
        ys, _ = np.nonzero(np.all(s.raster.pixels == 0, axis=-1))
        assert 2 <= yt - ys.min() <= 8


def test_undersized_canvas():
    with pytest.raises(StimulusError):
        generate(StimulusSpec("contrast_pair", "positive", 0, size=(63, 64)))


def test_bad_spec_fields():
    with pytest.raises(StimulusError):
        StimulusSpec("ponzo", "positive")
    with pytest.raises(StimulusError):
        StimulusSpec("band_stack", "maybe")
    with pytest.raises(StimulusError):
        StimulusSpec("band_stack", "positive", orientation="diagonal")


def test_generation_deterministic():
    spec = StimulusSpec("reference_line", "negative", 11)
    assert generate(spec).raster.content_hash() == generate(spec).raster.content_hash()


def test_make_specs_balanced():
    specs = make_specs(per_kind=20)
    assert len(specs) == 60
    assert sum(s.polarity == "positive" for s in specs) == 30
    assert len({s.sample_id for s in specs}) == 60


def test_emit_manifest_counts_and_determinism(tmp_path):
    specs = make_specs(per_kind=20)
    m1 = emit_manifest(specs, tmp_path / "a")
    m2 = emit_manifest(specs, tmp_path / "b")
    assert m1.read_bytes() == m2.read_bytes()
    for s in specs:
        name = f"images/{s.sample_id}.png"
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    recs = [json.loads(line) for line in m1.read_text().splitlines()]
    assert sum(r["polarity"] == "positive" for r in recs) == 30
    assert sum(r["polarity"] == "negative" for r in recs) == 30
    assert all(r["question_source"] == "reconstructed" for r in recs)
    probes = json.loads((tmp_path / "a" / "probes.json").read_text())
    assert set(probes) == {r["sample_id"] for r in recs}


def test_emit_task_ii_options(tmp_path):
    m = emit_manifest(make_specs(per_kind=4), tmp_path, TaskKind.II)
    probes = json.loads((tmp_path / "probes.json").read_text())
    for line in m.read_text().splitlines():
        r = json.loads(line)
        assert len(r["options"]) == 4 and r["label"] in "ABCD"
        ch = probes[r["sample_id"]]["choices"]
        assert r["label"] == (ch["holds"] if r["polarity"] == "positive" else ch["broken"])


def test_emit_duplicate_ids(tmp_path):
    spec = StimulusSpec("contrast_pair", "positive", 1)
    with pytest.raises(StimulusError):
        emit_manifest([spec, spec], tmp_path)


def test_emit_io_error_names_file(tmp_path):
    blocker = tmp_path / "out"
    blocker.write_text("not a dir")
    with pytest.raises(OSError, match="out"):
        emit_manifest([StimulusSpec("contrast_pair", "positive", 1)], blocker)
