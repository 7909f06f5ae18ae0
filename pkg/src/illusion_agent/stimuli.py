"""Synthetic illusion-like scenes with exact, pixel-checkable ground truth.

Positive samples keep the illusory property (identical pigments, no physical
separator, a straight line); negative samples carry a small genuine change
(pigment offset of 1-16 levels, a 1-px separator, a 2-8 px bow). These are
geometric stand-ins, not psychophysically faithful stimuli.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .registry import Raster
from .routing import TaskKind
from .tools import raster_line, to_hex

log = logging.getLogger(__name__)

KINDS = ("contrast_pair", "band_stack", "reference_line")
POLARITIES = ("positive", "negative")
ORIENTATIONS = ("vertical", "horizontal")
MIN_SIZE = 64

BASE_GRAY = 0x8F
SEPARATOR_RGB = (0x10, 0x10, 0x10)
RAY_RGB = (0x50, 0x78, 0xB4)
TARGET_RGB = (0, 0, 0)
REFERENCE_HEX = "#00FF00"
LINE_BAND = 12
INTERFACE_HALF = 4

CATEGORY = {
    "contrast_pair": "color comparison",
    "band_stack": "boundary detection",
    "reference_line": "line straightness",
}

# question wording is reconstructed; "Yes" always means the illusion holds
QUESTIONS = {
    "contrast_pair": "The two gray squares look different in brightness. Are they actually exactly the same color?",
    "band_stack": "The bands seem to be separated by visible edges. Do all adjacent bands meet directly, "
                  "with no separating line between any of them?",
    "reference_line": "The horizontal black line looks curved. Is it actually perfectly straight?",
}
OPTIONS = {
    "contrast_pair": ("They are exactly the same color; the difference is an illusion",
                      "They are genuinely different colors",
                      "The square on the dark side is larger",
                      "There is only one square"),
    "band_stack": ("The bands meet directly; the edges are perceptual only",
                   "A real separating line is drawn between two bands",
                   "All bands have the same brightness",
                   "The bands are arranged diagonally"),
    "reference_line": ("The line is perfectly straight; the curvature is an illusion",
                       "The line is genuinely bowed",
                       "There are two black lines",
                       "The line is vertical"),
}


class StimulusError(ValueError):
    pass


@dataclass(frozen=True)
class StimulusSpec:
    kind: str
    polarity: str
    seed: int = 0
    orientation: str = "vertical"  # band_stack only
    size: tuple[int, int] = (128, 128)  # width, height

    def __post_init__(self):
        if self.kind not in KINDS:
            raise StimulusError(f"unknown kind {self.kind!r}")
        if self.polarity not in POLARITIES:
            raise StimulusError(f"unknown polarity {self.polarity!r}")
        if self.orientation not in ORIENTATIONS:
            raise StimulusError(f"unknown orientation {self.orientation!r}")

    @property
    def sample_id(self) -> str:
        parts = [self.kind, self.polarity[:3]]
        if self.kind == "band_stack":
            parts.append(self.orientation[0])
        parts.append(f"s{self.seed}")
        return "-".join(parts)


@dataclass
class GeneratedSample:
    spec: StimulusSpec
    raster: Raster
    question: str
    label: str  # task I truth: "Yes" when the illusion holds
    probes: dict[str, Any] = field(default_factory=dict)

    @property
    def polarity(self) -> str:
        return self.spec.polarity

    @property
    def holds(self) -> bool:
        return self.label == "Yes"


def _contrast(spec: StimulusSpec, rng: np.random.Generator, w: int, h: int):
    dark = int(rng.integers(0x10, 0x31))
    light = int(rng.integers(0xD0, 0xF1))
    offset = int(rng.integers(1, 17))
    arr = np.empty((h, w, 3), dtype=np.uint8)
    half = w // 2
    arr[:, :half] = dark
    arr[:, half:] = light
    side = max(4, min(half, h) // 3)
    rects = []
    for k, cx in enumerate((half // 2, half + (w - half) // 2)):
        x0, y0 = cx - side // 2, h // 2 - side // 2
        rects.append([x0, y0, x0 + side, y0 + side])
    pig_a = BASE_GRAY
    pig_b = BASE_GRAY + (offset if spec.polarity == "negative" else 0)
    for rect, pig in zip(rects, (pig_a, pig_b)):
        arr[rect[1] : rect[3], rect[0] : rect[2]] = pig
    points = [[(r[0] + r[2]) // 2, (r[1] + r[3]) // 2] for r in rects]
    return arr, {"points": points, "rects": rects}


def _bands_canonical(spec: StimulusSpec, rng: np.random.Generator, w: int, h: int):
    """Bands side by side (vertical interfaces). The vertical variant is this, transposed."""
    n = int(rng.integers(3, 6))
    levels = sorted(int(v) for v in rng.choice(np.arange(64, 225, 8), size=n, replace=False))
    cut = int(rng.integers(1, n))
    edges = [(2 * i * w + n) // (2 * n) for i in range(n + 1)]
    arr = np.empty((h, w, 3), dtype=np.uint8)
    for i in range(n):
        arr[:, edges[i] : edges[i + 1]] = levels[i]
    if spec.polarity == "negative":
        arr[:, edges[cut]] = SEPARATOR_RGB
    interfaces = [[b - INTERFACE_HALF, 0, b + INTERFACE_HALF, h] for b in edges[1:-1]]
    return arr, {"interfaces": interfaces}


def _reference_line(spec: StimulusSpec, rng: np.random.Generator, w: int, h: int):
    arr = np.full((h, w, 3), 255, dtype=np.uint8)
    cx, cy = w // 2, h // 2
    n_rays = int(rng.integers(16, 29))
    reach = w + h
    for k in range(n_rays):
        a = math.pi * k / n_rays
        dx, dy = round(reach * math.cos(a)), round(reach * math.sin(a))
        raster_line(arr, (cx - dx, cy - dy), (cx + dx, cy + dy), RAY_RGB, 1)
    deflection = int(rng.integers(2, 9))
    yt = cy - h // 4
    margin = w // 8
    x0, x1 = margin, w - 1 - margin
    half = (x1 - x0) // 2
    x1 = x0 + 2 * half  # symmetric about the midpoint
    xm = x0 + half
    if spec.polarity == "positive":
        raster_line(arr, (x0, yt), (x1, yt), TARGET_RGB, 1)
    else:
        hh = half * half
        xs = np.arange(x0, x1 + 1)
        bow = (2 * deflection * (hh - (xs - xm) ** 2) + hh) // (2 * hh)
        ys = yt - bow
        for i in range(len(xs) - 1):
            raster_line(arr, (int(xs[i]), int(ys[i])), (int(xs[i + 1]), int(ys[i + 1])), TARGET_RGB, 1)
    probes = {
        "endpoints": [[x0, yt], [x1, yt]],
        "target_color": to_hex(TARGET_RGB),
        "reference_color": REFERENCE_HEX,
        "band": LINE_BAND,
    }
    return arr, probes


def _transpose_rects(rects):
    return [[r[1], r[0], r[3], r[2]] for r in rects]


def generate(spec: StimulusSpec) -> GeneratedSample:
    w, h = spec.size
    if w < MIN_SIZE or h < MIN_SIZE:
        raise StimulusError(f"canvas {w}x{h} is smaller than {MIN_SIZE}x{MIN_SIZE}")
    rng = np.random.default_rng([spec.seed, KINDS.index(spec.kind)])
    if spec.kind == "contrast_pair":
        arr, probes = _contrast(spec, rng, w, h)
    elif spec.kind == "band_stack":
        if spec.orientation == "horizontal":
            arr, probes = _bands_canonical(spec, rng, w, h)
        else:
            arr, probes = _bands_canonical(spec, rng, h, w)
            arr = arr.transpose(1, 0, 2)
            probes = {"interfaces": _transpose_rects(probes["interfaces"])}
    else:
        arr, probes = _reference_line(spec, rng, w, h)
    label = "Yes" if spec.polarity == "positive" else "No"
    return GeneratedSample(spec, Raster(arr), QUESTIONS[spec.kind], label, probes)


def make_specs(
    kinds: Iterable[str] = KINDS,
    per_kind: int = 10,
    balance: bool = True,
    seed: int = 42,
    orientation: str = "both",
    size: tuple[int, int] = (128, 128),
) -> list[StimulusSpec]:
    """Spec list for a batch: per kind, ``per_kind`` samples, half negative when balanced."""
    specs = []
    for kind in kinds:
        for i in range(per_kind):
            polarity = ("positive" if i % 2 == 0 else "negative") if balance else "positive"
            if orientation == "both":
                orient = ORIENTATIONS[(i // 2) % 2]
            else:
                orient = orientation
            specs.append(StimulusSpec(kind, polarity, seed + i // 2 if balance else seed + i, orient, size))
    return specs


def _task_fields(sample: GeneratedSample, task: TaskKind) -> tuple[dict[str, Any], dict[str, str]]:
    if task is TaskKind.I:
        return {"label": sample.label}, {}
    rng = np.random.default_rng([sample.spec.seed, 7])
    order = [int(i) for i in rng.permutation(4)]
    opts = OPTIONS[sample.spec.kind]
    options = [opts[i] for i in order]
    letters = "ABCD"
    choices = {"holds": letters[order.index(0)], "broken": letters[order.index(1)]}
    label = choices["holds"] if sample.holds else choices["broken"]
    return {"label": label, "options": options}, choices


def emit_manifest(specs: Iterable[StimulusSpec], out_dir: str | Path, task: TaskKind = TaskKind.I) -> Path:
    """Write PNGs, ``manifest.jsonl`` and the oracle probe sidecar ``probes.json``."""
    task = TaskKind.parse(task)
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    lines, probes = [], {}
    counts = {"positive": 0, "negative": 0}
    for spec in specs:
        sample = generate(spec)
        sid = spec.sample_id
        if sid in probes:
            raise StimulusError(f"duplicate sample id {sid}")
        rel = f"images/{sid}.png"
        try:
            (out / rel).write_bytes(sample.raster.to_png())
        except OSError as exc:
            raise OSError(f"cannot write {out / rel}: {exc}") from exc
        fields, choices = _task_fields(sample, task)
        lines.append({
            "sample_id": sid,
            "task": task.value,
            "image": rel,
            "question": sample.question,
            "question_source": "reconstructed",
            "polarity": spec.polarity,
            "category": CATEGORY[spec.kind],
            **fields,
        })
        meta: dict[str, Any] = {"kind": spec.kind, "probes": sample.probes}
        if choices:
            meta["choices"] = choices
        probes[sid] = meta
        counts[spec.polarity] += 1
    manifest = out / "manifest.jsonl"
    manifest.write_text("".join(json.dumps(rec, sort_keys=True) + "\n" for rec in lines))
    (out / "probes.json").write_text(json.dumps(probes, indent=2, sort_keys=True) + "\n")
    log.info("wrote %d samples (%d positive, %d negative) to %s", len(lines), counts["positive"],
             counts["negative"], manifest)
    return manifest
