"""Deterministic scripted policies standing in for a model.

The ``oracle`` policy follows the prescribed tool sequence for the sample's
kind and decides from the tool outputs it receives (images and observation
text) by exact comparison. Probe metadata only tells it *where* to look;
it never sees the label.
"""

from __future__ import annotations

import re
from typing import Any, Sequence

import numpy as np

from ..registry import Raster
from .base import ConfigurationError, GenerationSettings, Message, ModelReply, ToolCall, check_history

POLICIES = ("oracle", "always_positive", "never_finalize")
SEPARATOR_WIDTH = 8
_HEX_RE = re.compile(r"color (#[0-9A-F]{6})")


# ---- decision rules (also used to check stimulus label soundness)


def colors_match(hex_a: str, hex_b: str) -> bool:
    return hex_a.upper() == hex_b.upper()


def composite_halves_match(composite: np.ndarray, left_width: int) -> bool:
    left = composite[:, :left_width]
    right = composite[:, left_width + SEPARATOR_WIDTH :]
    return left.shape == right.shape and bool(np.array_equal(left, right))


def has_separator(crop: np.ndarray) -> bool:
    """Flat bands give exactly two colours around an interface; a separator adds a third."""
    return len(np.unique(crop.reshape(-1, 3), axis=0)) > 2


def target_leaves_reference(crop: np.ndarray, target_rgb: tuple[int, int, int]) -> bool:
    """True if any target-coloured pixel survives after the reference line was drawn over it."""
    return bool(np.all(crop == np.array(target_rgb, dtype=np.uint8), axis=-1).any())


# ---- helpers


def _task_of(history: Sequence[Message]) -> int:
    return 2 if "choice: A | B | C | D" in history[0].text else 1


def _stage(history: Sequence[Message]) -> tuple[int, list[Message]]:
    """Number of tool rounds so far in this conversation, and the latest round's tool messages."""
    stage = sum(1 for m in history if m.role == "assistant" and m.tool_calls)
    latest: list[Message] = []
    for m in reversed(history):
        if m.role != "tool":
            break
        latest.append(m)
    return stage, latest[::-1]


def _final(task: int, holds: bool, choices: dict[str, str], why: str) -> ModelReply:
    if task == 1:
        line = f"answer: {'Yes' if holds else 'No'}"
    else:
        line = f"choice: {choices['holds'] if holds else choices['broken']}"
    text = f"```answer\n{line}\nrationale: {why}\n```"
    return ModelReply(final_text=text, raw_text=text)


def _calls(stage: int, *specs: tuple[str, dict[str, Any]]) -> ModelReply:
    calls = tuple(ToolCall(f"call_{stage}_{k}", name, args) for k, (name, args) in enumerate(specs))
    return ModelReply(tool_calls=calls, raw_text=f"calling {', '.join(c.tool_name for c in calls)}")


def _image(msg: Message) -> np.ndarray:
    if not msg.images:
        raise ConfigurationError(f"expected an image in tool result {msg.tool_result_for}: {msg.text}")
    return Raster.from_png(msg.images[-1][1]).pixels


def _rect_args(prefix: str, rect: Sequence[int]) -> dict[str, int]:
    return {f"{prefix}x0": rect[0], f"{prefix}y0": rect[1], f"{prefix}x1": rect[2], f"{prefix}y1": rect[3]}


class ScriptedBackend:
    def __init__(self, policy: str, probes: dict[str, dict[str, Any]] | None = None,
                 sample_meta: dict[str, Any] | None = None):
        if policy not in POLICIES:
            raise ConfigurationError(f"unknown scripted policy {policy!r}; expected one of {POLICIES}")
        self.policy = policy
        self.probes = probes
        self.meta = sample_meta

    def bind(self, sample_id: str) -> ScriptedBackend:
        meta = None
        if self.probes is not None:
            meta = self.probes.get(sample_id)
        if meta is None and self.policy == "oracle":
            raise ConfigurationError(f"no probe metadata for sample {sample_id!r}")
        return ScriptedBackend(self.policy, self.probes, meta if meta is not None else self.meta)

    def generate(self, history: Sequence[Message], tools: Sequence[dict[str, Any]],
                 settings: GenerationSettings) -> ModelReply:
        check_history(history)
        task = _task_of(history)
        stage, _ = _stage(history)
        if self.policy == "always_positive":
            choices = (self.meta or {}).get("choices", {"holds": "A", "broken": "B"})
            return _final(task, True, choices, "the illusion holds")
        if self.policy == "never_finalize":
            return _calls(stage, ("crop", {"src": "original", "x0": 0, "y0": 0, "x1": 8, "y1": 8}))
        return self._oracle(history, task, {t["name"] for t in tools})

    # ---- oracle

    def _oracle(self, history: Sequence[Message], task: int, offered: set[str]) -> ModelReply:
        meta = self.meta
        if not meta or "kind" not in meta or "probes" not in meta:
            raise ConfigurationError("oracle policy needs probe metadata (kind, probes)")
        choices = meta.get("choices", {"holds": "A", "broken": "B"})
        if task == 2 and not {"holds", "broken"} <= set(choices):
            raise ConfigurationError("task II oracle needs the option mapping 'choices'")
        stage, results = _stage(history)
        probes = meta["probes"]
        kind = meta["kind"]
        if kind == "contrast_pair":
            return self._contrast(stage, results, probes, task, choices, offered)
        if kind == "band_stack":
            return self._bands(stage, results, probes, task, choices)
        if kind == "reference_line":
            return self._line(stage, results, probes, task, choices)
        raise ConfigurationError(f"oracle has no procedure for kind {kind!r}")

    def _contrast(self, stage, results, probes, task, choices, offered) -> ModelReply:
        if "sample_color" in offered:
            if stage == 0:
                (ax, ay), (bx, by) = probes["points"]
                return _calls(stage, ("sample_color", {"src": "original", "x": ax, "y": ay}),
                              ("sample_color", {"src": "original", "x": bx, "y": by}))
            hexes = [m for r in results for m in _HEX_RE.findall(r.text)]
            if len(hexes) != 2:
                raise ConfigurationError(f"expected two sampled colours, got {hexes}")
            same = colors_match(*hexes)
            why = f"sampled {hexes[0]} and {hexes[1]}: " + ("identical pigments" if same else "colors genuinely differ")
            return _final(task, same, choices, why)
        ra, rb = probes["rects"]
        if stage == 0:
            return _calls(stage, ("compare_crops", {"src_a": "original", **_rect_args("a_", ra),
                                                    "src_b": "original", **_rect_args("b_", rb)}))
        same = composite_halves_match(_image(results[0]), ra[2] - ra[0])
        why = "side-by-side patches are " + ("pixel-identical" if same else "different: colors genuinely differ")
        return _final(task, same, choices, why)

    def _bands(self, stage, results, probes, task, choices) -> ModelReply:
        rects = probes["interfaces"]
        if stage == 0:
            return _calls(stage, *[("crop", {"src": "original", **_rect_args("", r)}) for r in rects])
        found = [i for i, msg in enumerate(results) if has_separator(_image(msg))]
        holds = not found
        why = "no separator at any interface" if holds else f"separator line at interface {found[0] + 1}"
        return _final(task, holds, choices, why)

    def _line(self, stage, results, probes, task, choices) -> ModelReply:
        (x0, y0), (x1, y1) = probes["endpoints"]
        band = int(probes.get("band", 12))
        ref = probes.get("reference_color", "#00FF00")
        if stage == 0:
            return _calls(stage, ("draw_line", {"src": "original", "x0": x0, "y0": y0, "x1": x1, "y1": y1,
                                                "color": ref, "thickness": 1}))
        if stage == 1:
            drawn = results[0].images[-1][0]
            return _calls(stage, ("crop", {"src": drawn, "x0": min(x0, x1), "y0": y0 - band,
                                           "x1": max(x0, x1) + 1, "y1": y0 + band + 1}))
        target = tuple(int(probes["target_color"][i : i + 2], 16) for i in (1, 3, 5))
        bowed = target_leaves_reference(_image(results[0]), target)
        why = "target line departs from the straight reference" if bowed else "target hidden under the straight reference"
        return _final(task, not bowed, choices, why)
