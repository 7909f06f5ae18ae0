"""Bounded per-sample tool-calling loop with a rescue pass and a fallback answer."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

from .backends.base import BackendError, GenerationSettings, Message, ModelReply, QuotaError, ToolCall
from .registry import Raster, Registry, UnknownResourceError
from .routing import (
    SHOW_RESOURCE,
    PromptBundle,
    StrategyTable,
    TaskKind,
    build_rescue_prompt,
    build_system_prompt,
    tool_schemas,
    tool_subset,
)
from .tools import ToolError, call_tool

log = logging.getLogger(__name__)

REASK_TEXT = "Your last reply did not contain a valid answer. Reply with only the answer block."
BUDGET_TEXT = "The tool-call budget is used up. Answer now with only the answer block; no more tool calls."


class MalformedAnswerError(ValueError):
    def __init__(self, raw_text: str):
        super().__init__("no recognizable verdict in reply")
        self.raw_text = raw_text


@dataclass(frozen=True)
class FinalAnswer:
    task: TaskKind
    answer: str  # "Yes"/"No" for task I, "A".."D" for task II
    rationale: str = ""

    def __post_init__(self):
        if self.answer not in self.task.labels:
            raise ValueError(f"{self.answer!r} is not a legal answer for task {self.task.value}")

    def to_dict(self) -> dict[str, Any]:
        key = "answer" if self.task is TaskKind.I else "choice"
        return {key: self.answer, "rationale": self.rationale}


_BLOCK_RE = re.compile(r"```\s*answer\s*\n(.*?)```", re.S | re.I)
_FIELD_RE = re.compile(r"^\s*(answer|choice|rationale)\s*:\s*(.*?)\s*$", re.I | re.M)


def parse_final(raw_text: str, task: TaskKind) -> FinalAnswer:
    """Extract the verdict: fenced ``answer`` block first, then the last standalone verdict token."""
    task = TaskKind.parse(task)
    key = "answer" if task is TaskKind.I else "choice"
    for block in reversed(_BLOCK_RE.findall(raw_text or "")):
        fields = {k.lower(): v for k, v in _FIELD_RE.findall(block)}
        value = fields.get(key, "").strip().strip("*.`'\"")
        canon = {lab.lower(): lab for lab in task.labels}.get(value.lower())
        if canon:
            return FinalAnswer(task, canon, fields.get("rationale", ""))
    if task is TaskKind.I:
        tokens = re.findall(r"\b(yes|no)\b", raw_text or "", re.I)
        verdict = tokens[-1].capitalize() if tokens else None
    else:
        tokens = re.findall(r"\b([A-D])\b", raw_text or "")
        verdict = tokens[-1] if tokens else None
    if verdict is None:
        raise MalformedAnswerError(raw_text)
    return FinalAnswer(task, verdict, (raw_text or "").strip()[-500:])


@dataclass
class RoundRecord:
    round_index: int
    tool_calls: list[ToolCall]
    outcomes: list[dict[str, Any]]
    model_raw: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "round_index": self.round_index,
            "tool_calls": [c.to_dict() for c in self.tool_calls],
            "outcomes": self.outcomes,
            "model_raw": self.model_raw,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> RoundRecord:
        return cls(d["round_index"], [ToolCall.from_dict(c) for c in d["tool_calls"]], d["outcomes"],
                   d.get("model_raw", ""))


@dataclass
class Transcript:
    sample_id: str
    task: TaskKind
    prompt_version: str
    model_name: str
    rounds: list[RoundRecord] = field(default_factory=list)
    rescue_rounds: list[RoundRecord] = field(default_factory=list)
    final: FinalAnswer | None = None
    final_raw: str = ""
    used_rescue: bool = False
    used_fallback: bool = False
    events: list[str] = field(default_factory=list)

    def tools_called(self) -> set[str]:
        return {c.tool_name for r in self.rounds + self.rescue_rounds for c in r.tool_calls}

    def to_dict(self) -> dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "task": self.task.value,
            "prompt_version": self.prompt_version,
            "model_name": self.model_name,
            "rounds": [r.to_dict() for r in self.rounds],
            "rescue_rounds": [r.to_dict() for r in self.rescue_rounds],
            "final": self.final.to_dict() if self.final else None,
            "final_raw": self.final_raw,
            "used_rescue": self.used_rescue,
            "used_fallback": self.used_fallback,
            "events": self.events,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Transcript:
        task = TaskKind.parse(d["task"])
        final = None
        if d.get("final"):
            f = d["final"]
            final = FinalAnswer(task, f.get("answer") or f.get("choice"), f.get("rationale", ""))
        return cls(
            d["sample_id"], task, d.get("prompt_version", ""), d.get("model_name", ""),
            [RoundRecord.from_dict(r) for r in d.get("rounds", [])],
            [RoundRecord.from_dict(r) for r in d.get("rescue_rounds", [])],
            final, d.get("final_raw", ""), bool(d.get("used_rescue")), bool(d.get("used_fallback")),
            list(d.get("events", [])),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, sample_dir: str | Path) -> Path:
        path = Path(sample_dir) / "transcript.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())
        return path

    @classmethod
    def load(cls, path: str | Path) -> Transcript:
        return cls.from_dict(json.loads(Path(path).read_text()))


DEFAULT_FALLBACKS = {TaskKind.I: "No", TaskKind.II: "A"}


@dataclass(frozen=True)
class AgentConfig:
    max_rounds: int = 10
    rescue_max_rounds: int = 3
    settings: GenerationSettings = field(default_factory=GenerationSettings)
    # answer given when both the main and the rescue agent fail, per task
    fallback_answers: dict[TaskKind, str] = field(default_factory=lambda: dict(DEFAULT_FALLBACKS))
    # tried in order when the provider refuses the current model (quota)
    fallback_models: tuple[str, ...] = ()
    strategies: dict[TaskKind, StrategyTable] = field(default_factory=dict)

    def __post_init__(self):
        if self.max_rounds < 1 or self.rescue_max_rounds < 1:
            raise ValueError("round limits must be >= 1")

    def fallback_answer(self, task: TaskKind) -> FinalAnswer:
        return FinalAnswer(task, self.fallback_answers[task], "fallback: no valid answer from the agent")


def user_prompt(question: str, image: Raster, options: Sequence[str] | None = None) -> str:
    lines = [f"Question: {question.strip()}"]
    if options:
        lines.append("Options:")
        lines.extend(f"{letter}. {opt}" for letter, opt in zip("ABCD", options))
    lines.append(
        f'The image is registered as "original" and is {image.width}x{image.height} pixels '
        "(origin top-left, x to the right, y down)."
    )
    return "\n".join(lines)


class _Conversation:
    """One conversation (main or rescue) against a shared registry."""

    def __init__(self, cfg: AgentConfig, backend, task: TaskKind, registry: Registry, transcript: Transcript):
        self.cfg = cfg
        self.backend = backend
        self.task = task
        self.registry = registry
        self.transcript = transcript
        self.subset = set(tool_subset(task))
        self.schemas = tool_schemas(task)

    def _generate(self, history: list[Message], tools) -> ModelReply:
        while True:
            settings = replace(self.cfg.settings, model_name=self.transcript.model_name)
            try:
                return self.backend.generate(history, tools, settings)
            except QuotaError as exc:
                remaining = [m for m in self.cfg.fallback_models if m != self.transcript.model_name
                             and m not in self._tried]
                if not remaining:
                    raise
                self._tried.add(self.transcript.model_name)
                self.transcript.events.append(f"quota error on {self.transcript.model_name}: {exc}; "
                                              f"switching to {remaining[0]}")
                self.transcript.model_name = remaining[0]

    _tried: set[str]

    def run(self, history: list[Message], limit: int, records: list[RoundRecord]) -> tuple[FinalAnswer | None, str]:
        self._tried = set()
        reasked = budget_note = False
        while True:
            exhausted = len(records) >= limit
            if exhausted and not budget_note:
                history.append(Message("user", BUDGET_TEXT))
                budget_note = True
            try:
                reply = self._generate(history, [] if exhausted else self.schemas)
            except BackendError as exc:
                self.transcript.events.append(f"backend error: {type(exc).__name__}: {exc}")
                return None, ""
            if reply.tool_calls:
                if exhausted:
                    self.transcript.events.append(f"round limit {limit} reached; further tool calls ignored")
                    return None, reply.raw_text
                records.append(self._dispatch(len(records), reply, history))
                continue
            try:
                return parse_final(reply.final_text or "", self.task), reply.raw_text
            except MalformedAnswerError:
                self.transcript.events.append("malformed final answer" + ("" if not reasked else "; giving up"))
                if reasked:
                    return None, reply.raw_text
                reasked = True
                history.append(Message("assistant", reply.raw_text or reply.final_text or ""))
                history.append(Message("user", REASK_TEXT))

    def _dispatch(self, index: int, reply: ModelReply, history: list[Message]) -> RoundRecord:
        history.append(Message("assistant", reply.raw_text, tool_calls=reply.tool_calls))
        outcomes = []
        for call in reply.tool_calls:
            images: tuple[tuple[str, bytes], ...] = ()
            rec: dict[str, Any] = {"call_id": call.call_id, "tool_name": call.tool_name}
            try:
                if call.tool_name == SHOW_RESOURCE:
                    rid = str((call.arguments or {}).get("id", ""))
                    res = self.registry.get(rid)
                    images = ((rid, res.raster.to_png()),)
                    rec.update(ok=True, new_id=None, shown_id=rid,
                               observation=f"showing {rid} ({res.raster.width}x{res.raster.height})")
                elif call.tool_name not in self.subset:
                    raise ToolError(f"tool {call.tool_name!r} is not available for this task")
                else:
                    out = call_tool(self.registry, call.tool_name, call.arguments)
                    images = ((out.new_id, self.registry.get(out.new_id).raster.to_png()),)
                    rec.update(ok=True, **out.to_dict())
            except (ToolError, UnknownResourceError) as exc:
                rec.update(ok=False, error=str(exc))
            outcomes.append(rec)
            text = rec.get("observation") or f"error: {rec.get('error')}"
            history.append(Message("tool", text, images=images, tool_result_for=call.call_id))
        return RoundRecord(index, list(reply.tool_calls), outcomes, reply.raw_text)


def run_rescue(
    cfg: AgentConfig,
    backend,
    task: TaskKind,
    image: Raster,
    question: str,
    failed_transcript: Transcript,
    registry: Registry,
    options: Sequence[str] | None = None,
) -> tuple[list[RoundRecord], FinalAnswer | None, str]:
    """Fresh short conversation: compressed prompt, original plus the two newest resources."""
    bundle = build_rescue_prompt(task, cfg.strategies.get(task))
    ids = registry.list_ids()
    recent = [rid for rid in ids[1:]][-2:]
    shown = [("original", image.to_png())] + [(rid, registry.get(rid).raster.to_png()) for rid in recent]
    text = user_prompt(question, image, options)
    if recent:
        text += "\nAlso attached: the latest annotated resources " + ", ".join(recent) + "."
    history = [Message("system", bundle.system_prompt), Message("user", text, images=tuple(shown))]
    records: list[RoundRecord] = []
    conv = _Conversation(cfg, backend, task, registry, failed_transcript)
    final, raw = conv.run(history, cfg.rescue_max_rounds, records)
    return records, final, raw


def run_sample(
    cfg: AgentConfig,
    backend,
    task: TaskKind,
    image: Raster,
    question: str,
    options: Sequence[str] | None = None,
    sample_id: str = "sample",
) -> tuple[Transcript, Registry]:
    task = TaskKind.parse(task)
    if not question or not question.strip():
        raise ValueError("question must be non-empty")
    registry = Registry(image)
    bundle: PromptBundle = build_system_prompt(task, cfg.strategies.get(task))
    transcript = Transcript(sample_id, task, bundle.version, cfg.settings.model_name)
    history = [
        Message("system", bundle.system_prompt),
        Message("user", user_prompt(question, image, options), images=(("original", image.to_png()),)),
    ]
    final, raw = _Conversation(cfg, backend, task, registry, transcript).run(history, cfg.max_rounds,
                                                                          transcript.rounds)
    if final is None:
        transcript.used_rescue = True
        rounds, final, raw = run_rescue(cfg, backend, task, image, question, transcript, registry, options)
        transcript.rescue_rounds = rounds
    if final is None:
        transcript.used_fallback = True
        final = cfg.fallback_answer(task)
    transcript.final = final
    transcript.final_raw = raw
    return transcript, registry
