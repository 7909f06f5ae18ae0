"""Conversation types and the generate contract shared by every backend."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Protocol, Sequence


class BackendError(Exception):
    """Any failure to obtain a reply from a backend."""


class TransportError(BackendError):
    """Network or server failure; retryable."""


class QuotaError(BackendError):
    """Provider refusal, quota exhaustion or bad credentials; not retried."""


class MalformedReplyError(BackendError):
    def __init__(self, message: str, raw_text: str = ""):
        super().__init__(message)
        self.raw_text = raw_text


class ConfigurationError(BackendError):
    pass


class ReplayDivergenceError(BackendError):
    def __init__(self, round_number: int, expected: str, got: str):
        super().__init__(f"replay diverged at round {round_number}: history hash {got[:12]} != recorded {expected[:12]}")
        self.round = round_number


class ReplayExhaustedError(BackendError):
    def __init__(self, round_number: int):
        super().__init__(f"replay exhausted at round {round_number}")
        self.round = round_number


ERROR_TYPES = {
    cls.__name__: cls
    for cls in (BackendError, TransportError, QuotaError, MalformedReplyError, ConfigurationError)
}


@dataclass(frozen=True)
class ToolCall:
    call_id: str
    tool_name: str
    arguments: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"call_id": self.call_id, "tool_name": self.tool_name, "arguments": self.arguments}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ToolCall:
        return cls(d["call_id"], d["tool_name"], dict(d.get("arguments") or {}))


@dataclass(frozen=True)
class Message:
    role: str  # system | user | assistant | tool
    text: str = ""
    images: tuple[tuple[str, bytes], ...] = ()
    tool_calls: tuple[ToolCall, ...] = ()
    tool_result_for: str | None = None

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant", "tool"):
            raise ValueError(f"bad role {self.role!r}")
        if self.role == "tool" and not self.tool_result_for:
            raise ValueError("tool messages must reference a call id")

    def digest_record(self) -> dict[str, Any]:
        return {
            "role": self.role,
            "text": self.text,
            "images": [[rid, hashlib.sha256(data).hexdigest()] for rid, data in self.images],
            "tool_calls": [c.to_dict() for c in self.tool_calls],
            "tool_result_for": self.tool_result_for,
        }


@dataclass(frozen=True)
class ModelReply:
    tool_calls: tuple[ToolCall, ...] = ()
    final_text: str | None = None
    raw_text: str = ""

    def __post_init__(self):
        if bool(self.tool_calls) == (self.final_text is not None):
            raise ValueError("a reply carries either tool calls or a final text, not both or neither")

    @property
    def is_final(self) -> bool:
        return self.final_text is not None

    def to_dict(self) -> dict[str, Any]:
        if self.tool_calls:
            return {"tool_calls": [c.to_dict() for c in self.tool_calls], "raw_text": self.raw_text}
        return {"final_text": self.final_text, "raw_text": self.raw_text}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ModelReply:
        if d.get("tool_calls"):
            return cls(tuple(ToolCall.from_dict(c) for c in d["tool_calls"]), None, d.get("raw_text", ""))
        return cls((), d["final_text"], d.get("raw_text", ""))


@dataclass(frozen=True)
class GenerationSettings:
    model_name: str = "scripted"
    temperature: float = 0.0
    max_output_tokens: int = 2048
    max_image_edge: int | None = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


class Backend(Protocol):
    def generate(
        self, history: Sequence[Message], tools: Sequence[dict[str, Any]], settings: GenerationSettings
    ) -> ModelReply: ...

    def bind(self, sample_id: str) -> Backend: ...


def check_history(history: Sequence[Message]) -> None:
    if not history or history[0].role != "system" or any(m.role == "system" for m in history[1:]):
        raise ConfigurationError("history must begin with exactly one system message")


def history_hash(history: Sequence[Message], tools: Sequence[dict[str, Any]] = ()) -> str:
    doc = {"messages": [m.digest_record() for m in history], "tools": [t.get("name") for t in tools]}
    return hashlib.sha256(json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


class PerSampleBackend:
    """Backend that must be bound to a sample before use; ``make(sample_id)`` builds the bound one."""

    def __init__(self, make):
        self._make = make

    def bind(self, sample_id: str):
        return self._make(sample_id)

    def generate(self, history, tools, settings):
        raise ConfigurationError("this backend must be bound to a sample first")
