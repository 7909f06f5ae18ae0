"""Record a backend's replies to disk and serve them back deterministically."""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Any, Sequence

from .base import (
    ERROR_TYPES,
    BackendError,
    GenerationSettings,
    Message,
    ModelReply,
    PerSampleBackend,
    ReplayDivergenceError,
    ReplayExhaustedError,
    history_hash,
)

REPLAY_FILE = "replay.jsonl"


class RecordingBackend:
    """Wraps a backend and appends one JSON line per generate call to *path*."""

    def __init__(self, inner, path: str | Path):
        self.inner = inner
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("")
        self._round = 0
        self._lock = threading.Lock()

    @classmethod
    def per_sample(cls, inner, root: str | Path) -> PerSampleBackend:
        root = Path(root)
        return PerSampleBackend(lambda sid: cls(inner.bind(sid), root / sid / REPLAY_FILE))

    def bind(self, sample_id: str) -> RecordingBackend:
        return self

    def generate(self, history: Sequence[Message], tools: Sequence[dict[str, Any]],
                 settings: GenerationSettings) -> ModelReply:
        with self._lock:
            self._round += 1
            entry: dict[str, Any] = {"round": self._round, "history_hash": history_hash(history, tools)}
            try:
                reply = self.inner.generate(history, tools, settings)
            except BackendError as exc:
                entry["error"] = {"type": type(exc).__name__, "message": str(exc)}
                self._append(entry)
                raise
            entry["reply"] = reply.to_dict()
            self._append(entry)
            return reply

    def _append(self, entry: dict[str, Any]) -> None:
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")


class ReplayBackend:
    """Serves recorded replies by position; fails loudly if the conversation diverges."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        lines = self.path.read_text(encoding="utf-8").splitlines()
        self.entries = [json.loads(line) for line in lines if line.strip()]
        self._pos = 0
        self._lock = threading.Lock()

    @classmethod
    def per_sample(cls, root: str | Path) -> PerSampleBackend:
        root = Path(root)
        return PerSampleBackend(lambda sid: cls(root / sid / REPLAY_FILE))

    def bind(self, sample_id: str) -> ReplayBackend:
        return self

    def generate(self, history: Sequence[Message], tools: Sequence[dict[str, Any]],
                 settings: GenerationSettings) -> ModelReply:
        with self._lock:
            round_number = self._pos + 1
            if self._pos >= len(self.entries):
                raise ReplayExhaustedError(round_number)
            entry = self.entries[self._pos]
            got = history_hash(history, tools)
            if got != entry["history_hash"]:
                raise ReplayDivergenceError(round_number, entry["history_hash"], got)
            self._pos += 1
        if "error" in entry:
            cls = ERROR_TYPES.get(entry["error"]["type"], BackendError)
            raise cls(entry["error"]["message"])
        return ModelReply.from_dict(entry["reply"])
