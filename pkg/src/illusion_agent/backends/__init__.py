"""Model backends: live HTTP, scripted policies, record/replay."""

from .base import (
    Backend,
    BackendError,
    ConfigurationError,
    GenerationSettings,
    MalformedReplyError,
    Message,
    ModelReply,
    PerSampleBackend,
    QuotaError,
    ReplayDivergenceError,
    ReplayExhaustedError,
    ToolCall,
    TransportError,
    history_hash,
)
from .live import ChatCompletionsBackend, parse_chat_response, to_wire_messages
from .replay import RecordingBackend, ReplayBackend
from .scripted import POLICIES, ScriptedBackend

__all__ = [
    "Backend", "BackendError", "ChatCompletionsBackend", "ConfigurationError", "GenerationSettings",
    "MalformedReplyError", "Message", "ModelReply", "PerSampleBackend", "POLICIES", "QuotaError",
    "RecordingBackend", "ReplayBackend", "ReplayDivergenceError", "ReplayExhaustedError", "ScriptedBackend",
    "ToolCall", "TransportError", "history_hash", "parse_chat_response", "to_wire_messages",
]
