"""Live chat-completions-with-tools backend over HTTP."""

from __future__ import annotations

import base64
import io
import json
import logging
import os
import re
import time
from typing import Any, Callable, Sequence

import httpx
from PIL import Image

from .base import (
    BackendError,
    ConfigurationError,
    GenerationSettings,
    MalformedReplyError,
    Message,
    ModelReply,
    QuotaError,
    ToolCall,
    TransportError,
    check_history,
)

log = logging.getLogger(__name__)

_QUOTA_STATUSES = {401, 402, 403, 429}


def _png_data_url(data: bytes, max_edge: int | None) -> str:
    if max_edge:
        with Image.open(io.BytesIO(data)) as im:
            if max(im.size) > max_edge:
                im = im.convert("RGB")
                im.thumbnail((max_edge, max_edge), Image.Resampling.LANCZOS)
                buf = io.BytesIO()
                im.save(buf, format="PNG")
                data = buf.getvalue()
    return "data:image/png;base64," + base64.b64encode(data).decode("ascii")


def _image_parts(images, max_edge) -> list[dict[str, Any]]:
    parts: list[dict[str, Any]] = []
    for rid, data in images:
        parts.append({"type": "text", "text": f"[resource {rid}]"})
        parts.append({"type": "image_url", "image_url": {"url": _png_data_url(data, max_edge)}})
    return parts


def to_wire_messages(history: Sequence[Message], max_edge: int | None = None) -> list[dict[str, Any]]:
    """Convert history to chat-completions messages.

    Tool-role messages cannot carry images on this wire format, so images
    produced by a batch of tool results are sent in one user message that
    follows the batch.
    """
    out: list[dict[str, Any]] = []
    pending: list[tuple[str, bytes]] = []

    def flush():
        if pending:
            out.append({"role": "user", "content": [{"type": "text", "text": "Images created by the tool calls above:"},
                                                    *_image_parts(pending, max_edge)]})
            pending.clear()

    for m in history:
        if m.role != "tool":
            flush()
        if m.role == "system":
            out.append({"role": "system", "content": m.text})
        elif m.role == "user":
            if m.images:
                out.append({"role": "user", "content": [{"type": "text", "text": m.text},
                                                        *_image_parts(m.images, max_edge)]})
            else:
                out.append({"role": "user", "content": m.text})
        elif m.role == "assistant":
            msg: dict[str, Any] = {"role": "assistant", "content": m.text or None}
            if m.tool_calls:
                msg["tool_calls"] = [
                    {"id": c.call_id, "type": "function",
                     "function": {"name": c.tool_name, "arguments": json.dumps(c.arguments, sort_keys=True)}}
                    for c in m.tool_calls
                ]
            out.append(msg)
        else:
            out.append({"role": "tool", "tool_call_id": m.tool_result_for, "content": m.text})
            pending.extend(m.images)
    flush()
    return out


def parse_chat_response(payload: Any) -> ModelReply:
    """Turn a chat-completions response body into a ModelReply or raise MalformedReplyError."""
    raw = json.dumps(payload, sort_keys=True, default=str)[:2000] if not isinstance(payload, str) else payload
    try:
        message = payload["choices"][0]["message"]
    except (KeyError, IndexError, TypeError):
        raise MalformedReplyError("response has no choices[0].message", raw) from None
    if not isinstance(message, dict):
        raise MalformedReplyError("message is not an object", raw)
    content = message.get("content")
    if isinstance(content, list):
        content = "".join(p.get("text", "") for p in content if isinstance(p, dict) and isinstance(p.get("text"), str))
    if content is not None and not isinstance(content, str):
        raise MalformedReplyError("message content is not text", raw)
    calls_raw = message.get("tool_calls") or []
    if not isinstance(calls_raw, list):
        raise MalformedReplyError("tool_calls is not a list", raw)
    calls = []
    for k, c in enumerate(calls_raw):
        try:
            fn = c["function"]
            name = fn["name"]
            args = fn.get("arguments") or "{}"
            args = json.loads(args) if isinstance(args, str) else args
        except (KeyError, TypeError, AttributeError, json.JSONDecodeError) as exc:
            raise MalformedReplyError(f"tool call #{k} unparseable: {exc}", raw) from None
        if not isinstance(name, str) or not isinstance(args, dict):
            raise MalformedReplyError(f"tool call #{k} has a bad name or argument record", raw)
        call_id = c.get("id") if isinstance(c.get("id"), str) else f"call_{k}"
        calls.append(ToolCall(call_id, name, args))
    if calls:
        return ModelReply(tuple(calls), None, content or "")
    if content and content.strip():
        return ModelReply((), content, content)
    raise MalformedReplyError("reply has neither tool calls nor text", raw)


class ChatCompletionsBackend:
    """Generic chat-completions-with-tools client with bounded retries.

    Transport failures (connection errors, 5xx) are retried up to
    ``max_attempts`` times with exponential backoff; quota/auth refusals are
    raised immediately so the caller can switch models.
    """

    def __init__(
        self,
        endpoint: str,
        api_key_env: str = "OPENAI_API_KEY",
        *,
        client: httpx.Client | None = None,
        max_attempts: int = 3,
        backoff: float = 1.0,
        timeout: float = 120.0,
        verbose: bool = False,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.client = client or httpx.Client(timeout=timeout)
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.verbose = verbose
        self.sleep = sleep

    def bind(self, sample_id: str) -> ChatCompletionsBackend:
        return self

    def check_credentials(self) -> None:
        """Fail early (ConfigurationError) if the key variable is unset."""
        self._headers()

    def _headers(self) -> dict[str, str]:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise ConfigurationError(f"environment variable {self.api_key_env} is not set")
        return {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}

    def build_request(self, history, tools, settings: GenerationSettings) -> dict[str, Any]:
        body: dict[str, Any] = {
            "model": settings.model_name,
            "temperature": settings.temperature,
            "max_tokens": settings.max_output_tokens,
            "messages": to_wire_messages(history, settings.max_image_edge),
        }
        if tools:
            body["tools"] = [{"type": "function", "function": t} for t in tools]
        return body

    def generate(self, history, tools, settings: GenerationSettings) -> ModelReply:
        check_history(history)
        body = self.build_request(history, tools, settings)
        headers = self._headers()
        if self.verbose:
            log.debug("POST %s headers=%s body=%s", self.endpoint,
                      {k: ("<redacted>" if k == "Authorization" else v) for k, v in headers.items()},
                      _loggable(body))
        last: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                self.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self.client.post(self.endpoint, json=body, headers=headers)
            except httpx.HTTPError as exc:
                last = TransportError(f"{type(exc).__name__}: {exc}")
                log.warning("attempt %d/%d failed: %s", attempt + 1, self.max_attempts, last)
                continue
            if resp.status_code in _QUOTA_STATUSES:
                raise QuotaError(f"HTTP {resp.status_code} from provider: {resp.text[:300]}")
            if resp.status_code >= 500:
                last = TransportError(f"HTTP {resp.status_code}")
                log.warning("attempt %d/%d failed: %s", attempt + 1, self.max_attempts, last)
                continue
            if resp.status_code >= 400:
                raise BackendError(f"HTTP {resp.status_code}: {resp.text[:300]}")
            try:
                payload = resp.json()
            except ValueError:
                raise MalformedReplyError("response body is not JSON", resp.text[:2000]) from None
            if self.verbose:
                log.debug("response %s", _loggable(payload))
            return parse_chat_response(payload)
        assert last is not None
        raise last


def _loggable(obj: Any) -> str:
    text = json.dumps(obj, default=str)
    # base64 image payloads are elided
    return re.sub(r"data:image/png;base64,[A-Za-z0-9+/=]+", "data:image/png;base64,<elided>", text)
