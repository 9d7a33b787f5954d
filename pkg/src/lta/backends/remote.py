"""HTTP adapters that let real models replace the scripted backends.

Chat traffic uses the ubiquitous chat-completion JSON shape: request
``{"model", "messages": [...], "tools": [...]}``, reply
``{"choices": [{"message": {...}}]}`` with ``tool_calls`` carrying
``function.arguments`` as a JSON string. Grounding traffic posts
``{"task", "prompt", "labels", "image"}`` (image = base64 of the depth-grid
binary) and expects ``{"text": "..."}`` whose text obeys the wire formats in
:mod:`lta.backends.wire`.

Transient failures retry with exponential backoff (3 attempts) and then
surface as BackendUnavailable, which the metrics layer treats as an
excluded trial, not a failed one.
"""

from __future__ import annotations

import base64
import io
import json
import os
import time
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence

import httpx

from ..messages import (AuthError, BackendUnavailable, ChatMessage,
                        MalformedResponse, ToolCall)

CHAT_URL_VAR = "LTA_CHAT_URL"
CHAT_KEY_VAR = "LTA_CHAT_KEY"
VLM_URL_VAR = "LTA_VLM_URL"
VLM_KEY_VAR = "LTA_VLM_KEY"


@dataclass(frozen=True)
class RemoteConfig:
    url: str
    api_key: str = ""
    model: str = "default"
    timeout: float = 30.0
    max_attempts: int = 3
    backoff: float = 0.2

    @staticmethod
    def chat_from_env() -> "RemoteConfig":
        return RemoteConfig._from_env(CHAT_URL_VAR, CHAT_KEY_VAR)

    @staticmethod
    def vlm_from_env() -> "RemoteConfig":
        return RemoteConfig._from_env(VLM_URL_VAR, VLM_KEY_VAR)

    @staticmethod
    def _from_env(url_var: str, key_var: str) -> "RemoteConfig":
        url = os.environ.get(url_var, "")
        if not url:
            raise BackendUnavailable(f"{url_var} is not configured")
        return RemoteConfig(url=url, api_key=os.environ.get(key_var, ""))


class _HttpBackend:
    def __init__(self, config: RemoteConfig,
                 transport: Optional[httpx.BaseTransport] = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self._sleep = sleep
        headers = {}
        if config.api_key:
            headers["Authorization"] = f"Bearer {config.api_key}"
        self._client = httpx.Client(transport=transport, headers=headers,
                                    timeout=config.timeout)

    def close(self) -> None:
        self._client.close()

    def _post(self, body: dict[str, Any]) -> dict[str, Any]:
        last_error: Exception | None = None
        for attempt in range(self.config.max_attempts):
            if attempt:
                self._sleep(self.config.backoff * (2 ** (attempt - 1)))
            try:
                response = self._client.post(self.config.url, json=body)
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code in (401, 403):
                raise AuthError(f"endpoint rejected credentials "
                                f"({response.status_code})")
            if response.status_code >= 500 or response.status_code in (408, 429):
                last_error = RuntimeError(f"status {response.status_code}")
                continue
            if response.status_code != 200:
                raise MalformedResponse(
                    f"unexpected status {response.status_code}: "
                    f"{response.text[:200]}")
            try:
                data = response.json()
            except json.JSONDecodeError as exc:
                raise MalformedResponse(f"non-JSON reply: {exc}") from None
            if not isinstance(data, dict):
                raise MalformedResponse("reply must be a JSON object")
            return data
        raise BackendUnavailable(
            f"no usable reply after {self.config.max_attempts} attempts: "
            f"{last_error}")


class RemoteChat(_HttpBackend):
    def chat_complete(self, history: Sequence[ChatMessage],
                      tool_defs: dict[str, str]) -> ChatMessage:
        body = {
            "model": self.config.model,
            "messages": [_chat_wire(m) for m in history],
            "tools": [{"type": "function",
                       "function": {"name": name, "description": desc,
                                    "parameters": {"type": "object"}}}
                      for name, desc in tool_defs.items()],
        }
        data = self._post(body)
        try:
            message = data["choices"][0]["message"]
        except (KeyError, IndexError, TypeError):
            raise MalformedResponse("reply lacks choices[0].message") from None
        return _parse_chat_message(message)


class RemotePlanner(_HttpBackend):
    """Single-turn completion against the chat endpoint, used for the
    dedicated planning call (the planning prompt carries the scene graph
    and the tool roster; the reply must be a numbered plan)."""

    def complete(self, prompt: str) -> str:
        body = {"model": self.config.model,
                "messages": [{"role": "user", "content": prompt}]}
        data = self._post(body)
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise MalformedResponse("reply lacks choices[0].message.content") \
                from None
        if not isinstance(content, str) or not content.strip():
            raise MalformedResponse("planner reply has no text content")
        return content


class RemoteVlm(_HttpBackend):
    """Raw-text answers; callers validate through the wire parsers."""

    def presence(self, name: str, cap) -> str:
        return self._ask({"task": "presence", "prompt": name,
                          "image": _encode_view(cap)})

    def bboxes(self, names: list[str], cap) -> str:
        return self._ask({"task": "detect", "labels": list(names),
                          "image": _encode_view(cap)})

    def point(self, prompt: str, cap) -> str:
        return self._ask({"task": "point", "prompt": prompt,
                          "image": _encode_view(cap)})

    def vqa(self, question: str, cap) -> str:
        return self._ask({"task": "vqa", "prompt": question,
                          "image": _encode_view(cap)})

    def _ask(self, body: dict[str, Any]) -> str:
        data = self._post(body)
        text = data.get("text")
        if not isinstance(text, str):
            raise MalformedResponse("grounding reply lacks a 'text' field")
        return text


def _encode_view(cap) -> str:
    buffer = io.BytesIO()
    cap.views[0].depth.write(buffer)
    return base64.b64encode(buffer.getvalue()).decode("ascii")


def _chat_wire(msg: ChatMessage) -> dict[str, Any]:
    out: dict[str, Any] = {"role": msg.role, "content": msg.content}
    if msg.tool_calls:
        out["tool_calls"] = [
            {"id": call.id, "type": "function",
             "function": {"name": call.name,
                          "arguments": json.dumps(call.args)}}
            for call in msg.tool_calls]
    if msg.tool_call_id is not None:
        out["tool_call_id"] = msg.tool_call_id
    return out


def _parse_chat_message(raw: Any) -> ChatMessage:
    if not isinstance(raw, dict) or raw.get("role") != "assistant":
        raise MalformedResponse(f"bad assistant message: {raw!r}")
    calls = []
    for entry in raw.get("tool_calls") or ():
        try:
            function = entry["function"]
            args_text = function.get("arguments", "{}")
            args = json.loads(args_text) if args_text else {}
            if not isinstance(args, dict):
                raise TypeError
            calls.append(ToolCall(id=str(entry["id"]),
                                  name=str(function["name"]), args=args))
        except (KeyError, TypeError, json.JSONDecodeError):
            raise MalformedResponse(
                f"bad tool call in reply: {entry!r}") from None
    return ChatMessage(role="assistant",
                       content=str(raw.get("content") or ""),
                       tool_calls=tuple(calls))
