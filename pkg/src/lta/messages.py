"""Shared chat/tool message types and backend error taxonomy.

These are the currency between the session loop, the planner and the model
backends, scripted or remote; everything here serializes to plain JSON.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Optional


class BackendError(Exception):
    pass


class BackendUnavailable(BackendError):
    """Network/API-level outage. Trials hitting this are excluded from
    metrics rather than scored as failures."""


class AuthError(BackendError):
    pass


class MalformedResponse(BackendError):
    pass


class MalformedToolCall(BackendError):
    pass


class UnsupportedPrompt(BackendError):
    """Scripted backend got a query outside its documented grammar."""


@dataclass(frozen=True)
class ToolCall:
    id: str
    name: str
    args: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "name": self.name, "args": dict(self.args)}

    @staticmethod
    def from_dict(data: dict[str, Any]) -> "ToolCall":
        return ToolCall(id=str(data["id"]), name=str(data["name"]),
                        args=dict(data.get("args") or {}))


@dataclass(frozen=True)
class ToolResult:
    call_id: str
    ok: bool
    payload: Any = None
    failure_reason: str = ""
    failure_kind: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {"call_id": self.call_id, "ok": self.ok, "payload": self.payload,
                "failure_reason": self.failure_reason,
                "failure_kind": self.failure_kind}

    @staticmethod
    def from_dict(data: dict[str, Any]) -> "ToolResult":
        return ToolResult(call_id=str(data["call_id"]), ok=bool(data["ok"]),
                          payload=data.get("payload"),
                          failure_reason=str(data.get("failure_reason", "")),
                          failure_kind=str(data.get("failure_kind", "")))

    def content(self) -> str:
        """Feedback string as the interaction model sees it."""
        if self.ok:
            return json.dumps({"success": True, "output": self.payload},
                              sort_keys=True)
        return json.dumps({"success": False, "reason": self.failure_reason,
                           "kind": self.failure_kind}, sort_keys=True)


@dataclass(frozen=True)
class ChatMessage:
    role: str  # system | user | assistant | tool
    content: str = ""
    tool_calls: tuple[ToolCall, ...] = ()
    tool_call_id: Optional[str] = None

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant", "tool"):
            raise ValueError(f"unknown role {self.role!r}")
        object.__setattr__(self, "tool_calls", tuple(self.tool_calls))

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"role": self.role, "content": self.content}
        if self.tool_calls:
            out["tool_calls"] = [c.to_dict() for c in self.tool_calls]
        if self.tool_call_id is not None:
            out["tool_call_id"] = self.tool_call_id
        return out

    @staticmethod
    def from_dict(data: dict[str, Any]) -> "ChatMessage":
        return ChatMessage(
            role=str(data["role"]), content=str(data.get("content") or ""),
            tool_calls=tuple(ToolCall.from_dict(c)
                             for c in data.get("tool_calls") or ()),
            tool_call_id=data.get("tool_call_id"))
