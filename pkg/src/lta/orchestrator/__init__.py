"""Tool-calling orchestration: registry, executor, session loop, trace."""

from .session import Session, SessionError, SessionState
from .tools import (ArgSchemaError, RECOVERABLE_KINDS, REPOSITION_KINDS,
                    ToolExecutor, ToolSpec, UnknownTool, register_tools,
                    tool_descriptions)
from .trace import (EVENT_KINDS, ReplayMismatch, TraceRecorder, lint_trace,
                    load_trace, replay_trace)

__all__ = [
    "ArgSchemaError", "EVENT_KINDS", "RECOVERABLE_KINDS", "REPOSITION_KINDS",
    "ReplayMismatch", "Session", "SessionError", "SessionState",
    "ToolExecutor", "ToolSpec", "TraceRecorder", "UnknownTool", "lint_trace",
    "load_trace", "register_tools", "replay_trace", "tool_descriptions",
]
