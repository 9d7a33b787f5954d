"""Scripted interaction model.

Implements the confirmation-gated, one-movement-at-a-time execution flow as
a pure function of chat history: forward the first user request to the
planner tool, relay the plan and ask for confirmation, then emit one plan
step per turn, advancing only on successful tool feedback. Session-level
recovery (retry / skip prompts) arrives as user feedback messages with a
fixed phrasing this policy understands.

Call-id conventions (shared with the session loop):
  call-plan      the planner tool call
  step-K         plan step K, first attempt
  step-K-rM      plan step K, retry attempt M
"""

from __future__ import annotations

import json
import re
from typing import Any, Sequence

from ..messages import ChatMessage, MalformedResponse, ToolCall
from ..planning.plan import Placeholder, Plan, parse_plan

PLAN_TOOL = "plan_using_advanced_llm"

_STEP_ID_RE = re.compile(r"^step-(\d+)(?:-r(\d+))?$")
_RETRY_RE = re.compile(r"Retry step (\d+) \(attempt (\d+)\)")
_SKIP_RE = re.compile(r"Skip step (\d+)")
_CONFIRM_RE = re.compile(r"^\s*(yes|confirm|confirmed|proceed|go ahead)\b",
                         re.IGNORECASE)
_DECLINE_RE = re.compile(r"^\s*(no|stop|cancel|decline)\b", re.IGNORECASE)


def _wire_args(args: dict[str, Any]) -> dict[str, Any]:
    def convert(value: Any) -> Any:
        if isinstance(value, Placeholder):
            return str(value)
        if isinstance(value, list):
            return [convert(v) for v in value]
        return value

    return {k: convert(v) for k, v in args.items()}


class ScriptedChat:
    """Deterministic stand-in for the interaction LLM."""

    def chat_complete(self, history: Sequence[ChatMessage],
                      tool_defs: dict[str, str]) -> ChatMessage:
        if not history or history[0].role != "system":
            raise MalformedResponse("history must begin with a system message")
        plan_text = self._plan_text(history)
        last = history[-1]

        if plan_text is None:
            if last.role == "tool" and last.tool_call_id == "call-plan":
                # Planner itself failed.
                reason = _tool_reason(last)
                return ChatMessage(role="assistant",
                                   content=f"I could not produce a plan: "
                                           f"{reason}")
            request = _last_user_content(history)
            if request is None:
                raise MalformedResponse("no user request in history")
            return ChatMessage(
                role="assistant",
                content="Let me work out a plan for that.",
                tool_calls=(ToolCall(id="call-plan", name=PLAN_TOOL,
                                     args={"request_from_user": request}),))

        plan = parse_plan(plan_text)
        done = self._resolved_steps(history)

        if last.role == "tool" and last.tool_call_id == "call-plan":
            return ChatMessage(
                role="assistant",
                content=("Here is my plan:\n\n" + plan_text
                         + "\n\nPlease confirm before I start."))

        if last.role == "user":
            retry = _RETRY_RE.search(last.content)
            if retry:
                k, attempt = int(retry.group(1)), int(retry.group(2))
                return self._emit(plan, k, f"step-{k}-r{attempt}",
                                  f"Retrying step {k}.")
            if _DECLINE_RE.match(last.content):
                return ChatMessage(role="assistant",
                                   content="Understood — stopping here.")
            if _CONFIRM_RE.match(last.content) or _SKIP_RE.search(last.content):
                return self._next(plan, done)
            raise MalformedResponse(
                f"scripted policy cannot interpret {last.content!r}")

        if last.role == "tool":
            match = _STEP_ID_RE.match(last.tool_call_id or "")
            if match is None:
                raise MalformedResponse(
                    f"unexpected tool result id {last.tool_call_id!r}")
            if not _tool_ok(last):
                k = int(match.group(1))
                return ChatMessage(
                    role="assistant",
                    content=f"Step {k} failed ({_tool_reason(last)}); "
                            f"awaiting guidance.")
            return self._next(plan, done)

        raise MalformedResponse(f"unexpected last role {last.role!r}")

    # ------------------------------------------------------------------

    def _next(self, plan: Plan, done: set[int]) -> ChatMessage:
        k = 1
        while k in done:
            k += 1
        if k > len(plan.steps):
            return ChatMessage(role="assistant",
                               content="All plan steps are complete.")
        return self._emit(plan, k, f"step-{k}", f"Executing step {k}.")

    @staticmethod
    def _emit(plan: Plan, k: int, call_id: str, text: str) -> ChatMessage:
        step = plan.steps[k - 1]
        return ChatMessage(role="assistant", content=text,
                           tool_calls=(ToolCall(id=call_id, name=step.tool,
                                                args=_wire_args(step.args)),))

    @staticmethod
    def _plan_text(history: Sequence[ChatMessage]) -> str | None:
        for msg in history:
            if msg.role == "tool" and msg.tool_call_id == "call-plan":
                if _tool_ok(msg):
                    return str(json.loads(msg.content)["output"])
        return None

    @staticmethod
    def _resolved_steps(history: Sequence[ChatMessage]) -> set[int]:
        done: set[int] = set()
        for msg in history:
            if msg.role == "tool":
                match = _STEP_ID_RE.match(msg.tool_call_id or "")
                if match and _tool_ok(msg):
                    done.add(int(match.group(1)))
            elif msg.role == "user":
                skip = _SKIP_RE.search(msg.content)
                if skip:
                    done.add(int(skip.group(1)))
        return done


def _tool_ok(msg: ChatMessage) -> bool:
    try:
        return bool(json.loads(msg.content).get("success"))
    except (json.JSONDecodeError, AttributeError):
        return False


def _tool_reason(msg: ChatMessage) -> str:
    try:
        return str(json.loads(msg.content).get("reason", "unknown"))
    except json.JSONDecodeError:
        return "unknown"


def _last_user_content(history: Sequence[ChatMessage]) -> str | None:
    for msg in reversed(history):
        if msg.role == "user":
            return msg.content
    return None
