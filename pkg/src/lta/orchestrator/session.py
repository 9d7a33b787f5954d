"""Session state machine: one user task from request to Done/Failed.

The session owns the chat loop. It feeds history to the interaction
backend, executes the tool calls it emits, applies the failure-handling
policy (retry with rescan, then suggest skip or reposition), enforces the
confirmation gate and the one-movement-per-turn rule, and records every
event in the trace.
"""

from __future__ import annotations

import re
from enum import Enum
from typing import Any, Optional

import numpy as np

from ..backends.chat import ScriptedChat
from ..messages import (BackendUnavailable, ChatMessage, ToolCall, ToolResult)
from ..planning.plan import Plan, PlanParseError, parse_plan
from ..planning.rules import (MOTION_TOOLS, PICK_TOOL, PLAN_TOOL, SCAN_TOOL,
                              TAG_TOOL)
from ..scene_graph import GraphDelta, SceneGraph, diff
from ..sim.world import WorldState
from .tools import (ArgSchemaError, RECOVERABLE_KINDS, REPOSITION_KINDS,
                    ToolExecutor, UnknownTool, tool_descriptions)
from .trace import TraceRecorder, _apply_reposition, _reposition_movers

SYSTEM_PROMPT = (
    "You are a casual, friendly 6-axis tabletop arm with a two-finger "
    "gripper. Take the user's request and hand it verbatim to "
    "plan_using_advanced_llm, then present the returned plan and ask for "
    "confirmation before acting. Once confirmed, execute the plan step by "
    "step. Issue only one movement tool call (pick or place) at a time and "
    "observe its feedback before the next; scene-graph edits may accompany "
    "a pick, but never pick and place together. Report failures and await "
    "guidance."
)

_TAG_ID_RE = re.compile(r"apriltag id (\d+)", re.IGNORECASE)
_STEP_ID_RE = re.compile(r"^step-(\d+)(?:-r(\d+))?$")


class SessionState(str, Enum):
    AWAIT_REQUEST = "AwaitRequest"
    PLANNING = "Planning"
    AWAIT_CONFIRMATION = "AwaitConfirmation"
    EXECUTING = "Executing"
    AWAIT_INTERVENTION = "AwaitUserIntervention"
    DONE = "Done"
    FAILED = "Failed"


_TERMINAL = (SessionState.DONE, SessionState.FAILED)


class SessionError(Exception):
    pass


def _delta_payload(delta: GraphDelta) -> dict[str, Any]:
    return {
        "added": list(delta.added),
        "removed": list(delta.removed),
        "attribute_changes": [
            {"node": c.node, "attribute": c.attribute, "old": c.old,
             "new": c.new} for c in delta.attribute_changes],
        "reparented": [
            {"node": r.node, "old_parent": r.old_parent,
             "new_parent": r.new_parent} for r in delta.reparented],
    }


class Session:
    def __init__(self, world: WorldState, graph: SceneGraph, *,
                 vlm=None, planner=None, chat=None, mode: str = "vlm",
                 interactive: bool = False,
                 intervention_policy: str = "skip",
                 max_retries: int = 3, session_id: str = "session-0"):
        self.id = session_id
        self.executor = ToolExecutor(world, graph, vlm=vlm, planner=planner,
                                     mode=mode)
        self.chat = chat or ScriptedChat()
        self.tool_defs = tool_descriptions(mode)
        self.mode = mode
        self.interactive = interactive
        self.intervention_policy = intervention_policy
        self.max_retries = max_retries
        self.trace = TraceRecorder()
        self.state = SessionState.AWAIT_REQUEST
        self.history: list[ChatMessage] = [
            ChatMessage(role="system", content=self._system_prompt())]
        self.plan: Optional[Plan] = None
        self.steps_done: set[int] = set()
        self.failures: dict[int, int] = {}  # consecutive failures per step
        self.retry_seq: dict[int, int] = {}  # retries issued per step
        self.repositioned: set[int] = set()
        self.excluded = False
        self.failure_note = ""
        self.pending_suggestion: Optional[dict[str, Any]] = None
        self._last_failure: Optional[tuple[Optional[int], ToolCall,
                                           ToolResult]] = None
        self._declined = False
        self._recover_seq = 0

    # ------------------------------------------------------------------
    # Convenience views
    # ------------------------------------------------------------------

    @property
    def world(self) -> WorldState:
        return self.executor.world

    @property
    def graph(self) -> SceneGraph:
        return self.executor.graph

    def _system_prompt(self) -> str:
        tools = "\n".join(f"- {name}: {text}"
                          for name, text in self.tool_defs.items())
        return SYSTEM_PROMPT + "\n\n[Available Tools]\n" + tools

    def report(self) -> dict[str, Any]:
        return {
            "session": self.id,
            "state": self.state.value,
            "excluded": self.excluded,
            "plan_steps": len(self.plan.steps) if self.plan else 0,
            "steps_done": sorted(self.steps_done),
            "failures": {str(k): v for k, v in self.failures.items() if v},
            "failure_note": self.failure_note,
        }

    # ------------------------------------------------------------------
    # Public entry points
    # ------------------------------------------------------------------

    def submit_request(self, text: str) -> None:
        if self.state is not SessionState.AWAIT_REQUEST:
            raise SessionError(f"cannot accept a request in {self.state.value}")
        self._user(text)
        self._transition(SessionState.PLANNING)
        self._drive()

    def confirm(self, accept: bool = True) -> None:
        if self.state is not SessionState.AWAIT_CONFIRMATION:
            raise SessionError(f"nothing to confirm in {self.state.value}")
        if accept:
            self._user("Yes, proceed.", decision={"action": "confirm"})
            self._transition(SessionState.EXECUTING)
        else:
            self._declined = True
            self._user("No, stop here.", decision={"action": "decline"})
            self._transition(SessionState.EXECUTING)
        self._drive()

    def intervene(self, action: str) -> None:
        if self.state is not SessionState.AWAIT_INTERVENTION:
            raise SessionError(f"no intervention awaited in {self.state.value}")
        if action not in ("skip", "reposition", "retry", "abort"):
            # Reject before touching the pending suggestion so the caller
            # can correct a typo and still intervene.
            raise SessionError(f"unknown intervention {action!r}")
        pending = self.pending_suggestion or {}
        self.pending_suggestion = None
        step = pending.get("step")
        involved = pending.get("object")
        if action == "skip":
            if step is not None:
                self.steps_done.add(step)
            self._user(f"Skip step {step} and continue.",
                       decision={"action": "skip", "step": step})
            self._transition(SessionState.EXECUTING)
        elif action == "reposition":
            if involved is None:
                raise SessionError("no object identified to reposition")
            position = self._reposition(involved)
            if step is not None:
                self.repositioned.add(step)
                self.failures[step] = 0
            attempt = self._next_attempt(step)
            self._user(
                f"I repositioned the {involved}. "
                f"Retry step {step} (attempt {attempt}).",
                decision={"action": "reposition", "step": step,
                          "object": involved, "position": position,
                          "attempt": attempt})
            self._rescan_after_reposition(involved, step)
            self._transition(SessionState.EXECUTING)
        elif action == "retry":
            if step is not None:
                self.failures[step] = 0
            attempt = self._next_attempt(step)
            self._user(f"Retry step {step} (attempt {attempt}).",
                       decision={"action": "retry", "step": step,
                                 "attempt": attempt})
            self._transition(SessionState.EXECUTING)
        elif action == "abort":
            self._declined = True
            self._user("No, stop here.", decision={"action": "decline"})
            self._transition(SessionState.EXECUTING)
        self._drive()

    # ------------------------------------------------------------------
    # Drive loop
    # ------------------------------------------------------------------

    def _drive(self) -> None:
        for _ in range(100_000):
            if self.state not in (SessionState.PLANNING,
                                  SessionState.EXECUTING):
                return
            try:
                msg = self.chat.chat_complete(self.history, self.tool_defs)
            except BackendUnavailable as exc:
                self._abort_excluded(str(exc))
                return
            self.history.append(msg)
            payload: dict[str, Any] = {"text": msg.content}
            if msg.tool_calls:
                payload["tool_calls"] = [c.to_dict() for c in msg.tool_calls]
            self.trace.emit("assistant_msg", payload)
            if msg.tool_calls:
                if not self._execute_calls(msg.tool_calls):
                    return  # aborted (backend outage)
            else:
                self._interpret_text_turn(msg)
        raise SessionError("drive loop did not terminate")

    def _execute_calls(self, calls: tuple[ToolCall, ...]) -> bool:
        motion_seen = False
        for call in calls:
            if call.name in MOTION_TOOLS and motion_seen:
                result = ToolResult(
                    call_id=call.id, ok=False,
                    failure_reason="only one movement tool call per turn; "
                                   "observe feedback first",
                    failure_kind="state")
                self.trace.emit("tool_call", call.to_dict())
                self.trace.emit("tool_result", result.to_dict())
                self.history.append(ChatMessage(role="tool",
                                                content=result.content(),
                                                tool_call_id=call.id))
            else:
                result = self._run_call(call)
                if result is None:
                    return False
            if call.name in MOTION_TOOLS:
                motion_seen = True
            self._note_result(call, result)
        return True

    def _run_call(self, call: ToolCall,
                  to_history: bool = True) -> Optional[ToolResult]:
        self.trace.emit("tool_call", call.to_dict())
        before = self.executor.graph
        try:
            result = self.executor.execute(call)
        except BackendUnavailable as exc:
            result = ToolResult(call_id=call.id, ok=False,
                                failure_reason=str(exc),
                                failure_kind="backend")
            self.trace.emit("tool_result", result.to_dict())
            self._abort_excluded(str(exc))
            return None
        except (UnknownTool, ArgSchemaError) as exc:
            result = ToolResult(call_id=call.id, ok=False,
                                failure_reason=str(exc), failure_kind="args")
        self.trace.emit("tool_result", result.to_dict())
        if to_history:
            self.history.append(ChatMessage(role="tool",
                                            content=result.content(),
                                            tool_call_id=call.id))
        after = self.executor.graph
        if after is not before:
            delta = diff(before, after)
            if not delta.is_empty():
                self.trace.emit("graph_delta", _delta_payload(delta))
        return result

    def _note_result(self, call: ToolCall, result: ToolResult) -> None:
        step = _step_of(call.id)
        if result.ok:
            if step is not None:
                self.steps_done.add(step)
                self.failures[step] = 0
            if call.name == PLAN_TOOL:
                self._adopt_plan(result.payload)
        else:
            self._last_failure = (step, call, result)

    def _adopt_plan(self, text: Any) -> None:
        try:
            self.plan = parse_plan(str(text))
        except PlanParseError:
            self.plan = None  # executor already guards; belt and braces

    def _interpret_text_turn(self, msg: ChatMessage) -> None:
        if self._declined:
            self._finish(SessionState.FAILED, reason="user declined")
            return
        if self.state is SessionState.PLANNING:
            if self.plan is not None:
                self._transition(SessionState.AWAIT_CONFIRMATION)
                if not self.interactive:
                    self._user("Yes, proceed.",
                               decision={"action": "confirm"})
                    self._transition(SessionState.EXECUTING)
                return
            self._finish(SessionState.FAILED,
                         reason=f"no plan produced: {msg.content}")
            return
        # Executing
        if self._last_failure is not None:
            self._handle_failure()
            return
        if self.plan is not None and len(self.steps_done) >= len(self.plan.steps):
            self._finish(SessionState.DONE)
            return
        self._finish(SessionState.FAILED,
                     reason=f"interaction backend stalled: {msg.content!r}")

    # ------------------------------------------------------------------
    # Failure handling
    # ------------------------------------------------------------------

    def _handle_failure(self) -> None:
        step, call, result = self._last_failure  # type: ignore[misc]
        self._last_failure = None
        if step is None:
            self._finish(SessionState.FAILED,
                         reason=result.failure_reason or "tool failure")
            return
        kind = result.failure_kind
        self.failures[step] = self.failures.get(step, 0) + 1

        if kind in RECOVERABLE_KINDS and self.failures[step] < self.max_retries:
            note = ""
            if kind == "grasp":
                target = self._involved_object(call, result)
                if target is not None and not self._recovery_rescan(target):
                    self._suggest(step, call, result,
                                  "the rescan could not see it")
                    return
                if target is not None:
                    note = f" I re-scanned the {target} first."
            attempt = self._next_attempt(step)
            self._user(f"Retry step {step} (attempt {attempt}).{note}",
                       decision={"action": "retry", "step": step,
                                 "attempt": attempt})
            return

        if kind in RECOVERABLE_KINDS or kind in REPOSITION_KINDS:
            self._suggest(step, call, result)
            return

        # Non-recoverable (state/args/unsupported): record a skip decision
        # and carry on with the rest of the plan.
        self.steps_done.add(step)
        self.failure_note = (f"step {step} skipped: "
                             f"{result.failure_reason}")
        self._user(f"Skip step {step} and continue.",
                   decision={"action": "skip", "step": step,
                             "kind": kind})

    def _suggest(self, step: int, call: ToolCall, result: ToolResult,
                 extra: str = "") -> None:
        involved = self._involved_object(call, result)
        can_reposition = (involved is not None
                          and result.failure_kind in
                          (REPOSITION_KINDS | {"grasp"}))
        suggested = "reposition" if can_reposition else "skip"
        reason = result.failure_reason
        if extra:
            reason = f"{reason} ({extra})"
        text = (f"I could not complete step {step}: {reason}. "
                + (f"Could you reposition the {involved}, or should I skip "
                   f"this step?" if can_reposition
                   else "Should I skip this step?"))
        decision = {"action": "suggest", "step": step,
                    "options": (["skip", "reposition"] if can_reposition
                                else ["skip"]),
                    "suggested": suggested, "object": involved}
        self.history.append(ChatMessage(role="assistant", content=text))
        self.trace.emit("assistant_msg", {"text": text, "decision": decision})
        self.pending_suggestion = {"step": step, "object": involved,
                                   "suggested": suggested}
        self._transition(SessionState.AWAIT_INTERVENTION)
        if not self.interactive:
            self._auto_intervene()

    def _auto_intervene(self) -> None:
        pending = self.pending_suggestion or {}
        step = pending.get("step")
        wants = self.intervention_policy
        if (wants == "reposition" and pending.get("object")
                and step not in self.repositioned):
            self.intervene("reposition")
        else:
            self.intervene("skip")

    def _next_attempt(self, step: Optional[int]) -> int:
        if step is None:
            return 1
        self.retry_seq[step] = self.retry_seq.get(step, 0) + 1
        return self.retry_seq[step]

    @staticmethod
    def _involved_object(call: ToolCall,
                         result: ToolResult) -> Optional[str]:
        if call.name == PICK_TOOL:
            name = call.args.get("object_name")
            return name if isinstance(name, str) else None
        if call.name == SCAN_TOOL:
            payload = result.payload if isinstance(result.payload, dict) else {}
            hidden = payload.get("not_visible") or payload.get("unlocatable")
            if hidden:
                return str(hidden[0])
            targets = call.args.get("targets_to_scan")
            if isinstance(targets, list) and len(targets) == 1:
                return str(targets[0])
        return None

    # ------------------------------------------------------------------
    # Recovery actions
    # ------------------------------------------------------------------

    def _recovery_rescan(self, target: str) -> bool:
        """Refresh the target's coordinates outside the plan; recorded in
        the trace but summarized (not replayed verbatim) in chat history."""
        self._recover_seq += 1
        call_id = f"recover-{self._recover_seq}"
        if self.mode == "apriltag":
            call = ToolCall(id=call_id, name=TAG_TOOL, args={})
            result = self._run_call(call, to_history=False)
            if result is None or not result.ok:
                return False
            return self._bind_tag(target, result.payload)
        call = ToolCall(id=call_id, name=SCAN_TOOL,
                        args={"targets_to_scan": [target]})
        result = self._run_call(call, to_history=False)
        return bool(result is not None and result.ok)

    def _bind_tag(self, target: str, payload: Any) -> bool:
        if target not in self.graph:
            return False
        match = _TAG_ID_RE.search(self.graph.node(target).things_to_know)
        if match is None:
            return False
        key = f"tag_{match.group(1)}"
        if not isinstance(payload, dict) or key not in payload:
            return False
        before = self.executor.graph
        self.executor.graph = before.set_coordinates(target, payload[key])
        delta = diff(before, self.executor.graph)
        if not delta.is_empty():
            self.trace.emit("graph_delta", _delta_payload(delta))
        return True

    def _reposition(self, name: str) -> list[float]:
        """Stand-in for the human physically moving an object: lift it (and
        anything stacked on it) to the most open patch of table."""
        world = self.world
        spot = self._clear_spot(name)
        _apply_reposition(self.executor,
                          {"object": name, "position": spot})
        world.check_invariants()
        return spot

    def _clear_spot(self, name: str) -> list[float]:
        world = self.world
        moving = _reposition_movers(world, name)
        obstacles = [world.obj(o).xy for o in world.support
                     if o not in moving]
        (x0, x1), (y0, y1) = world.table_extent
        inset = 0.06
        best: Optional[tuple[float, float, float]] = None
        for i in range(21):
            for j in range(21):
                x = x0 + inset + (x1 - x0 - 2 * inset) * i / 20
                y = y0 + inset + (y1 - y0 - 2 * inset) * j / 20
                clearance = min(
                    (float(np.hypot(x - ox, y - oy))
                     for ox, oy in obstacles), default=1e9)
                if best is None or clearance > best[0]:
                    best = (clearance, x, y)
        assert best is not None
        target = world.obj(name)
        return [best[1], best[2],
                world.table_z + target.height / 2]

    def _rescan_after_reposition(self, target: str,
                                 step: Optional[int]) -> None:
        self._recovery_rescan(target)

    # ------------------------------------------------------------------
    # Bookkeeping
    # ------------------------------------------------------------------

    def _user(self, text: str, decision: Optional[dict[str, Any]] = None) -> None:
        self.history.append(ChatMessage(role="user", content=text))
        payload: dict[str, Any] = {"text": text}
        if decision:
            payload["decision"] = decision
        self.trace.emit("user_msg", payload)

    def _transition(self, to: SessionState, **extra: Any) -> None:
        if to is self.state:
            return
        payload = {"from": self.state.value, "to": to.value, **extra}
        self.state = to
        self.trace.emit("state_change", payload)

    def _finish(self, to: SessionState, reason: str = "") -> None:
        if reason:
            self.failure_note = self.failure_note or reason
        if to is SessionState.DONE:
            self.world.check_invariants()
        self._transition(to, **({"reason": reason} if reason else {}))

    def _abort_excluded(self, reason: str) -> None:
        self.excluded = True
        self.failure_note = reason
        self._transition(SessionState.FAILED, excluded=True, reason=reason)


def _step_of(call_id: str) -> Optional[int]:
    match = _STEP_ID_RE.match(call_id or "")
    return int(match.group(1)) if match else None
