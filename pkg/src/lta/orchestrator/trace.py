"""Append-only session traces: newline-delimited JSON events with a logical
timestamp, plus the linter that enforces the recorded-behaviour invariants
and a replayer that re-executes a trace against a fresh world.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Any, Iterable, Optional

from ..messages import ToolCall
from ..planning.rules import MOTION_TOOLS, PERCEPTION_TOOLS, PICK_TOOL
from ..scene_graph import SceneGraph
from .tools import ToolExecutor

EVENT_KINDS = ("user_msg", "assistant_msg", "tool_call", "tool_result",
               "state_change", "graph_delta")

_CONFIRM_RE = re.compile(r"^\s*(yes|confirm|confirmed|proceed|go ahead)\b",
                         re.IGNORECASE)


def _plain(value: Any) -> Any:
    """Rewrite tuples as lists so events serialize canonically."""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


class TraceRecorder:
    """Collects events in order; ``ts`` is a logical counter, not wall time,
    so reruns of the same scenario produce byte-identical traces."""

    def __init__(self):
        self.events: list[dict[str, Any]] = []

    def emit(self, kind: str, payload: dict[str, Any]) -> dict[str, Any]:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        event = {"ts": len(self.events), "kind": kind,
                 "payload": _plain(payload)}
        self.events.append(event)
        return event

    def to_ndjson(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n"
                       for e in self.events)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_ndjson())


def load_trace(path: str | Path) -> list[dict[str, Any]]:
    events = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            events.append(json.loads(line))
    return events


# ----------------------------------------------------------------------
# Linter
# ----------------------------------------------------------------------

def lint_trace(events: Iterable[dict[str, Any]]) -> list[str]:
    """Check the recorded-behaviour invariants; returns human-readable
    problems (empty list = clean trace)."""
    events = list(events)
    problems: list[str] = []

    last_ts = -1
    for event in events:
        ts = event.get("ts")
        if not isinstance(ts, int) or ts <= last_ts:
            problems.append(f"ts not strictly increasing at {event}")
            break
        last_ts = ts
        if event.get("kind") not in EVENT_KINDS:
            problems.append(f"unknown event kind {event.get('kind')!r}")

    calls: dict[str, int] = {}
    results: dict[str, int] = {}
    for event in events:
        payload = event.get("payload", {})
        if event.get("kind") == "tool_call":
            call_id = payload.get("id")
            if call_id in calls:
                problems.append(f"duplicate tool_call id {call_id!r}")
            calls[call_id] = event["ts"]
        elif event.get("kind") == "tool_result":
            call_id = payload.get("call_id")
            if call_id in results:
                problems.append(f"duplicate tool_result for {call_id!r}")
            results[call_id] = event["ts"]
            if call_id not in calls:
                problems.append(f"result for unknown call {call_id!r}")
            elif calls[call_id] >= event["ts"]:
                problems.append(f"result precedes call for {call_id!r}")
    for call_id in calls:
        if call_id not in results:
            problems.append(f"tool_call {call_id!r} has no result")

    # Movement serialization: a result must land between two motion calls.
    awaiting_feedback = False
    for event in events:
        if event["kind"] == "tool_call":
            name = event["payload"].get("name")
            if name in MOTION_TOOLS:
                if awaiting_feedback:
                    problems.append(
                        f"motion call at ts={event['ts']} before the "
                        f"previous motion call's feedback")
                awaiting_feedback = True
        elif event["kind"] == "tool_result":
            awaiting_feedback = False

    # Perception exclusion between a successful pick and the next place.
    call_names: dict[str, str] = {}
    holding = False
    for event in events:
        payload = event.get("payload", {})
        if event["kind"] == "tool_call":
            name = payload.get("name")
            call_names[payload.get("id")] = name
            if holding and name in PERCEPTION_TOOLS:
                problems.append(
                    f"perception call {name} at ts={event['ts']} between "
                    f"pick and place")
        elif event["kind"] == "tool_result":
            name = call_names.get(payload.get("call_id"))
            if name == PICK_TOOL and payload.get("ok"):
                holding = True
            elif name == "place_object" and payload.get("ok"):
                holding = False

    # Confirmation gate before the first motion call.
    confirmed_at: Optional[int] = None
    for event in events:
        payload = event.get("payload", {})
        if event["kind"] == "user_msg":
            decision = payload.get("decision") or {}
            if (decision.get("action") == "confirm"
                    or _CONFIRM_RE.match(payload.get("text") or "")):
                if confirmed_at is None:
                    confirmed_at = event["ts"]
        elif (event["kind"] == "tool_call"
                and payload.get("name") in MOTION_TOOLS):
            if confirmed_at is None or confirmed_at > event["ts"]:
                problems.append(
                    f"motion call at ts={event['ts']} before any "
                    f"confirmation")
            break

    # Every failure is followed by a recorded handling decision.
    pending_failure: Optional[int] = None
    for event in events:
        payload = event.get("payload", {})
        if event["kind"] == "tool_result" and not payload.get("ok", True):
            if pending_failure is None:
                pending_failure = event["ts"]
        elif payload.get("decision"):
            pending_failure = None
        elif (event["kind"] == "state_change"
                and payload.get("to") in ("Failed",)):
            pending_failure = None  # aborting is itself the decision
    if pending_failure is not None:
        problems.append(
            f"failure at ts={pending_failure} has no handling decision")

    return problems


# ----------------------------------------------------------------------
# Replay
# ----------------------------------------------------------------------

class ReplayMismatch(Exception):
    pass


def replay_trace(events: Iterable[dict[str, Any]],
                 executor: ToolExecutor) -> ToolExecutor:
    """Re-execute every recorded tool call (and recorded repositioning
    interventions) against a fresh executor built from the scenario's
    initial state. Raises ReplayMismatch when any outcome diverges from
    the recording; on success the executor holds the reconstructed final
    world and graph."""
    for event in events:
        payload = event.get("payload", {})
        if event.get("kind") == "user_msg":
            decision = payload.get("decision") or {}
            if decision.get("action") == "reposition":
                _apply_reposition(executor, decision)
        if event.get("kind") != "tool_call":
            continue
        call = ToolCall(id=payload["id"], name=payload["name"],
                        args=dict(payload.get("args") or {}))
        result = executor.execute(call)
        recorded = _find_result(events, payload["id"])
        if recorded is None:
            raise ReplayMismatch(f"no recorded result for {payload['id']!r}")
        if bool(recorded.get("ok")) != result.ok:
            raise ReplayMismatch(
                f"{payload['id']!r}: recorded ok={recorded.get('ok')} but "
                f"replay gave ok={result.ok} ({result.failure_reason})")
        if result.ok and _plain(recorded.get("payload")) != _plain(result.payload):
            raise ReplayMismatch(
                f"{payload['id']!r}: payload diverged during replay")
    return executor


def _find_result(events: Iterable[dict[str, Any]],
                 call_id: str) -> Optional[dict[str, Any]]:
    for event in events:
        if (event.get("kind") == "tool_result"
                and event.get("payload", {}).get("call_id") == call_id):
            return event["payload"]
    return None


def _reposition_movers(world, name: str) -> set[str]:
    """The object plus anything stored inside it; things merely resting on
    top are left behind when a person extracts the object."""
    movers = {name}
    for child in world.supported_by(name):
        if world.support_kind.get(child) != "in":
            continue
        stack = [child]
        while stack:
            obj_name = stack.pop()
            if obj_name not in movers:
                movers.add(obj_name)
                stack.extend(world.supported_by(obj_name))
    return movers


def _apply_reposition(executor: ToolExecutor, decision: dict[str, Any]) -> None:
    import numpy as np

    from ..sim.world import TABLE

    name = decision.get("object")
    position = decision.get("position")
    world = executor.world
    if name not in world.objects or name not in world.support or not position:
        raise ReplayMismatch(f"cannot replay reposition of {name!r}")
    moved = world.objects[name]
    old_support = world.support[name]
    old_kind = world.support_kind[name]
    movers = _reposition_movers(world, name)

    # Whatever rested on top stays behind and settles by one object height
    # onto the vacated support surface.
    drop = np.array([0.0, 0.0, moved.height])
    for child in world.supported_by(name):
        if world.support_kind.get(child) != "on":
            continue
        world.support[child] = old_support
        world.support_kind[child] = old_kind
        stack, seen = [child], {child}
        while stack:
            obj_name = stack.pop()
            world.objects[obj_name].position = (
                world.objects[obj_name].position - drop)
            for nxt in world.supported_by(obj_name):
                if nxt not in seen and nxt not in movers:
                    seen.add(nxt)
                    stack.append(nxt)

    delta = np.asarray(position, dtype=float) - moved.position
    for obj_name in movers:
        world.objects[obj_name].position = (
            world.objects[obj_name].position + delta)
    world.support[name] = TABLE
    world.support_kind[name] = "on"
