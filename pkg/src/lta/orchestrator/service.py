"""HTTP surface for interactive sessions.

One process serves one scenario; each created session instantiates the next
trial of that scenario (trial index = creation order) so layouts stay
deterministic. All mutating routes on a session are serialized through a
per-session lock, so concurrent clients see a strict FIFO order. Readers
(trace, graph, world, event stream) never take the lock.

Routes (also documented in the README):

    POST /sessions                      {"trial": int?} -> session summary
    GET  /sessions                      -> list of session summaries
    GET  /sessions/{sid}                -> session summary (state, plan, report)
    POST /sessions/{sid}/message        {"text": str}
    POST /sessions/{sid}/confirm        {"accept": bool}
    POST /sessions/{sid}/intervention   {"action": "skip"|"reposition"|"retry"|"abort"}
    GET  /sessions/{sid}/trace?after=N  -> {"events": [...], "next": int, "state": str}
    GET  /sessions/{sid}/graph          -> scene graph JSON object
    GET  /sessions/{sid}/world          -> world snapshot JSON object
    GET  /sessions/{sid}/events?after=N&timeout=S
         -> text/event-stream; each message is one JSON object, either
            {"seq": n, "event": <trace event>} or
            {"snapshot": {"state": ..., "graph": ..., "world": ...}}

Errors are JSON: {"error": "SessionNotFound" | "InvalidTransition" |
"BadRequest", "detail": str} with status 404, 409 or 422. If the app is
created with a static token, every /sessions route requires the header
"Authorization: Bearer <token>"; there is no other auth.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
import threading
import time
from typing import Any, Iterator, Optional

from fastapi import Depends, FastAPI, Header, Request
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel

from ..eval.scenario import Scenario, build_trial, load_scenario
from ..eval.suite import make_backends
from ..planning.plan import render_plan
from .session import Session, SessionError, SessionState

_TERMINAL = (SessionState.DONE, SessionState.FAILED)


class SessionNotFound(Exception):
    """Base class for addressing errors: missing session or a command that
    the session's current state cannot accept."""


class InvalidTransition(SessionNotFound):
    pass


class MessageBody(BaseModel):
    text: str


class ConfirmBody(BaseModel):
    accept: bool = True


class InterventionBody(BaseModel):
    action: str


class CreateBody(BaseModel):
    trial: Optional[int] = None


def _shape_payload(shape) -> dict[str, Any]:
    payload = dataclasses.asdict(shape)
    payload["kind"] = type(shape).__name__.lower()
    return payload


def world_snapshot(world) -> dict[str, Any]:
    objects = {}
    for name, obj in world.objects.items():
        objects[name] = {
            "position": [float(v) for v in obj.position],
            "shape": _shape_payload(obj.shape),
            "color": obj.color,
            "support": world.support.get(name),
            "support_kind": world.support_kind.get(name),
            "graspable": obj.graspable,
            "container": obj.container,
            "is_lid_of": obj.is_lid_of,
            "tag_id": obj.tag_id,
        }
    return {
        "table_z": world.table_z,
        "table_extent": [list(side) for side in world.table_extent],
        "gripper": world.gripper,
        "objects": objects,
    }


class ManagedSession:
    """A live session plus the lock that serializes writes to it."""

    def __init__(self, session: Session):
        self.session = session
        self.lock = threading.Lock()

    def summary(self) -> dict[str, Any]:
        session = self.session
        return {
            "session_id": session.id,
            "state": session.state.value,
            "plan": (render_plan(session.plan)
                     if session.plan is not None else None),
            "report": session.report(),
        }


class SessionManager:
    def __init__(self, scenario: Scenario, interactive: bool = True):
        self.scenario = scenario
        self.interactive = interactive
        self._sessions: dict[str, ManagedSession] = {}
        self._counter = itertools.count()
        self._lock = threading.Lock()

    def create(self, trial: Optional[int] = None) -> ManagedSession:
        with self._lock:
            index = next(self._counter)
        if trial is None:
            trial = index
        world, graph = build_trial(self.scenario, trial)
        vlm, planner, chat = make_backends(self.scenario, graph, world,
                                           "scripted")
        session = Session(
            world, graph, vlm=vlm, planner=planner, chat=chat,
            mode=self.scenario.mode, interactive=self.interactive,
            intervention_policy=self.scenario.intervention_policy,
            session_id=f"{self.scenario.id}-s{index}")
        managed = ManagedSession(session)
        with self._lock:
            self._sessions[session.id] = managed
        return managed

    def get(self, session_id: str) -> ManagedSession:
        managed = self._sessions.get(session_id)
        if managed is None:
            raise SessionNotFound(f"no session {session_id!r}")
        return managed

    def all(self) -> list[ManagedSession]:
        return list(self._sessions.values())


def _snapshot_message(session: Session) -> str:
    body = {"snapshot": {
        "state": session.state.value,
        "graph": json.loads(session.executor.graph.to_json()),
        "world": world_snapshot(session.executor.world),
    }}
    return json.dumps(body, sort_keys=True)


def _event_stream(managed: ManagedSession, after: int,
                  timeout: Optional[float]) -> Iterator[str]:
    session = managed.session
    cursor = after
    deadline = None if timeout is None else time.monotonic() + timeout
    last_state = None
    while True:
        events = session.trace.events
        advanced = cursor < len(events)
        while cursor < len(events):
            body = json.dumps({"seq": cursor, "event": events[cursor]},
                              sort_keys=True)
            yield f"data: {body}\n\n"
            cursor += 1
        state = session.state
        if advanced or state is not last_state:
            yield f"data: {_snapshot_message(session)}\n\n"
            last_state = state
        if state in _TERMINAL and cursor >= len(session.trace.events):
            return
        if deadline is not None and time.monotonic() >= deadline:
            return
        time.sleep(0.02)


def create_app(scenario: Scenario | str, *, interactive: bool = True,
               token: Optional[str] = None) -> FastAPI:
    if not isinstance(scenario, Scenario):
        scenario = load_scenario(scenario)
    app = FastAPI(title="lta session service")
    manager = SessionManager(scenario, interactive=interactive)
    app.state.manager = manager
    app.state.token = token

    def require_auth(authorization: Optional[str] = Header(None)) -> None:
        if token is None:
            return
        if authorization != f"Bearer {token}":
            raise SessionNotFound("missing or invalid bearer token")

    auth = Depends(require_auth)

    @app.exception_handler(SessionNotFound)
    def _not_found(request: Request, exc: SessionNotFound) -> JSONResponse:
        if isinstance(exc, InvalidTransition):
            return JSONResponse(status_code=409, content={
                "error": "InvalidTransition", "detail": str(exc)})
        return JSONResponse(status_code=404, content={
            "error": "SessionNotFound", "detail": str(exc)})

    @app.exception_handler(SessionError)
    def _session_error(request: Request, exc: SessionError) -> JSONResponse:
        return JSONResponse(status_code=409, content={
            "error": "InvalidTransition", "detail": str(exc)})

    @app.post("/sessions", status_code=201, dependencies=[auth])
    def create_session(body: Optional[CreateBody] = None) -> dict[str, Any]:
        trial = body.trial if body is not None else None
        managed = manager.create(trial)
        return managed.summary()

    @app.get("/sessions", dependencies=[auth])
    def list_sessions() -> list[dict[str, Any]]:
        return [m.summary() for m in manager.all()]

    @app.get("/sessions/{sid}", dependencies=[auth])
    def get_session(sid: str) -> dict[str, Any]:
        return manager.get(sid).summary()

    @app.post("/sessions/{sid}/message", dependencies=[auth])
    def post_message(sid: str, body: MessageBody) -> dict[str, Any]:
        managed = manager.get(sid)
        with managed.lock:
            if managed.session.state is not SessionState.AWAIT_REQUEST:
                raise InvalidTransition(
                    f"session is {managed.session.state.value}, "
                    f"not awaiting a request")
            managed.session.submit_request(body.text)
        return managed.summary()

    @app.post("/sessions/{sid}/confirm", dependencies=[auth])
    def post_confirm(sid: str, body: Optional[ConfirmBody] = None) -> dict[str, Any]:
        managed = manager.get(sid)
        accept = body.accept if body is not None else True
        with managed.lock:
            if managed.session.state is not SessionState.AWAIT_CONFIRMATION:
                raise InvalidTransition(
                    f"session is {managed.session.state.value}, "
                    f"not awaiting confirmation")
            managed.session.confirm(accept)
        return managed.summary()

    @app.post("/sessions/{sid}/intervention", dependencies=[auth])
    def post_intervention(sid: str, body: InterventionBody) -> dict[str, Any]:
        managed = manager.get(sid)
        with managed.lock:
            if managed.session.state is not SessionState.AWAIT_INTERVENTION:
                raise InvalidTransition(
                    f"session is {managed.session.state.value}, "
                    f"not awaiting an intervention")
            managed.session.intervene(body.action)
        return managed.summary()

    @app.get("/sessions/{sid}/trace", dependencies=[auth])
    def get_trace(sid: str, after: int = 0) -> dict[str, Any]:
        managed = manager.get(sid)
        events = managed.session.trace.events
        return {"events": events[after:], "next": len(events),
                "state": managed.session.state.value}

    @app.get("/sessions/{sid}/graph", dependencies=[auth])
    def get_graph(sid: str) -> dict[str, Any]:
        managed = manager.get(sid)
        return json.loads(managed.session.executor.graph.to_json())

    @app.get("/sessions/{sid}/world", dependencies=[auth])
    def get_world(sid: str) -> dict[str, Any]:
        managed = manager.get(sid)
        return world_snapshot(managed.session.executor.world)

    @app.get("/sessions/{sid}/events", dependencies=[auth])
    def get_events(sid: str, after: int = 0,
                   timeout: Optional[float] = None) -> StreamingResponse:
        managed = manager.get(sid)
        return StreamingResponse(_event_stream(managed, after, timeout),
                                 media_type="text/event-stream")

    return app


def serve(scenario_path: str, port: int = 8080, host: str = "127.0.0.1",
          token: Optional[str] = None) -> None:
    import uvicorn

    uvicorn.run(create_app(scenario_path, token=token), host=host, port=port)
