"""Tool registry and executor: every callable surface the interaction model
sees, bound to the simulator, the perception pipeline and the scene graph.

Failures come back as ToolResult values (never exceptions) so the session
loop can apply its recovery policy; only protocol-level misuse — an unknown
tool or malformed arguments — raises.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from ..backends.vlm import ObjectNotVisible
from ..backends import wire
from ..messages import (BackendUnavailable, MalformedResponse, ToolCall,
                        ToolResult, UnsupportedPrompt)
from ..perception import pipeline
from ..perception.types import DepthImage
from ..scene_graph import SceneGraph, SceneGraphError
from ..sim import render, world as sim_world
from ..planning.plan import (Placeholder, PlanParseError, parse_plan,
                             placeholder_from_str)
from ..planning.rules import (ADD_TOOL, EDIT_TOOL, PICK_TOOL, PLACE_TOOL,
                              PLAN_TOOL, POINT_TOOL, SCAN_TOOL, TAG_TOOL,
                              VQA_TOOL)


class UnknownTool(Exception):
    pass


class ArgSchemaError(Exception):
    pass


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    params: tuple[str, ...]
    required: tuple[str, ...]


_ALL_SPECS = {
    PICK_TOOL: ToolSpec(
        name=PICK_TOOL,
        description=("Pick up the named object. The name must match a scene "
                     "graph node whose coordinates are available."),
        params=("object_name",), required=("object_name",)),
    PLACE_TOOL: ToolSpec(
        name=PLACE_TOOL,
        description=("Place the object in hand at the named position. The "
                     "name must match a scene graph node whose coordinates "
                     "are available."),
        params=("place_position_name",), required=("place_position_name",)),
    VQA_TOOL: ToolSpec(
        name=VQA_TOOL,
        description=("Ask the vision model a single free-form question about "
                     "the workspace; no conversation history is kept."),
        params=("query_to_vlm",), required=("query_to_vlm",)),
    SCAN_TOOL: ToolSpec(
        name=SCAN_TOOL,
        description=("Scan the listed objects and write their 3D coordinates "
                     "into the scene graph. Needs a clear camera view: do "
                     "not call between pick and place. Hidden objects "
                     "cannot be scanned."),
        params=("targets_to_scan",), required=("targets_to_scan",)),
    POINT_TOOL: ToolSpec(
        name=POINT_TOOL,
        description=("Ask the vision model for one [x, y, z] point matching "
                     "a short prompt (top view). The result is returned, "
                     "not stored: record it in the scene graph yourself. Do "
                     "not call between pick and place."),
        params=("prompt_to_vlm",), required=("prompt_to_vlm",)),
    TAG_TOOL: ToolSpec(
        name=TAG_TOOL,
        description=("Report the id and [x, y, z] position of every fiducial "
                     "tag visible in the top-down view; covered tags are "
                     "not reported."),
        params=("trigger",), required=()),
    ADD_TOOL: ToolSpec(
        name=ADD_TOOL,
        description="Add a new node to the scene graph.",
        params=("object_name", "affordance", "position_in_cartesian_space",
                "things_to_know", "coordinates", "contains"),
        required=("object_name",)),
    EDIT_TOOL: ToolSpec(
        name=EDIT_TOOL,
        description="Edit one attribute of an existing scene graph node.",
        params=("node_name", "attribute_name", "value"),
        required=("node_name", "attribute_name")),
    PLAN_TOOL: ToolSpec(
        name=PLAN_TOOL,
        description=("Hand the user request to the planning model and "
                     "receive a numbered tool-call plan."),
        params=("request_from_user",), required=("request_from_user",)),
}

_VLM_ONLY = (VQA_TOOL, SCAN_TOOL, POINT_TOOL)


def register_tools(mode: str = "vlm") -> dict[str, ToolSpec]:
    """Tool set for a session. ``vlm`` is the default grounding route;
    ``apriltag`` swaps every vision-model tool for the tag reader."""
    if mode not in ("vlm", "apriltag"):
        raise ValueError(f"unknown tool mode {mode!r}")
    names = [PICK_TOOL, PLACE_TOOL, VQA_TOOL, SCAN_TOOL, POINT_TOOL,
             ADD_TOOL, EDIT_TOOL, PLAN_TOOL]
    if mode == "apriltag":
        names = [n for n in names if n not in _VLM_ONLY]
        names.insert(2, TAG_TOOL)
    return {name: _ALL_SPECS[name] for name in names}


def tool_descriptions(mode: str = "vlm") -> dict[str, str]:
    return {name: spec.description
            for name, spec in register_tools(mode).items()}


# ----------------------------------------------------------------------
# Failure classification: drives the session's recovery policy.
# ----------------------------------------------------------------------

# kinds: grasp | placement | not_visible | blocked | capture | perception |
#        state | args | unsupported
RECOVERABLE_KINDS = frozenset({"grasp", "placement", "capture", "perception"})
REPOSITION_KINDS = frozenset({"not_visible", "blocked"})

_STEP_ID_RE = re.compile(r"^step-(\d+)(?:-r\d+)?$")


def _fail(call: ToolCall, reason: str, kind: str,
          payload: Any = None) -> ToolResult:
    return ToolResult(call_id=call.id, ok=False, payload=payload,
                      failure_reason=reason, failure_kind=kind)


def _ok(call: ToolCall, payload: Any) -> ToolResult:
    return ToolResult(call_id=call.id, ok=True, payload=payload)


class ToolExecutor:
    """Binds the registered tools to one session's world and graph.

    The graph attribute is the live snapshot; every successful graph
    mutation replaces it (snapshots themselves are immutable values).
    """

    def __init__(self, world: sim_world.WorldState, graph: SceneGraph,
                 vlm=None, planner: Optional[Callable[[str], str]] = None,
                 mode: str = "vlm",
                 perception_config: pipeline.PerceptionConfig | None = None):
        self.world = world
        self.graph = graph
        self.vlm = vlm
        self.planner = planner
        self.mode = mode
        self.registry = register_tools(mode)
        self.config = perception_config or pipeline.PerceptionConfig()
        self.step_outputs: dict[int, Any] = {}

    # ------------------------------------------------------------------

    def execute(self, call: ToolCall) -> ToolResult:
        spec = self.registry.get(call.name)
        if spec is None:
            raise UnknownTool(f"no tool named {call.name!r}")
        unknown = set(call.args) - set(spec.params)
        if unknown:
            raise ArgSchemaError(
                f"{call.name} got unexpected arguments {sorted(unknown)}")
        missing = [p for p in spec.required if p not in call.args]
        if missing:
            raise ArgSchemaError(f"{call.name} missing arguments {missing}")

        try:
            args = self._resolve_args(call.args)
        except KeyError as exc:
            return _fail(call, f"unresolved placeholder: {exc.args[0]}",
                         "args")

        handler = {
            PICK_TOOL: self._pick, PLACE_TOOL: self._place,
            VQA_TOOL: self._vqa, SCAN_TOOL: self._scan,
            POINT_TOOL: self._point, TAG_TOOL: self._tags,
            ADD_TOOL: self._add, EDIT_TOOL: self._edit,
            PLAN_TOOL: self._plan,
        }[call.name]
        result = handler(call, args)
        if result.ok:
            match = _STEP_ID_RE.match(call.id or "")
            if match:
                self.step_outputs[int(match.group(1))] = result.payload
        return result

    # ------------------------------------------------------------------
    # Placeholder resolution ($stepK.out[...] referencing earlier outputs)
    # ------------------------------------------------------------------

    def _resolve_args(self, args: dict[str, Any]) -> dict[str, Any]:
        def resolve(value: Any) -> Any:
            if isinstance(value, Placeholder):
                return self._lookup(value)
            if isinstance(value, str):
                ref = placeholder_from_str(value)
                if ref is None:
                    return value
                return self._lookup(ref)
            if isinstance(value, list):
                return [resolve(v) for v in value]
            return value

        return {k: resolve(v) for k, v in args.items()}

    def _lookup(self, ref: Placeholder) -> Any:
        if ref.step not in self.step_outputs:
            raise KeyError(f"${{step{ref.step}}} has no recorded output")
        value = self.step_outputs[ref.step]
        for part in ref.path:
            if isinstance(value, dict) and part in value:
                value = value[part]
            else:
                raise KeyError(f"step {ref.step} output has no field "
                               f"{part!r}")
        return value

    # ------------------------------------------------------------------
    # Motion
    # ------------------------------------------------------------------

    def _node_point(self, name: str) -> Optional[list[float]]:
        if name not in self.graph:
            return None
        coords = self.graph.node(name).coordinates
        if len(coords) != 3:
            return None
        return [float(c) for c in coords]

    def _pick(self, call: ToolCall, args: dict[str, Any]) -> ToolResult:
        name = str(args["object_name"])
        point = self._node_point(name)
        if point is None:
            return _fail(call, f"no coordinates for {name!r} in the scene "
                               f"graph; scan it first", "args")
        try:
            self.world.pick(name, point)
        except sim_world.GraspMissedError as exc:
            return _fail(call, f"grasp missed: {exc}", "grasp")
        except sim_world.ObjectCoveredError as exc:
            return _fail(call, str(exc), "blocked")
        except sim_world.ObjectInsideClosedContainerError as exc:
            return _fail(call, str(exc), "blocked")
        except (sim_world.GripperOccupiedError,
                sim_world.NotGraspableError) as exc:
            return _fail(call, str(exc), "state")
        except sim_world.UnknownObjectError as exc:
            return _fail(call, str(exc), "args")
        return _ok(call, {"picked": name})

    def _place(self, call: ToolCall, args: dict[str, Any]) -> ToolResult:
        name = str(args["place_position_name"])
        held = self.world.gripper
        point = self._node_point(name)
        if point is None:
            return _fail(call, f"no coordinates for {name!r} in the scene "
                               f"graph", "args")
        try:
            self.world.place(point)
        except sim_world.GripperEmptyError as exc:
            return _fail(call, str(exc), "state")
        except sim_world.OutOfWorkspaceError as exc:
            return _fail(call, str(exc), "args")
        except sim_world.PlacementCollisionError as exc:
            return _fail(call, str(exc), "placement")
        return _ok(call, {"placed": held, "at": name})

    # ------------------------------------------------------------------
    # Perception
    # ------------------------------------------------------------------

    def _capture(self, call: ToolCall) -> tuple[Optional[render.CaptureResult],
                                                Optional[ToolResult]]:
        try:
            return render.capture(self.world), None
        except sim_world.GripperOccupiedDuringCaptureError as exc:
            return None, _fail(call, str(exc), "state")
        except render.CaptureDropoutError as exc:
            return None, _fail(call, str(exc), "capture")

    def _scan(self, call: ToolCall, args: dict[str, Any]) -> ToolResult:
        targets = args["targets_to_scan"]
        if isinstance(targets, str):
            targets = [targets]
        if (not isinstance(targets, list) or not targets
                or not all(isinstance(t, str) for t in targets)):
            raise ArgSchemaError("targets_to_scan must be a non-empty list "
                                 "of object names")
        missing = [t for t in targets if t not in self.graph]
        if missing:
            return _fail(call, f"not in the scene graph: {missing}", "args")

        cap, failure = self._capture(call)
        if failure is not None:
            return failure
        try:
            hidden = [t for t in targets
                      if not wire.parse_presence(self.vlm.presence(t, cap))]
            confirmed = [t for t in targets if t not in hidden]
            boxes = []
            if confirmed:
                boxes = wire.parse_bboxes(self.vlm.bboxes(confirmed, cap))
        except BackendUnavailable:
            raise
        except MalformedResponse as exc:
            return _fail(call, f"grounding reply unusable: {exc}",
                         "perception")

        views = [(v.depth, v.pose) for v in cap.views]
        offset = self.world.localization_offset("scan")
        updated: dict[str, list[float]] = {}
        lost: list[str] = []
        for name in confirmed:
            try:
                box = wire.select_bbox(boxes, name)
                centre = pipeline.locate(box, views, self.world.table_z,
                                         self.config)
            except (wire.MissingLabel, pipeline.EmptyCloudError,
                    pipeline.NoMatchError):
                lost.append(name)
                continue
            if offset is not None:
                centre = centre + offset
            updated[name] = [float(c) for c in centre]

        for name, coords in updated.items():
            self.graph = self.graph.set_coordinates(name, coords)
        if hidden or lost:
            wording = []
            if hidden:
                wording.append(f"object not visible: {sorted(hidden)}")
            if lost:
                wording.append(f"could not localize: {sorted(lost)}")
            kind = "not_visible" if hidden else "perception"
            return _fail(call, "; ".join(wording), kind,
                         payload={"not_visible": sorted(hidden),
                                  "unlocatable": sorted(lost),
                                  "updated": updated})
        return _ok(call, {"updated": updated})

    def _point(self, call: ToolCall, args: dict[str, Any]) -> ToolResult:
        prompt = str(args["prompt_to_vlm"])
        cap, failure = self._capture(call)
        if failure is not None:
            return failure
        try:
            reply = self.vlm.point(prompt, cap)
            u, v = wire.parse_point(reply)
        except ObjectNotVisible as exc:
            return _fail(call, f"object not visible: {exc}", "not_visible")
        except UnsupportedPrompt as exc:
            return _fail(call, f"the vision model cannot answer: {exc}",
                         "unsupported")
        except BackendUnavailable:
            raise
        except MalformedResponse as exc:
            return _fail(call, f"grounding reply unusable: {exc}",
                         "perception")

        top = cap.views[0]
        depth = _sample_depth(top.depth, u, v)
        if depth is None:
            return _fail(call, f"no depth at pixel ({u:.1f}, {v:.1f})",
                         "perception")
        point = pipeline.deproject((u, v), depth, top.depth.intrinsics,
                                   top.pose)
        offset = self.world.localization_offset("point")
        if offset is not None:
            point = point + offset
        return _ok(call, [float(c) for c in point])

    def _vqa(self, call: ToolCall, args: dict[str, Any]) -> ToolResult:
        question = str(args["query_to_vlm"])
        cap, failure = self._capture(call)
        if failure is not None:
            return failure
        try:
            answer = self.vlm.vqa(question, cap)
        except UnsupportedPrompt as exc:
            return _fail(call, f"the vision model cannot answer: {exc}",
                         "unsupported")
        except BackendUnavailable:
            raise
        return _ok(call, answer)

    def _tags(self, call: ToolCall, args: dict[str, Any]) -> ToolResult:
        try:
            readings = self.world.read_apriltags()
        except sim_world.GripperOccupiedError as exc:
            return _fail(call, str(exc), "state")
        payload = {f"tag_{tag_id}": [float(c) for c in coords]
                   for tag_id, coords in readings}
        return _ok(call, payload)

    # ------------------------------------------------------------------
    # Scene graph
    # ------------------------------------------------------------------

    def _add(self, call: ToolCall, args: dict[str, Any]) -> ToolResult:
        name = str(args["object_name"])
        try:
            graph = self.graph.add_object(
                name,
                affordance=args.get("affordance") or (),
                position_descriptor=args.get("position_in_cartesian_space")
                or "",
                things_to_know=args.get("things_to_know") or "",
                coordinates=args.get("coordinates") or ())
            contains = args.get("contains")
            if contains:
                graph = graph.edit_attribute(name, "contains", contains)
        except SceneGraphError as exc:
            return _fail(call, str(exc), "args")
        self.graph = graph
        return _ok(call, {"added": name})

    def _edit(self, call: ToolCall, args: dict[str, Any]) -> ToolResult:
        name = str(args["node_name"])
        attribute = str(args["attribute_name"])
        try:
            self.graph = self.graph.edit_attribute(name, attribute,
                                                   args.get("value"))
        except SceneGraphError as exc:
            return _fail(call, str(exc), "args")
        return _ok(call, {"edited": name, "attribute": attribute})

    # ------------------------------------------------------------------
    # Planning
    # ------------------------------------------------------------------

    def _plan(self, call: ToolCall, args: dict[str, Any]) -> ToolResult:
        if self.planner is None:
            return _fail(call, "no planning backend configured", "state")
        request = str(args["request_from_user"])
        try:
            text = self.planner(request)
        except BackendUnavailable:
            raise
        except Exception as exc:  # solver infeasibility, parse failures
            return _fail(call, str(exc), "unsupported")
        try:
            parse_plan(text)
        except PlanParseError as exc:
            return _fail(call, f"planner returned an unparseable plan: {exc}",
                         "unsupported")
        return _ok(call, text)


def _sample_depth(image: DepthImage, u: float, v: float) -> Optional[float]:
    col = int(round(u))
    row = int(round(v))
    if not (0 <= col < image.intrinsics.width
            and 0 <= row < image.intrinsics.height):
        return None
    value = float(image.depths[row, col])
    if not np.isfinite(value) or value <= 0:
        return None
    return value
