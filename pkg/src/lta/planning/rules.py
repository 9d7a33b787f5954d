"""Static plan checks.

R1  no perception call (scan / point / VQA / tag read) between a pick and
    its matching place — the camera view is blocked and stale readings are
    dangerous mid-transfer;
R2  gripper discipline — a second pick before the held object is placed, or
    a place with nothing held;
R3  coordinate provenance — every pick target and place position must have
    coordinates in the graph or gain them from an earlier step; coordinate
    values written into the graph mid-plan must come from a placeholder
    bound to a perception step (literal numbers are hallucination bait);
R4  (advisory) adjacent single-object scans that could be batched into one
    call.

R1–R3 are errors, R4 is a warning; callers decide what to do with each.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..scene_graph import SceneGraph
from .plan import Placeholder, Plan

SCAN_TOOL = "scan_and_update_coordinates_in_scene_graph"
POINT_TOOL = "get_a_specific_coordinate_point_using_vlm"
VQA_TOOL = "ask_vqa_vlm"
TAG_TOOL = "get_current_position_of_visible_apriltags"
PICK_TOOL = "pick_object"
PLACE_TOOL = "place_object"
EDIT_TOOL = "edit_scenegraph"
ADD_TOOL = "add_object_to_scenegraph"
PLAN_TOOL = "plan_using_advanced_llm"

PERCEPTION_TOOLS = frozenset({SCAN_TOOL, POINT_TOOL, VQA_TOOL, TAG_TOOL})
MOTION_TOOLS = frozenset({PICK_TOOL, PLACE_TOOL})

# Steps whose recorded output is legitimate provenance for a coordinate.
_COORD_SOURCE_TOOLS = frozenset({SCAN_TOOL, POINT_TOOL, TAG_TOOL})


@dataclass(frozen=True)
class RuleViolation:
    rule_id: str
    step_index: int  # 1-based, matching plan numbering
    message: str

    @property
    def is_warning(self) -> bool:
        return self.rule_id == "R4"


def validate_plan(plan: Plan, graph: SceneGraph) -> list[RuleViolation]:
    violations: list[RuleViolation] = []
    known_coords = {name for name, node in graph.nodes.items()
                    if len(node.coordinates) == 3}
    holding: str | None = None
    prev_scan_single = False

    def flag(rule: str, idx: int, msg: str) -> None:
        violations.append(RuleViolation(rule_id=rule, step_index=idx, message=msg))

    def coord_value_ok(idx: int, value: object, what: str) -> bool:
        """True iff a coordinates value written by this step carries
        perception provenance."""
        if isinstance(value, Placeholder):
            if not 1 <= value.step <= len(plan.steps):
                return False  # plan parser already rejects forward refs
            source = plan.steps[value.step - 1].tool
            if source not in _COORD_SOURCE_TOOLS:
                flag("R3", idx,
                     f"{what} references step {value.step} ({source}), "
                     f"which is not a perception step")
                return False
            return True
        if isinstance(value, list) and value:
            flag("R3", idx,
                 f"{what} uses literal coordinates without perception "
                 f"provenance")
        return False

    for idx, step in enumerate(plan.steps, start=1):
        tool = step.tool

        if holding is not None and tool in PERCEPTION_TOOLS:
            flag("R1", idx,
                 f"{tool} called while {holding!r} is mid-transfer "
                 f"(between pick and place)")

        if tool == PICK_TOOL:
            target = step.args.get("object_name")
            if holding is not None:
                flag("R2", idx,
                     f"pick_object({target!r}) while still holding {holding!r}")
            if isinstance(target, str) and target not in known_coords:
                flag("R3", idx,
                     f"pick target {target!r} has no coordinates in the graph "
                     f"and no earlier step provides them")
            holding = target if isinstance(target, str) else "<unknown>"
        elif tool == PLACE_TOOL:
            if holding is None:
                flag("R2", idx, "place_object with an empty gripper")
            location = step.args.get("place_position_name")
            if not isinstance(location, str):
                flag("R3", idx, "place_object needs a place_position_name")
            elif location not in known_coords:
                flag("R3", idx,
                     f"place position {location!r} has no coordinates in "
                     f"the graph and no earlier step provides them")
            holding = None

        # Track which steps make coordinates available downstream.
        if tool == SCAN_TOOL:
            names = step.args.get("targets_to_scan")
            if isinstance(names, list):
                known_coords.update(n for n in names if isinstance(n, str))
                is_single = len(names) == 1
                if is_single and prev_scan_single:
                    flag("R4", idx,
                         "consecutive single-object scans; batch visible "
                         "objects into one call")
                prev_scan_single = is_single
            else:
                prev_scan_single = False
        elif tool not in (EDIT_TOOL, ADD_TOOL):
            prev_scan_single = False

        if tool == EDIT_TOOL and step.args.get("attribute_name") == "coordinates":
            target = step.args.get("node_name")
            value = step.args.get("value")
            if isinstance(target, str):
                if coord_value_ok(idx, value, f"coordinate edit of {target!r}"):
                    known_coords.add(target)
                elif value in ([], None):
                    known_coords.discard(target)
        if tool == ADD_TOOL:
            target = step.args.get("object_name")
            value = step.args.get("coordinates")
            if isinstance(target, str) and value not in ([], None):
                if coord_value_ok(idx, value, f"added node {target!r}"):
                    known_coords.add(target)

    return violations
