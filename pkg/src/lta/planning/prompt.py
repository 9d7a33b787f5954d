"""Planning-request assembly: the text handed to whichever model (scripted
or remote) produces the plan."""

from __future__ import annotations

from ..scene_graph import SceneGraph

_PREAMBLE = (
    "You control a robotic arm on a tabletop workspace. Produce the exact "
    "sequence of tool calls that achieves the user request, as a numbered "
    "plan in the documented grammar (one `N. tool(arg=value, ...)` per "
    "line)."
)

PLANNING_RULES = (
    "Objects may have moved since their coordinates were last written; "
    "rescan anything whose position could have changed before grasping it.",
    "After every movement, update the scene graph so it reflects the new "
    "arrangement before relying on it again.",
    "Refer to objects by the exact names used in the scene graph.",
    "It is PROHIBITED to call get_a_specific_coordinate_point_using_vlm "
    "after pick_object; query every needed point before grasping.",
    "Mark values that are only known at run time as placeholders of the "
    "form $stepK.out referencing the step that produces them.",
    "Issue at most one movement tool call at a time and observe its "
    "feedback before continuing.",
    "When using scan_and_update_coordinates_in_scene_graph, scan as many "
    "VISIBLE objects at once as possible rather than one at a time.",
)


def build_planning_request(user_request: str, graph: SceneGraph,
                           tools: dict[str, str]) -> str:
    """`tools` maps tool name to its one-line description."""
    lines = [_PREAMBLE, "", "[Rules]"]
    for idx, rule in enumerate(PLANNING_RULES, start=1):
        lines.append(f"{idx}. {rule}")
    lines.append("")
    lines.append("[Available Tools]")
    for name in tools:
        lines.append(f"- {name}: {tools[name]}")
    lines.append("")
    lines.append("[Initial Scene Graph]")
    lines.append(graph.to_json())
    lines.append("")
    lines.append("[User Request]")
    lines.append(user_request)
    return "\n".join(lines)
