"""Deterministic symbolic planners for the benchmark task families.

Each solver reads only the scene graph (plus, where sizes matter, a capture
of the initial scene) and emits a plan in the documented grammar. Every
emitted plan must pass validate_plan with zero errors; the test suite
asserts this for all of them.

Placement always targets a named graph node.  When the target spot comes
from a point query, the solver first materializes it as a location node
(add_object_to_scenegraph with the queried coordinates) and then places on
that name — the point tool itself never touches the graph.
"""

from __future__ import annotations

import re
from typing import Any, Optional

from ..scene_graph import SceneGraph
from .plan import Placeholder, Plan, PlanStep
from .rules import (ADD_TOOL, EDIT_TOOL, PICK_TOOL, PLACE_TOOL, POINT_TOOL,
                    SCAN_TOOL, TAG_TOOL)


class SolverError(Exception):
    pass


class InvalidConfiguration(SolverError):
    pass


class InfeasibleGoal(SolverError):
    pass


def _bbox_area(capture, name: str) -> float:
    if capture is None:
        return 0.0
    box = capture.bboxes.get(name)
    if box is None:
        return 0.0
    return float((box.x_max - box.x_min) * (box.y_max - box.y_min))


class _Builder:
    def __init__(self):
        self.steps: list[PlanStep] = []

    def add(self, tool: str, note: str = "", **args: Any) -> int:
        """Append a step; returns its 1-based number for placeholders."""
        self.steps.append(PlanStep(tool=tool, args=args, note=note))
        return len(self.steps)

    def add_location_node(self, name: str, described_as: str,
                          point_step: int, note: str = "") -> int:
        return self.add(ADD_TOOL, note=note, object_name=name,
                        affordance=["placement location"],
                        position_in_cartesian_space=described_as,
                        things_to_know="Transient placement target.",
                        coordinates=Placeholder(step=point_step),
                        contains=[])

    def plan(self, rationale: str = "") -> Plan:
        return Plan(steps=tuple(self.steps), rationale=rationale)


# ----------------------------------------------------------------------
# Tower of Hanoi
# ----------------------------------------------------------------------

DEFAULT_PEGS = ("left", "middle", "right")


def hanoi_moves(n_discs: int, from_peg: str, to_peg: str,
                spare_peg: str) -> list[tuple[int, str, str]]:
    """Optimal move list as (disc rank, source peg, destination peg);
    rank 1 is the smallest disc."""
    moves: list[tuple[int, str, str]] = []

    def recurse(k: int, src: str, dst: str, via: str) -> None:
        if k == 0:
            return
        recurse(k - 1, src, via, dst)
        moves.append((k, src, dst))
        recurse(k - 1, via, dst, src)

    recurse(n_discs, from_peg, to_peg, spare_peg)
    return moves


def solve_hanoi(n_discs: int, from_peg: str = "left", to_peg: str = "right",
                spare_peg: str = "middle",
                disc_names: Optional[dict[int, str]] = None,
                base_names: Optional[dict[str, str]] = None,
                tag_ids: Optional[dict[str, int]] = None) -> Plan:
    if not 1 <= n_discs <= 8:
        raise InvalidConfiguration(f"disc count {n_discs} outside 1..8")
    pegs = (from_peg, to_peg, spare_peg)
    if len(set(pegs)) != 3:
        raise InvalidConfiguration(f"pegs must be distinct, got {pegs}")
    discs = disc_names or {k: f"disc_{k}" for k in range(1, n_discs + 1)}
    bases = base_names or {p: f"base_{p}" for p in pegs}
    tags = tag_ids or {**{discs[k]: k for k in discs},
                       **{bases[p]: 100 + i
                          for i, p in enumerate(sorted(bases))}}

    stacks: dict[str, list[int]] = {p: [] for p in pegs}
    stacks[from_peg] = list(range(n_discs, 0, -1))  # largest at bottom

    def visible() -> set[str]:
        seen = set()
        for peg in pegs:
            if stacks[peg]:
                seen.add(discs[stacks[peg][-1]])
            else:
                seen.add(bases[peg])
        return seen

    build = _Builder()

    def rescan(targets: list[str], note: str) -> None:
        scan_step = build.add(TAG_TOOL, note=note)
        for name in targets:
            build.add(EDIT_TOOL, node_name=name, attribute_name="coordinates",
                      value=Placeholder(step=scan_step,
                                        path=(f"tag_{tags[name]}",)))

    seen_before = visible()
    rescan(sorted(seen_before, key=lambda n: tags[n]),
           "initial sweep of every readable tag")

    for rank, src, dst in hanoi_moves(n_discs, from_peg, to_peg, spare_peg):
        disc = discs[rank]
        under = discs[stacks[dst][-1]] if stacks[dst] else bases[dst]
        build.add(PICK_TOOL, object_name=disc)
        build.add(PLACE_TOOL, place_position_name=under,
                  note=f"{disc}: {src} -> {dst}")
        stacks[src].pop()
        stacks[dst].append(rank)
        now = visible()
        fresh = [disc] + sorted(now - seen_before - {disc},
                                key=lambda n: tags[n])
        seen_before = now
        rescan(fresh, "update tags exposed by the move")

    return build.plan(
        rationale=(f"Move the {n_discs}-disc tower from the {from_peg} peg "
                   f"to the {to_peg} peg via the {spare_peg} peg; "
                   f"{2 ** n_discs - 1} moves, each followed by a tag "
                   f"rescan since covered tags cannot be read."))


_TAG_NOTE_RE = re.compile(r"apriltag id (\d+)", re.IGNORECASE)
_RANK_NOTE_RE = re.compile(r"size rank (\d+)", re.IGNORECASE)
_PEG_NOTE_RE = re.compile(r"peg base '(\w+)'", re.IGNORECASE)


def solve_hanoi_from_graph(graph: SceneGraph, request: str) -> Plan:
    """Read disc ranks, peg bases and tag ids out of the graph annotations
    and the goal peg out of the request text."""
    discs: dict[int, str] = {}
    bases: dict[str, str] = {}
    tags: dict[str, int] = {}
    for name, node in graph.nodes.items():
        note = node.things_to_know
        tag = _TAG_NOTE_RE.search(note)
        if tag:
            tags[name] = int(tag.group(1))
        rank = _RANK_NOTE_RE.search(note)
        if rank:
            discs[int(rank.group(1))] = name
        peg = _PEG_NOTE_RE.search(note)
        if peg:
            bases[peg.group(1)] = name
    if not discs or len(bases) != 3:
        raise InfeasibleGoal("graph does not describe a disc puzzle")
    missing = [n for n in list(discs.values()) + list(bases.values())
               if n not in tags]
    if missing:
        raise InfeasibleGoal(f"no tag ids annotated for {missing}")

    start_peg = None
    for peg, base in bases.items():
        if graph.nodes[base].contains:
            start_peg = peg
    goal = re.search(r"\b(left|middle|right)\b", request.lower())
    if start_peg is None or goal is None:
        raise InfeasibleGoal("cannot determine start or goal peg")
    to_peg = goal.group(1)
    if to_peg == start_peg:
        raise InfeasibleGoal("tower is already on the requested peg")
    spare = next(p for p in bases if p not in (start_peg, to_peg))
    return solve_hanoi(len(discs), from_peg=start_peg, to_peg=to_peg,
                       spare_peg=spare, disc_names=discs, base_names=bases,
                       tag_ids=tags)


# ----------------------------------------------------------------------
# Relocation (point-query family)
# ----------------------------------------------------------------------

_BETWEEN_RE = re.compile(
    r"move the (\w+) (?:to the point )?between the (\w+) and the (\w+)",
    re.IGNORECASE)
_FREE_RE = re.compile(
    r"move the (\w+) to (?:a |the )?(free spot|temporary location)",
    re.IGNORECASE)


def solve_relocate(graph: SceneGraph, request: str) -> Plan:
    build = _Builder()
    match = _BETWEEN_RE.search(request)
    if match:
        target, anchor_a, anchor_b = match.groups()
        for name in (target, anchor_a, anchor_b):
            if name not in graph.nodes:
                raise InfeasibleGoal(f"{name!r} is not in the scene graph")
        build.add(SCAN_TOOL, targets_to_scan=[target, anchor_a, anchor_b])
        point = build.add(
            POINT_TOOL,
            prompt_to_vlm=(f"the point located between the {anchor_a} "
                           f"and the {anchor_b}"))
        build.add_location_node(
            "target_location",
            described_as=f"between the {anchor_a} and the {anchor_b}",
            point_step=point)
        build.add(PICK_TOOL, object_name=target)
        build.add(PLACE_TOOL, place_position_name="target_location")
        build.add(EDIT_TOOL, node_name=target,
                  attribute_name="position_in_cartesian_space",
                  value=f"between the {anchor_a} and the {anchor_b}")
        build.add(SCAN_TOOL, targets_to_scan=[target],
                  note="refresh the moved object's coordinates")
        return build.plan(
            rationale=f"Ground a point between {anchor_a} and {anchor_b}, "
                      f"then move {target} there.")
    match = _FREE_RE.search(request)
    if match:
        target, phrase = match.group(1), match.group(2)
        if target not in graph.nodes:
            raise InfeasibleGoal(f"{target!r} is not in the scene graph")
        build.add(SCAN_TOOL, targets_to_scan=[target])
        point = build.add(POINT_TOOL, prompt_to_vlm=f"a {phrase} on the table")
        build.add_location_node("target_location",
                                described_as=f"a {phrase} on the table",
                                point_step=point)
        build.add(PICK_TOOL, object_name=target)
        build.add(PLACE_TOOL, place_position_name="target_location")
        build.add(EDIT_TOOL, node_name=target,
                  attribute_name="position_in_cartesian_space",
                  value=f"at a {phrase} on the table")
        build.add(SCAN_TOOL, targets_to_scan=[target],
                  note="refresh the moved object's coordinates")
        return build.plan(rationale=f"Query a clear spot, then move {target}.")
    raise InfeasibleGoal(f"request not understood: {request!r}")


# ----------------------------------------------------------------------
# Block stacking
# ----------------------------------------------------------------------

def solve_stacking(graph: SceneGraph, capture, request: str) -> Plan:
    blocks = [name for name in graph.nodes["table"].contains
              if "block" in graph.nodes[name].things_to_know.lower()]
    if len(blocks) < 2:
        raise InfeasibleGoal("need at least two blocks to stack")
    with_coords = [b for b in blocks if len(graph.nodes[b].coordinates) == 3]
    if len(with_coords) != len(blocks):
        raise InfeasibleGoal("blocks lack initial coordinates")
    centre_x = sum(graph.nodes[b].coordinates[0] for b in blocks) / len(blocks)
    centre_y = sum(graph.nodes[b].coordinates[1] for b in blocks) / len(blocks)
    base = min(blocks, key=lambda b: (
        (graph.nodes[b].coordinates[0] - centre_x) ** 2
        + (graph.nodes[b].coordinates[1] - centre_y) ** 2, b))
    movers = sorted((b for b in blocks if b != base),
                    key=lambda b: (-_bbox_area(capture, b), b))

    build = _Builder()
    build.add(SCAN_TOOL, targets_to_scan=blocks,
              note="refresh every block before moving anything")
    support = base
    for block in movers:
        build.add(PICK_TOOL, object_name=block)
        build.add(PLACE_TOOL, place_position_name=support)
        build.add(EDIT_TOOL, node_name=support, attribute_name="contains",
                  value=[block])
        build.add(EDIT_TOOL, node_name=block,
                  attribute_name="position_in_cartesian_space",
                  value=f"on top of {support}")
        build.add(SCAN_TOOL, targets_to_scan=[block],
                  note="stack top moved; rescan before building on it")
        support = block
    return build.plan(
        rationale=f"Stack onto {base} (the centre block), larger blocks "
                  f"first: {', '.join(movers)}.")


# ----------------------------------------------------------------------
# Category sorting (two boxes)
# ----------------------------------------------------------------------

_CATEGORIES = ("fruit", "vegetable")


def solve_sorting(graph: SceneGraph, capture) -> Plan:
    table = graph.nodes["table"].contains
    boxes = [n for n in table if "box" in n.lower()]
    if len(boxes) < 2:
        raise InfeasibleGoal("sorting needs two destination boxes")
    groups: dict[str, list[str]] = {c: [] for c in _CATEGORIES}
    for name in table:
        if name in boxes:
            continue
        note = graph.nodes[name].things_to_know.lower()
        for category in _CATEGORIES:
            if category in note:
                groups[category].append(name)
                break
    if not any(groups.values()):
        raise InfeasibleGoal("no categorizable items on the table")
    # Larger group goes to the larger box; ties resolve by capacity then name.
    ordered_groups = sorted(_CATEGORIES,
                            key=lambda c: (-len(groups[c]), c))
    ordered_boxes = sorted(boxes,
                           key=lambda b: (-_bbox_area(capture, b), b))
    assignment = dict(zip(ordered_groups, ordered_boxes))

    items = [n for c in ordered_groups for n in groups[c]]
    build = _Builder()
    build.add(SCAN_TOOL, targets_to_scan=items,
              note="batch-scan every item in one capture")
    planned: dict[str, list[str]] = {b: list(graph.nodes[b].contains)
                                     for b in boxes}
    for category in ordered_groups:
        box = assignment[category]
        for item in groups[category]:
            build.add(PICK_TOOL, object_name=item)
            build.add(PLACE_TOOL, place_position_name=box)
            planned[box].append(item)
            build.add(EDIT_TOOL, node_name=box, attribute_name="contains",
                      value=list(planned[box]))
            build.add(EDIT_TOOL, node_name=item,
                      attribute_name="position_in_cartesian_space",
                      value=f"inside {box}")
            build.add(EDIT_TOOL, node_name=item, attribute_name="coordinates",
                      value=[], note="tracked by containment from here on")
    summary = "; ".join(f"{c}s to {assignment[c]}" for c in ordered_groups
                        if groups[c])
    return build.plan(rationale=f"Sort by category: {summary}.")


# ----------------------------------------------------------------------
# Table organization (purpose-labelled boxes, lids, misplaced items)
# ----------------------------------------------------------------------

_LID_RE = re.compile(r"lid (?:of|for) the (\w+)", re.IGNORECASE)


def _purpose(note: str) -> Optional[str]:
    low = note.lower()
    if "tool" in low:
        return "tool"
    if "food" in low or "fruit" in low:
        return "food"
    return None


def solve_organize(graph: SceneGraph, capture, request: str) -> Plan:
    boxes = [n for n in graph.nodes["table"].contains if "box" in n.lower()]
    if not boxes:
        raise InfeasibleGoal("no boxes to organize into")
    box_purpose = {}
    for box in boxes:
        purpose = _purpose(graph.nodes[box].things_to_know)
        if purpose is None:
            raise InfeasibleGoal(f"box {box!r} has no purpose label")
        box_purpose[box] = purpose

    lids: dict[str, str] = {}  # box -> lid
    for name, node in graph.nodes.items():
        match = _LID_RE.search(node.things_to_know)
        if match and match.group(1) in box_purpose:
            lids[match.group(1)] = name
    lid_names = set(lids.values())

    def parent_of(name: str) -> Optional[str]:
        for other, node in graph.nodes.items():
            if name in node.contains:
                return other
        return None

    closed = [box for box, lid in lids.items() if parent_of(lid) == box]

    def items_under(parent: str) -> list[str]:
        return [n for n in graph.nodes[parent].contains
                if n not in boxes and n not in lid_names
                and _purpose(graph.nodes[n].things_to_know) is not None]

    build = _Builder()
    table_contents: dict[str, list[str]] = {
        n: list(graph.nodes[n].contains) for n in graph.nodes}

    # 1. One batch scan of everything currently visible: table items, items
    #    sitting in open boxes, and every lid (a closed box's lid is on top,
    #    so it is visible even though the contents are not).
    visible_now = [n for box in boxes if box not in closed
                   for n in items_under(box)]
    visible_now += items_under("table")
    visible_now += sorted(lid_names)
    build.add(SCAN_TOOL, targets_to_scan=visible_now,
              note="single batch scan of every visible movable object")

    # 2. Open any closed box, parking its lid at a queried temporary point.
    for box in closed:
        lid = lids[box]
        point = build.add(POINT_TOOL,
                          prompt_to_vlm="a temporary location on the table",
                          note=f"parking spot for {lid}")
        build.add_location_node(f"{lid}_parking_spot",
                                described_as="a clear patch of table",
                                point_step=point)
        build.add(PICK_TOOL, object_name=lid)
        build.add(PLACE_TOOL, place_position_name=f"{lid}_parking_spot")
        table_contents[box].remove(lid)
        table_contents["table"].append(lid)
        build.add(EDIT_TOOL, node_name="table", attribute_name="contains",
                  value=list(table_contents["table"]))
        build.add(EDIT_TOOL, node_name=lid,
                  attribute_name="position_in_cartesian_space",
                  value="temporarily on the table")

    # 3. Scan the contents revealed by opening, but only what must move.
    revealed = [item for box in closed for item in items_under(box)
                if _purpose(graph.nodes[item].things_to_know)
                != box_purpose[box]]
    if revealed:
        build.add(SCAN_TOOL, targets_to_scan=revealed,
                  note="newly revealed items that belong elsewhere")

    def relocate(item: str, box: str) -> None:
        build.add(PICK_TOOL, object_name=item)
        build.add(PLACE_TOOL, place_position_name=box)
        table_contents[box].append(item)
        build.add(EDIT_TOOL, node_name=box, attribute_name="contains",
                  value=list(table_contents[box]))
        build.add(EDIT_TOOL, node_name=item,
                  attribute_name="position_in_cartesian_space",
                  value=f"inside {box}")
        build.add(EDIT_TOOL, node_name=item, attribute_name="coordinates",
                  value=[], note="tracked by containment from here on")

    # 4. Misplaced items (inside a box of the wrong purpose) come first,
    #    then the loose table items go to their purpose box.
    for box in boxes:
        for item in items_under(box):
            want = _purpose(graph.nodes[item].things_to_know)
            if want != box_purpose[box]:
                dest = next(b for b in boxes if box_purpose[b] == want)
                table_contents[box].remove(item)
                relocate(item, dest)
    for item in items_under("table"):
        want = _purpose(graph.nodes[item].things_to_know)
        dest = next(b for b in boxes if box_purpose[b] == want)
        table_contents["table"].remove(item)
        relocate(item, dest)

    # 5. Parked lids moved since their scan; refresh them, then close every
    #    box with its own lid.
    parked = sorted(lids[box] for box in closed)
    if parked:
        build.add(SCAN_TOOL, targets_to_scan=parked,
                  note="parked lids moved since the first scan")
    for box in boxes:
        lid = lids.get(box)
        if lid is None:
            continue
        build.add(PICK_TOOL, object_name=lid)
        build.add(PLACE_TOOL, place_position_name=box, note=f"close {box}")
        if lid in table_contents["table"]:
            table_contents["table"].remove(lid)
        table_contents[box].append(lid)
        build.add(EDIT_TOOL, node_name=box, attribute_name="contains",
                  value=list(table_contents[box]))
        build.add(EDIT_TOOL, node_name=lid,
                  attribute_name="position_in_cartesian_space",
                  value=f"on {box}, closing it")
    return build.plan(
        rationale="Scan what is visible, open closed boxes, relocate "
                  "misplaced items, sort the rest by purpose, then close "
                  "every box with its lid.")


# ----------------------------------------------------------------------
# Dispatch
# ----------------------------------------------------------------------

def build_plan(task: str, request: str, graph: SceneGraph,
               capture=None) -> Plan:
    if task == "hanoi":
        return solve_hanoi_from_graph(graph, request)
    if task == "relocate":
        return solve_relocate(graph, request)
    if task == "stacking":
        return solve_stacking(graph, capture, request)
    if task == "sorting":
        return solve_sorting(graph, capture)
    if task == "organize":
        return solve_organize(graph, capture, request)
    raise InvalidConfiguration(f"unknown task family {task!r}")
