"""Trial scoring: the three benchmark metrics.

PF (planning feasibility) judges the plan alone: rule-clean and, under a
symbolic execution that assumes every step succeeds, goal-reaching. TCR
(task completion) judges the real outcome against the simulator's ground
truth. SGH (scene-graph handling) judges the final knowledge base: the
fraction of expected graph assertions that hold, with coordinate freshness
measured against world truth.

Predicates are small JSON objects with an ``op`` field; the same success
predicates drive both the symbolic (PF) and the world (TCR) checks.
"""

from __future__ import annotations

from typing import Any, Optional

import numpy as np

from ..planning.plan import Placeholder, Plan, placeholder_from_str
from ..planning.rules import (ADD_TOOL, EDIT_TOOL, PICK_TOOL, PLACE_TOOL,
                              POINT_TOOL, validate_plan)
from ..scene_graph import SceneGraph
from ..sim.world import TABLE, WorldState
from .scenario import Scenario


class PredicateError(Exception):
    pass


# ----------------------------------------------------------------------
# Symbolic execution (PF)
# ----------------------------------------------------------------------

# Final location of each moved object: ("in"|"on", target) after a place,
# ("at_point", prompt) when the target node was grounded by a point query,
# ("graph", parent) for objects never moved.
_SymState = dict[str, tuple[str, str]]


def _graph_parents(graph: SceneGraph) -> dict[str, str]:
    parents: dict[str, str] = {}
    for name, node in graph.nodes.items():
        for child in node.contains:
            parents[child] = name
    return parents


def _as_placeholder(value: Any) -> Optional[Placeholder]:
    if isinstance(value, Placeholder):
        return value
    if isinstance(value, str):
        return placeholder_from_str(value)
    return None


def symbolic_final_state(plan: Plan, graph: SceneGraph) -> _SymState:
    """Walk the plan assuming every step succeeds, tracking where each
    object ends up and which placement targets are point-query nodes."""
    state: _SymState = {name: ("graph", parent)
                        for name, parent in _graph_parents(graph).items()}
    point_prompts: dict[int, str] = {}
    point_nodes: dict[str, str] = {}
    holding: Optional[str] = None
    for number, step in enumerate(plan.steps, start=1):
        if step.tool == POINT_TOOL:
            point_prompts[number] = str(step.args.get("prompt_to_vlm", ""))
        elif step.tool == ADD_TOOL:
            ref = _as_placeholder(step.args.get("coordinates"))
            if ref is not None and ref.step in point_prompts:
                point_nodes[str(step.args.get("object_name"))] = (
                    point_prompts[ref.step])
        elif step.tool == PICK_TOOL:
            holding = str(step.args.get("object_name"))
        elif step.tool == PLACE_TOOL:
            target = str(step.args.get("place_position_name"))
            if holding is None:
                continue  # R2 already flags this; nothing to record
            if target in point_nodes:
                state[holding] = ("at_point", point_nodes[target])
            elif "box" in target.lower():
                state[holding] = ("in", target)
            else:
                state[holding] = ("on", target)
            holding = None
    return state


def _sym_holds(pred: dict[str, Any], state: _SymState) -> bool:
    op = pred.get("op")
    if op == "in":
        entry = state.get(pred["object"])
        return entry is not None and entry[1] == pred["container"] \
            and entry[0] in ("in", "graph")
    if op == "on":
        entry = state.get(pred["object"])
        return entry is not None and entry[1] == pred["support"] \
            and entry[0] in ("on", "graph")
    if op == "between":
        entry = state.get(pred["object"])
        if entry is None or entry[0] != "at_point":
            return False
        prompt = entry[1].lower()
        return "between" in prompt and all(
            str(a).lower() in prompt for a in pred["anchors"])
    if op == "free_spot":
        entry = state.get(pred["object"])
        if entry is None or entry[0] != "at_point":
            return False
        prompt = entry[1].lower()
        return "free spot" in prompt or "temporary location" in prompt \
            or "empty" in prompt
    if op == "near_point":
        entry = state.get(pred["object"])
        return entry is not None and entry[0] == "at_point"
    if op == "closed":
        entry = state.get(pred["lid"])
        return entry is not None and entry[1] == pred["container"]
    if op == "moved":
        entry = state.get(pred["object"])
        return entry is not None and entry[0] != "graph"
    if op == "tower":
        return _sym_tower(pred["blocks"], state)
    raise PredicateError(f"unknown success predicate op {op!r}")


def _sym_tower(blocks: list[str], state: _SymState) -> bool:
    supports: dict[str, str] = {}
    bases: list[str] = []
    for block in blocks:
        entry = state.get(block)
        if entry is not None and entry[0] == "on" and entry[1] in blocks:
            supports[block] = entry[1]
        else:
            bases.append(block)
    if len(bases) != 1 or len(set(supports.values())) != len(supports):
        return False
    # Follow the chain up from the base; it must visit every block.
    on_top_of = {support: mover for mover, support in supports.items()}
    seen, current = 1, bases[0]
    while current in on_top_of:
        current = on_top_of[current]
        seen += 1
    return seen == len(blocks)


def score_pf(plan: Optional[Plan], graph: SceneGraph,
             scenario: Scenario) -> int:
    if plan is None:
        return 0
    if any(not v.is_warning for v in validate_plan(plan, graph)):
        return 0
    state = symbolic_final_state(plan, graph)
    return int(all(_sym_holds(p, state) for p in scenario.success))


# ----------------------------------------------------------------------
# World outcome (TCR)
# ----------------------------------------------------------------------

def _chain_into(world: WorldState, name: str, container: str) -> bool:
    current = world.support.get(name)
    while current not in (None, TABLE):
        if current == container:
            return True
        current = world.support.get(current)
    return False


def _world_holds(pred: dict[str, Any], world: WorldState,
                 initial_positions: dict[str, np.ndarray]) -> bool:
    op = pred.get("op")
    if op == "in":
        return _chain_into(world, pred["object"], pred["container"])
    if op == "on":
        name = pred["object"]
        return world.support.get(name) == pred["support"] \
            and world.support_kind.get(name) == "on"
    if op == "between":
        obj = world.obj(pred["object"])
        a = world.obj(pred["anchors"][0])
        b = world.obj(pred["anchors"][1])
        mid_x = (a.position[0] + b.position[0]) / 2.0
        mid_y = (a.position[1] + b.position[1]) / 2.0
        tol = float(pred.get("tol", 0.06))
        return float(np.hypot(obj.position[0] - mid_x,
                              obj.position[1] - mid_y)) <= tol
    if op == "near_point":
        obj = world.obj(pred["object"])
        x, y = pred["point"][0], pred["point"][1]
        tol = float(pred.get("tol", 0.06))
        return float(np.hypot(obj.position[0] - x,
                              obj.position[1] - y)) <= tol
    if op == "free_spot":
        name = pred["object"]
        if world.support.get(name) != TABLE:
            return False
        obj = world.obj(name)
        clearance = float(pred.get("clearance", 0.07))
        gaps = [float(np.hypot(obj.position[0] - other.position[0],
                               obj.position[1] - other.position[1]))
                for other in world.resting() if other.name != name]
        return min(gaps, default=np.inf) >= clearance
    if op == "closed":
        return world.is_closed(pred["container"])
    if op == "moved":
        obj = world.obj(pred["object"])
        start = initial_positions[pred["object"]]
        min_dist = float(pred.get("min_dist", 0.05))
        return float(np.hypot(obj.position[0] - start[0],
                              obj.position[1] - start[1])) >= min_dist
    if op == "tower":
        blocks = pred["blocks"]
        bases = [b for b in blocks if world.support.get(b) == TABLE]
        if len(bases) != 1:
            return False
        supports = {b: world.support.get(b) for b in blocks if b != bases[0]}
        if not all(s in blocks for s in supports.values()):
            return False
        return len(set(supports.values())) == len(supports)
    raise PredicateError(f"unknown success predicate op {op!r}")


def score_tcr(done: bool, world: WorldState, scenario: Scenario,
              initial_positions: dict[str, np.ndarray]) -> int:
    if not done:
        return 0
    return int(all(_world_holds(p, world, initial_positions)
                   for p in scenario.success))


# ----------------------------------------------------------------------
# Final graph (SGH)
# ----------------------------------------------------------------------

def _graph_holds(pred: dict[str, Any], graph: SceneGraph,
                 world: WorldState) -> bool:
    op = pred.get("op")
    if op == "children":
        node = pred["node"]
        if node not in graph:
            return False
        have = set(graph.node(node).contains)
        if "equals" in pred:
            return have == set(pred["equals"])
        return set(pred["includes"]) <= have
    if op == "parent":
        parents = _graph_parents(graph)
        return parents.get(pred["node"]) == pred["equals"]
    if op == "coords_fresh":
        node = pred["node"]
        if node not in graph or node not in world.objects:
            return False
        coords = graph.node(node).coordinates
        if len(coords) != 3:
            return False
        truth = world.obj(node).position
        tol = float(pred.get("tol", 0.02))
        return float(np.hypot(float(coords[0]) - truth[0],
                              float(coords[1]) - truth[1])) <= tol
    if op == "coords_empty":
        node = pred["node"]
        return node in graph and len(graph.node(node).coordinates) == 0
    if op == "descriptor_contains":
        node = pred["node"]
        return node in graph and \
            pred["text"].lower() in graph.node(node).position_descriptor.lower()
    raise PredicateError(f"unknown graph predicate op {op!r}")


def score_sgh(graph: SceneGraph, world: WorldState,
              scenario: Scenario) -> float:
    if not scenario.sgh:
        return 1.0
    hits = sum(bool(_graph_holds(p, graph, world)) for p in scenario.sgh)
    return hits / len(scenario.sgh)
