"""Scenario files: a JSON description of one benchmark trial family.

A scenario pins the table, the objects (with optional per-trial placement
regions), injected faults, the initial scene graph, the user request and
the success / graph-handling predicates. ``build_trial`` instantiates a
concrete world + graph pair for one trial index; trial ``i`` runs with
world seed ``seed + i`` and its own placement randomization, which varies
the initial positions of the manipulated objects while preserving the
scenario's semantics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from ..scene_graph import SceneGraph
from ..sim.shapes import Box, Cylinder, Disc, Shape, Sphere, footprint_radius
from ..sim.world import NoiseConfig, SimObject, TABLE, WorldState

SCENARIO_DIR = Path(__file__).parent / "scenarios"

# Placement randomization draws from its own stream so it can never steal
# draws from the in-world noise/fault generators.
_PLACEMENT_STREAM = 97


class ScenarioParseError(Exception):
    pass


@dataclass(frozen=True)
class ObjectSpec:
    name: str
    shape: Shape
    position: Optional[tuple[float, float]] = None
    region: Optional[tuple[tuple[float, float], tuple[float, float]]] = None
    offset: tuple[float, float] = (0.0, 0.0)
    color: str = ""
    category: str = ""
    graspable: bool = True
    container: bool = False
    lid_of: Optional[str] = None
    tag_id: Optional[int] = None
    on: str = TABLE
    kind: str = "on"


@dataclass(frozen=True)
class Scenario:
    id: str
    task: str
    request: str
    objects: tuple[ObjectSpec, ...]
    graph: dict[str, Any]
    success: tuple[dict[str, Any], ...]
    sgh: tuple[dict[str, Any], ...]
    title: str = ""
    mode: str = "vlm"
    trials: int = 5
    seed: int = 0
    intervention_policy: str = "skip"
    table_z: float = 0.0
    table_extent: tuple[tuple[float, float], tuple[float, float]] = (
        (-0.45, 0.45), (-0.3, 0.3))
    world_options: dict[str, Any] = field(default_factory=dict)
    noise: dict[str, float] = field(default_factory=dict)
    faults: tuple[dict[str, Any], ...] = ()


def _shape_from_spec(spec: Any, name: str) -> Shape:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ScenarioParseError(f"{name}: shape must be an object with "
                                 f"a 'kind'")
    kind = spec["kind"]
    try:
        if kind == "box":
            return Box(w=float(spec["w"]), d=float(spec["d"]),
                       h=float(spec["h"]))
        if kind == "cylinder":
            return Cylinder(r=float(spec["r"]), h=float(spec["h"]))
        if kind == "disc":
            return Disc(r=float(spec["r"]), h=float(spec["h"]))
        if kind == "sphere":
            return Sphere(r=float(spec["r"]))
    except KeyError as exc:
        raise ScenarioParseError(
            f"{name}: shape {kind!r} missing field {exc.args[0]!r}") from None
    raise ScenarioParseError(f"{name}: unknown shape kind {kind!r}")


def _object_from_spec(raw: Any) -> ObjectSpec:
    if not isinstance(raw, dict) or "name" not in raw:
        raise ScenarioParseError(f"object entry needs a name: {raw!r}")
    name = str(raw["name"])
    position = raw.get("position")
    region = raw.get("region")
    if position is None and region is None and raw.get("on", TABLE) == TABLE:
        raise ScenarioParseError(f"{name}: needs a position or a region")
    return ObjectSpec(
        name=name,
        shape=_shape_from_spec(raw.get("shape"), name),
        position=tuple(position) if position else None,
        region=(tuple(map(tuple, region)) if region else None),
        offset=tuple(raw.get("offset") or (0.0, 0.0)),
        color=str(raw.get("color", "")),
        category=str(raw.get("category", "")),
        graspable=bool(raw.get("graspable", True)),
        container=bool(raw.get("container", False)),
        lid_of=raw.get("lid_of"),
        tag_id=raw.get("tag_id"),
        on=str(raw.get("on", TABLE)),
        kind=str(raw.get("kind", "on")))


def parse_scenario(payload: dict[str, Any], source: str = "<inline>") -> Scenario:
    try:
        objects = tuple(_object_from_spec(o) for o in payload["objects"])
        table = payload.get("table", {})
        scenario = Scenario(
            id=str(payload["id"]),
            task=str(payload["task"]),
            request=str(payload["request"]),
            objects=objects,
            graph=payload["graph"],
            success=tuple(payload.get("success", ())),
            sgh=tuple(payload.get("sgh", ())),
            title=str(payload.get("title", "")),
            mode=str(payload.get("mode", "vlm")),
            trials=int(payload.get("trials", 5)),
            seed=int(payload.get("seed", 0)),
            intervention_policy=str(payload.get("intervention_policy",
                                                "skip")),
            table_z=float(table.get("z", 0.0)),
            table_extent=tuple(map(tuple, table.get(
                "extent", ((-0.45, 0.45), (-0.3, 0.3))))),
            world_options=dict(payload.get("world_options", {})),
            noise=dict(payload.get("noise", {})),
            faults=tuple(payload.get("faults", ())))
    except KeyError as exc:
        raise ScenarioParseError(
            f"{source}: missing required field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ScenarioParseError(f"{source}: {exc}") from None
    if scenario.mode not in ("vlm", "apriltag"):
        raise ScenarioParseError(f"{source}: unknown mode "
                                 f"{scenario.mode!r}")
    if scenario.trials < 1:
        raise ScenarioParseError(f"{source}: trials must be positive")
    names = [o.name for o in scenario.objects]
    if len(set(names)) != len(names):
        raise ScenarioParseError(f"{source}: duplicate object names")
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioParseError(f"{path}: {exc}") from None
    if not isinstance(payload, dict):
        raise ScenarioParseError(f"{path}: top level must be an object")
    return parse_scenario(payload, source=str(path))


def builtin_scenarios() -> dict[str, Path]:
    return {p.stem: p for p in sorted(SCENARIO_DIR.glob("*.json"))}


# ----------------------------------------------------------------------
# Trial instantiation
# ----------------------------------------------------------------------

def _sample_xy(spec: ObjectSpec, rng: np.random.Generator,
               placed: list[tuple[float, float, float]],
               extent) -> tuple[float, float]:
    (rx0, rx1), (ry0, ry1) = spec.region
    (tx0, tx1), (ty0, ty1) = extent
    radius = footprint_radius(spec.shape)
    lo_x, hi_x = max(rx0, tx0 + radius), min(rx1, tx1 - radius)
    lo_y, hi_y = max(ry0, ty0 + radius), min(ry1, ty1 - radius)
    if lo_x > hi_x or lo_y > hi_y:
        raise ScenarioParseError(f"{spec.name}: region does not fit on "
                                 f"the table")
    for _ in range(200):
        x = float(rng.uniform(lo_x, hi_x))
        y = float(rng.uniform(lo_y, hi_y))
        if all(np.hypot(x - px, y - py) >= radius + pr + 0.02
               for px, py, pr in placed):
            return x, y
    raise ScenarioParseError(
        f"{spec.name}: could not find a clear spot in its region "
        f"(layout too dense)")


def build_world(scenario: Scenario, trial_index: int) -> WorldState:
    trial_seed = scenario.seed + trial_index
    world = WorldState(
        table_z=scenario.table_z, table_extent=scenario.table_extent,
        seed=trial_seed, noise=NoiseConfig(**scenario.noise),
        **scenario.world_options)
    rng = np.random.default_rng([trial_seed, _PLACEMENT_STREAM])
    placed: list[tuple[float, float, float]] = []
    for spec in scenario.objects:
        if spec.region is not None:
            x, y = _sample_xy(spec, rng, placed, scenario.table_extent)
        elif spec.position is not None:
            x, y = float(spec.position[0]), float(spec.position[1])
        else:
            base = world.obj(spec.on).position
            x = float(base[0] + spec.offset[0])
            y = float(base[1] + spec.offset[1])
        obj = SimObject(name=spec.name, shape=spec.shape,
                        position=np.array([x, y, 0.0]), color=spec.color,
                        category=spec.category, graspable=spec.graspable,
                        container=spec.container, is_lid_of=spec.lid_of,
                        tag_id=spec.tag_id)
        world.add_object(obj, on=spec.on, kind=spec.kind)
        if spec.on == TABLE:
            placed.append((x, y, footprint_radius(spec.shape)))
    for fault in scenario.faults:
        options = dict(fault)
        kind = options.pop("kind")
        if "direction" in options:
            options["direction"] = tuple(options["direction"])
        world.inject_fault(kind, **options)
    return world


def _fill_templates(value: Any, world: WorldState) -> Any:
    if isinstance(value, str) and value.startswith("@world:"):
        ref = value[len("@world:"):]
        want_top = ref.endswith(":top")
        name = ref[:-len(":top")] if want_top else ref
        obj = world.obj(name)
        z = obj.top_z if want_top else float(obj.position[2])
        return [float(obj.position[0]), float(obj.position[1]), z]
    if isinstance(value, dict):
        return {k: _fill_templates(v, world) for k, v in value.items()}
    if isinstance(value, list):
        return [_fill_templates(v, world) for v in value]
    return value


def build_graph(scenario: Scenario, world: WorldState) -> SceneGraph:
    payload = _fill_templates(scenario.graph, world)
    return SceneGraph.from_json(json.dumps(payload))


def build_trial(scenario: Scenario,
                trial_index: int) -> tuple[WorldState, SceneGraph]:
    world = build_world(scenario, trial_index)
    return world, build_graph(scenario, world)
