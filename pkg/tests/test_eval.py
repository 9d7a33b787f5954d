"""Scenario files, trial construction, metric scoring and the suite runner."""

from __future__ import annotations

import copy
import json

import numpy as np
import pytest

from lta.eval.scenario import (Scenario, ScenarioParseError, build_trial,
                               build_world, builtin_scenarios, load_scenario,
                               parse_scenario)
from lta.eval.scoring import (PredicateError, score_pf, score_sgh, score_tcr)
from lta.eval.suite import (ScenarioSummary, TrialReport, make_backends,
                            render_table, run_suite, run_trial, summarize)
from lta.orchestrator.trace import lint_trace, load_trace
from lta.planning.plan import parse_plan
from lta.scene_graph import SceneGraph
from lta.sim.shapes import Box, Cylinder, Sphere, footprint_radius
from lta.sim.world import SimObject, WorldState

BASE_PAYLOAD = {
    "id": "mini",
    "title": "Park the puck",
    "task": "relocate",
    "request": "Move the puck to a free spot.",
    "trials": 2,
    "seed": 77,
    "table": {"z": 0.0, "extent": [[-0.45, 0.45], [-0.3, 0.3]]},
    "objects": [
        {"name": "puck", "shape": {"kind": "cylinder", "r": 0.03, "h": 0.03},
         "region": [[0.05, 0.35], [-0.2, 0.2]],
         "color": "blue", "category": "toy"},
        {"name": "mug", "shape": {"kind": "cylinder", "r": 0.04, "h": 0.09},
         "position": [-0.3, 0.15], "color": "red", "category": "dishware"},
    ],
    "graph": {
        "workspace": {"affordance": ["None"], "contains": ["table"],
                      "position_in_cartesian_space": "irrelevant",
                      "things_to_know": "None", "coordinates": []},
        "table": {"affordance": ["fixed in space"],
                  "contains": ["puck", "mug"],
                  "position_in_cartesian_space": "irrelevant",
                  "things_to_know": "None", "coordinates": []},
        "puck": {"affordance": ["pickable"], "contains": [],
                 "position_in_cartesian_space": "on the table",
                 "things_to_know": "A small blue puck.", "coordinates": []},
        "mug": {"affordance": ["pickable"], "contains": [],
                "position_in_cartesian_space": "on the table",
                "things_to_know": "A red ceramic mug.", "coordinates": []},
    },
    "success": [
        {"op": "moved", "object": "puck", "min_dist": 0.05},
        {"op": "free_spot", "object": "puck", "clearance": 0.07},
    ],
    "sgh": [
        {"op": "coords_fresh", "node": "puck", "tol": 0.02},
        {"op": "descriptor_contains", "node": "puck", "text": "free spot"},
    ],
}


def payload(**overrides) -> dict:
    merged = copy.deepcopy(BASE_PAYLOAD)
    merged.update(overrides)
    return merged


# ----------------------------------------------------------------------
# Scenario parsing
# ----------------------------------------------------------------------

def test_parse_scenario_reads_every_field():
    scenario = parse_scenario(payload())
    assert scenario.id == "mini" and scenario.task == "relocate"
    assert scenario.trials == 2 and scenario.seed == 77
    assert scenario.table_extent == ((-0.45, 0.45), (-0.3, 0.3))
    assert scenario.objects[0].region == ((0.05, 0.35), (-0.2, 0.2))
    assert scenario.objects[1].position == (-0.3, 0.15)
    assert isinstance(scenario.objects[0].shape, Cylinder)
    assert len(scenario.success) == 2 and len(scenario.sgh) == 2


@pytest.mark.parametrize("mutate, message", [
    (lambda p: p.pop("request"), "missing required field 'request'"),
    (lambda p: p.pop("graph"), "missing required field 'graph'"),
    (lambda p: p["objects"][0].pop("name"), "needs a name"),
    (lambda p: (p["objects"][0].pop("region"),
                p["objects"][0].pop("position", None)),
     "needs a position or a region"),
    (lambda p: p["objects"][0].update(shape="round"),
     "shape must be an object"),
    (lambda p: p["objects"][0]["shape"].update(kind="torus"),
     "unknown shape kind"),
    (lambda p: p["objects"][0]["shape"].pop("r"), "missing field 'r'"),
    (lambda p: p.update(mode="sonar"), "unknown mode"),
    (lambda p: p.update(trials=0), "trials must be positive"),
    (lambda p: p["objects"].append(dict(p["objects"][0])),
     "duplicate object names"),
])
def test_parse_scenario_rejects_malformed_payloads(mutate, message):
    broken = payload()
    mutate(broken)
    with pytest.raises(ScenarioParseError, match=message):
        parse_scenario(broken)


def test_load_scenario_file_errors(tmp_path):
    with pytest.raises(ScenarioParseError):
        load_scenario(tmp_path / "absent.json")
    garbled = tmp_path / "garbled.json"
    garbled.write_text("{not json")
    with pytest.raises(ScenarioParseError):
        load_scenario(garbled)
    listy = tmp_path / "list.json"
    listy.write_text("[1, 2]")
    with pytest.raises(ScenarioParseError, match="top level"):
        load_scenario(listy)


def test_builtin_scenarios_cover_the_benchmark():
    builtin = builtin_scenarios()
    assert set(builtin) == {"I-A", "I-B1", "I-B2", "I-C", "I-D",
                            "II-A", "II-B", "III-A", "III-B", "III-C"}
    for path in builtin.values():
        scenario = load_scenario(path)
        assert scenario.trials >= 1


# ----------------------------------------------------------------------
# Trial construction
# ----------------------------------------------------------------------

def test_build_world_is_deterministic_per_trial():
    scenario = parse_scenario(payload())
    first = build_world(scenario, 0)
    again = build_world(scenario, 0)
    other = build_world(scenario, 1)
    assert np.array_equal(first.obj("puck").position,
                          again.obj("puck").position)
    assert not np.array_equal(first.obj("puck").position,
                              other.obj("puck").position)
    # The fixed-position object never moves between trials.
    assert np.array_equal(first.obj("mug").position,
                          other.obj("mug").position)


def test_region_placement_respects_bounds_and_clearance():
    scenario = load_scenario(builtin_scenarios()["I-C"])
    for trial in range(10):
        world = build_world(scenario, trial)
        placed = []
        for spec in scenario.objects:
            x, y, _ = world.obj(spec.name).position
            (rx0, rx1), (ry0, ry1) = spec.region
            assert rx0 <= x <= rx1 and ry0 <= y <= ry1
            placed.append((x, y, footprint_radius(spec.shape)))
        for i in range(len(placed)):
            for j in range(i + 1, len(placed)):
                xi, yi, ri = placed[i]
                xj, yj, rj = placed[j]
                assert np.hypot(xi - xj, yi - yj) >= ri + rj + 0.02 - 1e-9


def test_build_world_rejects_impossible_regions():
    shifted = payload()
    shifted["objects"][0]["region"] = [[0.6, 0.8], [0.0, 0.1]]
    with pytest.raises(ScenarioParseError, match="does not fit"):
        build_world(parse_scenario(shifted), 0)

    dense = payload()
    dense["objects"][0]["region"] = [[0.0, 0.02], [0.0, 0.02]]
    dense["objects"][1] = dict(dense["objects"][1])
    dense["objects"][1].pop("position")
    dense["objects"][1]["region"] = [[0.0, 0.02], [0.0, 0.02]]
    with pytest.raises(ScenarioParseError, match="clear spot"):
        build_world(parse_scenario(dense), 0)


def test_scenario_faults_reach_the_world():
    scenario = load_scenario(builtin_scenarios()["I-B1"])
    world = build_world(scenario, 0)
    assert len(world.faults) == 1
    fault = world.faults[0]
    assert fault.kind == "loc_bias" and fault.scope == "point"
    assert fault.probability == pytest.approx(0.4)


def test_graph_templates_resolve_world_coordinates():
    spec = payload()
    spec["graph"]["puck"]["coordinates"] = "@world:puck"
    spec["graph"]["mug"]["coordinates"] = "@world:mug:top"
    world, graph = build_trial(parse_scenario(spec), 0)
    assert graph.node("puck").coordinates == pytest.approx(
        list(world.obj("puck").position))
    mug = world.obj("mug")
    assert graph.node("mug").coordinates == pytest.approx(
        [mug.position[0], mug.position[1], mug.top_z])


# ----------------------------------------------------------------------
# Scoring: planning feasibility
# ----------------------------------------------------------------------

def scenario_with(success=(), sgh=()) -> Scenario:
    return Scenario(id="t", task="relocate", request="", objects=(),
                    graph={}, success=tuple(success), sgh=tuple(sgh))


def relocate_graph() -> SceneGraph:
    g = SceneGraph.empty().add_object("table", affordance=["fixed in space"])
    for name in ("lemon", "mug", "bottle"):
        g = g.add_object(name, parent="table", affordance=["pickable"])
    return g


RELOCATE_PLAN = """\
1. scan_and_update_coordinates_in_scene_graph(targets_to_scan=[lemon])
2. get_a_specific_coordinate_point_using_vlm(prompt_to_vlm="the point between the mug and the bottle")
3. add_object_to_scenegraph(object_name=drop_zone, affordance=["placement location"], coordinates=$step2.out)
4. pick_object(object_name=lemon)
5. place_object(place_position_name=drop_zone)"""

BETWEEN = {"op": "between", "object": "lemon", "anchors": ["mug", "bottle"]}


def test_score_pf_accepts_a_goal_reaching_plan():
    plan = parse_plan(RELOCATE_PLAN)
    assert score_pf(plan, relocate_graph(), scenario_with([BETWEEN])) == 1


def test_score_pf_rejects_missing_plan_and_rule_violations():
    scenario = scenario_with([BETWEEN])
    assert score_pf(None, relocate_graph(), scenario) == 0
    # Without the scan, the pick step has no coordinate provenance.
    unscanned = parse_plan(
        '1. get_a_specific_coordinate_point_using_vlm(prompt_to_vlm='
        '"the point between the mug and the bottle")\n'
        '2. add_object_to_scenegraph(object_name=drop_zone, '
        'affordance=["placement location"], coordinates=$step1.out)\n'
        '3. pick_object(object_name=lemon)\n'
        '4. place_object(place_position_name=drop_zone)')
    assert score_pf(unscanned, relocate_graph(), scenario) == 0


def test_score_pf_rejects_a_plan_for_the_wrong_goal():
    wrong = parse_plan(RELOCATE_PLAN.replace(
        "the point between the mug and the bottle",
        "a free spot on the table"))
    assert score_pf(wrong, relocate_graph(), scenario_with([BETWEEN])) == 0
    free = {"op": "free_spot", "object": "lemon"}
    assert score_pf(wrong, relocate_graph(), scenario_with([free])) == 1


def test_score_pf_tracks_containers_and_towers():
    g = SceneGraph.empty().add_object("table", affordance=["fixed in space"])
    g = g.add_object("apple", parent="table", affordance=["pickable"])
    g = g.add_object("red_box", parent="table",
                     affordance=["placement location"],
                     coordinates=[0.2, 0.1, 0.05])
    boxed = parse_plan(
        "1. scan_and_update_coordinates_in_scene_graph(targets_to_scan=[apple])\n"
        "2. pick_object(object_name=apple)\n"
        "3. place_object(place_position_name=red_box)")
    into = {"op": "in", "object": "apple", "container": "red_box"}
    assert score_pf(boxed, g, scenario_with([into])) == 1

    g2 = SceneGraph.empty().add_object("table", affordance=["fixed in space"])
    for name in ("block_a", "block_b", "block_c"):
        g2 = g2.add_object(name, parent="table", affordance=["pickable"])
    stack = parse_plan(
        "1. scan_and_update_coordinates_in_scene_graph("
        "targets_to_scan=[block_a, block_b, block_c])\n"
        "2. pick_object(object_name=block_b)\n"
        "3. place_object(place_position_name=block_a)\n"
        "4. pick_object(object_name=block_c)\n"
        "5. place_object(place_position_name=block_b)")
    tower = {"op": "tower", "blocks": ["block_a", "block_b", "block_c"]}
    assert score_pf(stack, g2, scenario_with([tower])) == 1
    flat = parse_plan(
        "1. scan_and_update_coordinates_in_scene_graph("
        "targets_to_scan=[block_a, block_b, block_c])\n"
        "2. pick_object(object_name=block_b)\n"
        "3. place_object(place_position_name=block_a)\n"
        "4. pick_object(object_name=block_c)\n"
        "5. place_object(place_position_name=block_a)")
    assert score_pf(flat, g2, scenario_with([tower])) == 0


def test_unknown_predicate_op_raises():
    plan = parse_plan(RELOCATE_PLAN)
    with pytest.raises(PredicateError):
        score_pf(plan, relocate_graph(), scenario_with([{"op": "levitate"}]))


# ----------------------------------------------------------------------
# Scoring: task completion
# ----------------------------------------------------------------------

def outcome_world() -> WorldState:
    world = WorldState(table_z=0.0, table_extent=((-0.45, 0.45), (-0.3, 0.3)))
    world.add_object(SimObject(name="lemon", shape=Sphere(r=0.025),
                               position=np.array([-0.2, 0.0, 0.0])))
    world.add_object(SimObject(name="mug", shape=Cylinder(r=0.04, h=0.09),
                               position=np.array([-0.2, 0.1, 0.0])))
    world.add_object(SimObject(name="bottle", shape=Cylinder(r=0.03, h=0.16),
                               position=np.array([-0.2, -0.1, 0.0])))
    return world


def test_score_tcr_requires_completion_and_goal():
    world = outcome_world()
    start = {"lemon": np.array([0.3, 0.0, 0.025])}
    scenario = scenario_with([BETWEEN])
    assert score_tcr(False, world, scenario, start) == 0
    assert score_tcr(True, world, scenario, start) == 1
    moved = scenario_with([{"op": "moved", "object": "lemon",
                            "min_dist": 0.05}])
    assert score_tcr(True, world, moved, start) == 1
    assert score_tcr(True, world, moved,
                     {"lemon": np.array([-0.2, 0.0, 0.025])}) == 0


def test_score_tcr_spatial_predicates():
    world = outcome_world()
    start = {name: world.obj(name).position.copy() for name in world.objects}
    near = scenario_with([{"op": "near_point", "object": "lemon",
                           "point": [-0.21, 0.01], "tol": 0.05}])
    assert score_tcr(True, world, near, start) == 1
    free = scenario_with([{"op": "free_spot", "object": "lemon",
                           "clearance": 0.07}])
    assert score_tcr(True, world, free, start) == 1
    crowded = scenario_with([{"op": "free_spot", "object": "lemon",
                              "clearance": 0.5}])
    assert score_tcr(True, world, crowded, start) == 0


def test_score_tcr_support_predicates():
    world = WorldState(table_z=0.0, table_extent=((-0.45, 0.45), (-0.3, 0.3)))
    world.add_object(SimObject(name="crate", shape=Box(w=0.2, d=0.2, h=0.1),
                               position=np.array([0.2, 0.0, 0.0]),
                               container=True, graspable=False))
    world.add_object(SimObject(name="base", shape=Box(w=0.06, d=0.06, h=0.04),
                               position=np.array([-0.2, 0.0, 0.0])))
    world.add_object(SimObject(name="apple", shape=Sphere(r=0.025),
                               position=np.array([0.2, 0.0, 0.0])),
                     on="crate", kind="in")
    world.add_object(SimObject(name="cap", shape=Box(w=0.05, d=0.05, h=0.04),
                               position=np.array([-0.2, 0.0, 0.0])),
                     on="base")
    start = {name: world.obj(name).position.copy() for name in world.objects}
    inside = scenario_with([{"op": "in", "object": "apple",
                             "container": "crate"}])
    assert score_tcr(True, world, inside, start) == 1
    on_top = scenario_with([{"op": "on", "object": "cap",
                             "support": "base"}])
    assert score_tcr(True, world, on_top, start) == 1
    swapped = scenario_with([{"op": "on", "object": "base",
                              "support": "cap"}])
    assert score_tcr(True, world, swapped, start) == 0


def test_score_tcr_tower_predicate():
    world = WorldState(table_z=0.0, table_extent=((-0.45, 0.45), (-0.3, 0.3)))
    names = ("block_a", "block_b", "block_c")
    below = None
    for name in names:
        world.add_object(
            SimObject(name=name, shape=Box(w=0.05, d=0.05, h=0.04),
                      position=np.array([0.0, 0.0, 0.0])),
            **({"on": below} if below else {}))
        below = name
    start = {name: world.obj(name).position.copy() for name in world.objects}
    tower = scenario_with([{"op": "tower", "blocks": list(names)}])
    assert score_tcr(True, world, tower, start) == 1
    world.support["block_c"] = "table"  # knock the top block off
    assert score_tcr(True, world, tower, start) == 0


# ----------------------------------------------------------------------
# Scoring: scene-graph handling
# ----------------------------------------------------------------------

def test_score_sgh_fraction_of_holding_assertions():
    world = outcome_world()
    graph = SceneGraph.empty().add_object("table",
                                          affordance=["fixed in space"])
    graph = graph.add_object(
        "lemon", parent="table", affordance=["pickable"],
        position_descriptor="parked at a free spot",
        coordinates=[-0.205, 0.004, 0.025])
    checks = [
        {"op": "coords_fresh", "node": "lemon", "tol": 0.02},
        {"op": "descriptor_contains", "node": "lemon", "text": "free spot"},
        {"op": "children", "node": "table", "includes": ["lemon"]},
        {"op": "parent", "node": "lemon", "equals": "table"},
        {"op": "coords_empty", "node": "lemon"},  # fails: coords are set
    ]
    scenario = scenario_with(sgh=checks)
    assert score_sgh(graph, world, scenario) == pytest.approx(4 / 5)
    assert score_sgh(graph, world, scenario_with(sgh=())) == 1.0


def test_score_sgh_stale_coordinates_fail():
    world = outcome_world()
    graph = SceneGraph.empty().add_object("table",
                                          affordance=["fixed in space"])
    graph = graph.add_object("lemon", parent="table",
                             coordinates=[0.3, 0.0, 0.025])  # old spot
    scenario = scenario_with(sgh=[{"op": "coords_fresh", "node": "lemon",
                                   "tol": 0.02}])
    assert score_sgh(graph, world, scenario) == 0.0


# ----------------------------------------------------------------------
# Trials and the suite
# ----------------------------------------------------------------------

def test_run_trial_scores_a_clean_scripted_run(tmp_path):
    scenario = load_scenario(builtin_scenarios()["I-A"])
    report, session = run_trial(scenario, 0, trace_dir=tmp_path / "traces")
    assert (report.pf, report.tcr, report.sgh) == (1, 1, 1.0)
    assert not report.excluded
    trace_file = tmp_path / "traces" / "I-A-t00.ndjson"
    assert trace_file.exists()
    assert report.trace_path == "traces/I-A-t00.ndjson"
    assert lint_trace(load_trace(trace_file)) == []
    assert session is not None and session.excluded is False


def test_run_trial_is_deterministic(tmp_path):
    scenario = load_scenario(builtin_scenarios()["I-A"])
    report_a, _ = run_trial(scenario, 1, trace_dir=tmp_path / "a")
    report_b, _ = run_trial(scenario, 1, trace_dir=tmp_path / "b")
    assert (report_a.pf, report_a.tcr, report_a.sgh) == \
        (report_b.pf, report_b.tcr, report_b.sgh)
    assert (tmp_path / "a" / "I-A-t01.ndjson").read_bytes() == \
        (tmp_path / "b" / "I-A-t01.ndjson").read_bytes()


def test_remote_backend_without_endpoints_excludes_the_trial(monkeypatch):
    for var in ("LTA_CHAT_URL", "LTA_CHAT_KEY", "LTA_VLM_URL",
                "LTA_VLM_KEY"):
        monkeypatch.delenv(var, raising=False)
    scenario = load_scenario(builtin_scenarios()["I-A"])
    report, session = run_trial(scenario, 0, backend="remote")
    assert report.excluded and session is None
    assert report.pf is None and report.tcr is None and report.sgh is None


def test_make_backends_rejects_unknown_backend():
    scenario = parse_scenario(payload())
    world, graph = build_trial(scenario, 0)
    with pytest.raises(ValueError, match="unknown backend"):
        make_backends(scenario, graph, world, "psychic")


def test_summarize_excludes_lost_trials_from_denominators():
    scenario = parse_scenario(payload())
    trials = [
        TrialReport("mini", 0, pf=1, tcr=1, sgh=1.0, excluded=False,
                    trace_path=""),
        TrialReport("mini", 1, pf=1, tcr=0, sgh=0.5, excluded=False,
                    trace_path=""),
        TrialReport("mini", 2, pf=None, tcr=None, sgh=None, excluded=True,
                    trace_path=""),
    ]
    summary = summarize(scenario, trials)
    assert summary.trials == 3 and summary.excluded == 1
    assert summary.pf_pct == pytest.approx(100.0)
    assert summary.tcr_pct == pytest.approx(50.0)
    assert summary.sgh_pct == pytest.approx(75.0)

    ghost = summarize(scenario, [trials[2]])
    assert ghost.pf_pct is None and ghost.tcr_pct is None


def test_render_table_layout():
    rows = [
        ScenarioSummary("X-1", "Tiny", 3, 0, 100.0, 50.0, 75.0),
        ScenarioSummary("X-2", "A title long enough to be cut off at the "
                               "thirty-eight column mark", 3, 3,
                        None, None, None),
    ]
    table = render_table(rows)
    lines = table.splitlines()
    assert lines[0].startswith("Experiment")
    assert set(lines[1]) == {"-"}
    assert lines[2].startswith("X-1     Tiny")
    assert lines[2].endswith("   100.0     50.0     75.0")
    assert lines[3].endswith("     n/a      n/a      n/a")
    assert len(lines[2]) == len(lines[0])
    assert table.endswith("\n")


def test_run_suite_writes_report_table_and_traces(tmp_path):
    spec_path = tmp_path / "mini.json"
    spec_path.write_text(json.dumps(payload()))
    out = tmp_path / "out"
    report = run_suite([spec_path], out)
    assert report["backend"] == "scripted"
    entry = report["scenarios"][0]
    assert entry["scenario"] == "mini" and entry["trials"] == 2
    assert entry["pf_pct"] == 100.0 and entry["tcr_pct"] == 100.0
    assert entry["sgh_pct"] == 100.0
    assert len(entry["results"]) == 2

    written = json.loads((out / "report.json").read_text())
    assert written == report
    table = (out / "table.txt").read_text()
    assert "mini" in table and "100.0" in table
    for result in entry["results"]:
        trace = out / result["trace"]
        assert trace.exists()
        assert lint_trace(load_trace(trace)) == []


def test_run_suite_overrides_trials_and_seed(tmp_path):
    spec_path = tmp_path / "mini.json"
    spec_path.write_text(json.dumps(payload()))
    report = run_suite([spec_path], tmp_path / "one", trials_override=1)
    assert len(report["scenarios"][0]["results"]) == 1

    reseeded = run_suite([spec_path], tmp_path / "two", trials_override=1,
                         seed_override=9090)
    baseline = (tmp_path / "one" / "traces" / "mini-t00.ndjson").read_bytes()
    changed = (tmp_path / "two" / "traces" / "mini-t00.ndjson").read_bytes()
    assert reseeded["scenarios"][0]["results"][0]["scenario"] == "mini"
    assert baseline != changed  # different seed, different layout
