"""Whole-system acceptance checks.

Each test exercises one headline guarantee end to end and prints a
``[PASS]`` line with the measured numbers (visible with ``pytest -s``):

* tower rearrangement plans are move-optimal and execute within budget,
* the scripted sorting task reproduces the reference final layout and the
  scene-graph serialization round-trips byte-for-byte,
* bbox-driven centroids land within tolerance of an independently computed
  surface reference, clustering matches an all-pairs union-find, and the
  pinhole mapping inverts to sub-micropixel error,
* the plan rule checker agrees exactly with the labelled plan fixtures and
  every suite trace passes the linter,
* injected grasp faults are retried once or escalated after three strikes,
* injected point faults produce exactly the hand-countable failure rate,
* repeated suite runs are byte-identical.

All reference values here are computed in-test from first principles (search,
all-pairs geometry, direct pinhole algebra, seed enumeration) rather than by
calling the code under test twice.
"""

from __future__ import annotations

import copy
import json
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from lta.eval.scenario import builtin_scenarios, load_scenario, parse_scenario
from lta.eval.suite import run_suite, run_trial
from lta.orchestrator.trace import lint_trace, load_trace
from lta.perception.pipeline import (PerceptionConfig, cluster, depth_to_cloud,
                                     deproject, locate, merge_views, project,
                                     remove_plane_and_outliers)
from lta.perception.types import BBox, CameraPose
from lta.planning.plan import parse_plan
from lta.planning.rules import validate_plan
from lta.planning.solvers import hanoi_moves
from lta.scene_graph import SceneGraph
from lta.sim.render import DEFAULT_INTRINSICS, capture
from lta.sim.shapes import Box, Cylinder, Sphere
from lta.sim.world import NoiseConfig, SimObject, WorldState

FIXTURES = Path(__file__).parent / "fixtures"


def _passed(line: str) -> None:
    print(f"\n[PASS] {line}")


# ----------------------------------------------------------------------
# Tower rearrangement: optimal move count and timed execution
# ----------------------------------------------------------------------

def _minimum_moves_by_search(n_discs: int) -> int:
    """Breadth-first search over every legal disc configuration.

    A state maps each disc (index 0 = smallest) to one of three pegs, so the
    full space is 3**n states; legality is checked from scratch here rather
    than borrowed from the planner.
    """
    start = (0,) * n_discs
    goal = (2,) * n_discs
    depth = {start: 0}
    frontier = [start]
    while frontier:
        nxt: list[tuple[int, ...]] = []
        for state in frontier:
            if state == goal:
                return depth[state]
            top: dict[int, int] = {}
            for disc, peg in enumerate(state):
                if peg not in top:
                    top[peg] = disc  # first hit is the smallest on that peg
            for peg, disc in top.items():
                for dest in range(3):
                    if dest == peg:
                        continue
                    if dest in top and top[dest] < disc:
                        continue  # a smaller disc already sits there
                    moved = list(state)
                    moved[disc] = dest
                    succ = tuple(moved)
                    if succ not in depth:
                        depth[succ] = depth[state] + 1
                        nxt.append(succ)
        frontier = nxt
    raise AssertionError(f"goal unreachable for {n_discs} discs")


def test_tower_plans_are_minimal_and_run_within_budget():
    for n in range(1, 9):
        moves = hanoi_moves(n, "left", "right", "middle")
        assert len(moves) == 2 ** n - 1
        assert len(moves) == _minimum_moves_by_search(n)
        # Replay the move list against an independent peg model.
        pegs = {"left": list(range(n, 0, -1)), "middle": [], "right": []}
        for rank, src, dst in moves:
            assert pegs[src] and pegs[src][-1] == rank, "moved a buried disc"
            assert not pegs[dst] or pegs[dst][-1] > rank, "larger onto smaller"
            pegs[dst].append(pegs[src].pop())
        assert pegs["right"] == list(range(n, 0, -1))

    scenario = load_scenario(builtin_scenarios()["II-B"])
    start = time.perf_counter()
    reports = [run_trial(scenario, i)[0] for i in range(scenario.trials)]
    elapsed = time.perf_counter() - start
    assert all((r.pf, r.tcr, r.sgh) == (1, 1, 1.0) for r in reports)
    assert elapsed < 5.0
    _passed(f"tower moves optimal for 1..8 discs (search-verified); "
            f"{scenario.trials} simulated trials all clean in {elapsed:.2f}s")


# ----------------------------------------------------------------------
# Scripted sorting: reference layout and serialization round-trip
# ----------------------------------------------------------------------

def _enclosing_container(world: WorldState, name: str) -> str | None:
    """Follow the support chain outward until an 'in' link is crossed."""
    while name in world.support:
        parent = world.support[name]
        if world.support_kind[name] == "in":
            return parent
        name = parent
    return None


def test_produce_sorting_reproduces_reference_layout():
    scenario = load_scenario(builtin_scenarios()["III-A"])
    report, session = run_trial(scenario, 0)
    assert (report.pf, report.tcr, report.sgh) == (1, 1, 1.0)
    assert session.state.value == "Done"

    fruit = {"orange", "apple", "lemon"}
    vegetables = {"garlic", "red_onion"}
    for name in fruit:
        assert _enclosing_container(session.world, name) == "large_box"
    for name in vegetables:
        assert _enclosing_container(session.world, name) == "small_box"
    assert set(session.graph.node("large_box").contains) == fruit
    assert set(session.graph.node("small_box").contains) == vegetables

    raw = (FIXTURES / "sorting_initial_graph.json").read_text()
    assert SceneGraph.from_json(raw).to_json() + "\n" == raw
    _passed("sorting run placed 3 fruit in large_box and 2 vegetables in "
            "small_box (world + graph agree); initial graph round-trips "
            "byte-identically")


# ----------------------------------------------------------------------
# Perception: centroid accuracy, clustering parity, reprojection
# ----------------------------------------------------------------------

PERCEPTION_CFG = PerceptionConfig()
SCENE_COUNT = 100
CENTROID_TOL = 0.005        # metres
REPROJECTION_TOL = 1e-6     # pixels
DEPTH_SIGMA = 0.001
BBOX_JITTER = 3             # pixels, each box edge independently


def _randomized_scene(index: int, rng: np.random.Generator,
                      noisy: bool) -> WorldState:
    """A target of rotating shape in one quadrant, a fixed-size distractor
    mirrored through the origin."""
    world = WorldState(table_z=0.1, table_extent=((-0.5, 0.5), (-0.5, 0.5)),
                       seed=9000 + index,
                       noise=NoiseConfig(depth_sigma=DEPTH_SIGMA) if noisy else None)
    kind = index % 3
    if kind == 0:
        shape = Sphere(r=float(rng.uniform(0.022, 0.04)))
    elif kind == 1:
        w, d = rng.uniform(0.04, 0.09, size=2)
        shape = Box(w=float(w), d=float(d), h=float(rng.uniform(0.03, 0.07)))
    else:
        shape = Cylinder(r=float(rng.uniform(0.03, 0.05)),
                         h=float(rng.uniform(0.06, 0.12)))
    sx, sy = rng.choice([-1.0, 1.0], size=2)
    x = float(sx * rng.uniform(0.08, 0.3))
    y = float(sy * rng.uniform(0.08, 0.3))
    world.add_object(SimObject(name="target", shape=shape,
                               position=np.array([x, y, 0.0]), color="red"))
    world.add_object(SimObject(name="distractor",
                               shape=Cylinder(r=0.035, h=0.08),
                               position=np.array([-x, -y, 0.0]), color="gray"))
    return world


def _reference_surface_centroid(world: WorldState, name: str) -> np.ndarray:
    """Visible-surface centroid from a noise-free render, computed with
    direct pinhole algebra on the ground-truth id masks — none of the
    pipeline's deprojection, merging or filtering code is involved."""
    snap = capture(world)
    chunks = []
    for view in snap.views:
        rows, cols = np.nonzero(view.ids == view.names.index(name))
        d = view.depth.depths[rows, cols]
        intr = view.depth.intrinsics
        cam = np.stack([(cols - intr.cx) * d / intr.fx,
                        (rows - intr.cy) * d / intr.fy, d], axis=1)
        chunks.append(cam @ view.pose.rotation.T + view.pose.translation)
    points = np.concatenate(chunks, axis=0)
    points = points[points[:, 2] > world.table_z + PERCEPTION_CFG.table_z_epsilon]
    cells = np.floor(points / PERCEPTION_CFG.voxel_size).astype(np.int64)
    _, keep = np.unique(cells, axis=0, return_index=True)
    return points[keep].mean(axis=0)


def _all_pairs_partition(points: np.ndarray, link: float,
                         min_points: int) -> set[frozenset[int]]:
    """Union-find over every point pair within the link distance. Distance
    rows are computed in blocks so the quadratic scan stays affordable, but
    no spatial pruning is applied — every pair is examined."""
    n = len(points)
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    block = 512
    for start in range(0, n, block):
        rows, cols = np.nonzero(cdist(points[start:start + block], points) <= link)
        for r, c in zip(rows.tolist(), cols.tolist()):
            i = start + r
            if i < c:
                ra, rb = find(i), find(c)
                if ra != rb:
                    parent[ra] = rb
    groups: dict[int, set[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), set()).add(i)
    return {frozenset(g) for g in groups.values() if len(g) >= min_points}


def _tilted_pose() -> CameraPose:
    theta = np.pi * 5 / 6  # looking down with a 30 degree pitch about x
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[1.0, 0.0, 0.0],
                    [0.0, c, -s],
                    [0.0, s, c]])
    return CameraPose(rotation=rot, translation=np.array([0.0, 0.3, 0.8]))


def test_centroids_clusters_and_reprojection_meet_tolerances():
    rng = np.random.default_rng(20260823)
    intr = DEFAULT_INTRINSICS
    worst_centroid = 0.0
    for i in range(SCENE_COUNT):
        world = _randomized_scene(i, rng, noisy=True)
        snap = capture(world)
        truth = snap.bboxes["target"]
        offs = rng.integers(-BBOX_JITTER, BBOX_JITTER + 1, size=4)
        jittered = BBox(label="target",
                        x_min=int(np.clip(truth.x_min + offs[0], 0, intr.width - 2)),
                        y_min=int(np.clip(truth.y_min + offs[1], 0, intr.height - 2)),
                        x_max=int(np.clip(truth.x_max + offs[2], 1, intr.width - 1)),
                        y_max=int(np.clip(truth.y_max + offs[3], 1, intr.height - 1)))
        views = [(v.depth, v.pose) for v in snap.views]
        estimate = locate(jittered, views, table_z=world.table_z)

        clean = WorldState(table_z=0.1, table_extent=((-0.5, 0.5), (-0.5, 0.5)),
                           seed=9000 + i)
        for obj in world.objects.values():
            clean.add_object(SimObject(name=obj.name, shape=obj.shape,
                                       position=obj.position.copy(),
                                       color=obj.color))
        reference = _reference_surface_centroid(clean, "target")
        error = float(np.linalg.norm(estimate - reference))
        worst_centroid = max(worst_centroid, error)
        assert error < CENTROID_TOL, f"scene {i}: centroid off by {error * 1e3:.2f}mm"

        merged = merge_views([depth_to_cloud(d, p) for d, p in views],
                             PERCEPTION_CFG)
        filtered = remove_plane_and_outliers(merged, world.table_z, PERCEPTION_CFG)
        clusters = cluster(filtered, PERCEPTION_CFG)
        index = {p.tobytes(): k for k, p in enumerate(filtered.points)}
        got = {frozenset(index[p.tobytes()] for p in c.points) for c in clusters}
        want = _all_pairs_partition(filtered.points, PERCEPTION_CFG.link_distance,
                                    PERCEPTION_CFG.min_cluster_points)
        assert got == want, f"scene {i}: cluster partition diverges from union-find"

    worst_pixel = 0.0
    identity = CameraPose(rotation=np.eye(3), translation=np.zeros(3))
    for pose in (identity, _tilted_pose()):
        for _ in range(200):
            u = float(rng.uniform(0, intr.width - 1e-6))
            v = float(rng.uniform(0, intr.height - 1e-6))
            d = float(rng.uniform(0.25, 2.5))
            u2, v2, d2 = project(deproject((u, v), d, intr, pose), intr, pose)
            worst_pixel = max(worst_pixel, abs(u2 - u), abs(v2 - v))
            assert abs(u2 - u) < REPROJECTION_TOL
            assert abs(v2 - v) < REPROJECTION_TOL
            assert abs(d2 - d) < 1e-9
    _passed(f"{SCENE_COUNT} scenes: worst centroid error "
            f"{worst_centroid * 1e3:.2f}mm (tolerance 5mm), cluster partitions "
            f"identical to all-pairs union-find; worst reprojection error "
            f"{worst_pixel:.2e}px over 400 samples")


# ----------------------------------------------------------------------
# Plan rule fixtures and full-suite trace hygiene
# ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def suite_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance_suite")
    paths = [p for _, p in sorted(builtin_scenarios().items())]
    report = run_suite(paths, out)
    return report, out


def test_plan_rule_fixtures_and_suite_traces_are_clean(suite_run):
    plans_dir = FIXTURES / "plans"
    manifest = json.loads((plans_dir / "manifest.json").read_text())
    graph = SceneGraph.from_json((plans_dir / manifest["graph"]).read_text())
    flagged = total = 0
    for entry in manifest["plans"]:
        plan = parse_plan((plans_dir / entry["file"]).read_text())
        found = [(v.rule_id, v.step_index) for v in validate_plan(plan, graph)]
        expected = [tuple(v) for v in entry["violations"]]
        assert found == expected, (
            f"{entry['file']}: checker found {found}, labelled {expected}")
        total += 1
        flagged += bool(expected)

    report, out = suite_run
    traces = sorted((out / "traces").glob("*.ndjson"))
    assert traces, "suite run produced no traces"
    for path in traces:
        assert lint_trace(load_trace(path)) == [], f"lint problems in {path.name}"

    # The scripted suite itself must stay at its known scores while doing so.
    for summary in report["scenarios"]:
        expected_tcr = 80.0 if summary["scenario"] == "I-B1" else 100.0
        assert summary["pf_pct"] == 100.0
        assert summary["tcr_pct"] == expected_tcr
        assert summary["sgh_pct"] == 100.0
    _passed(f"plan checker matched all {total} labelled fixtures "
            f"({flagged} flawed, {total - flagged} clean) with no extra or "
            f"missed findings; {len(traces)} suite traces lint clean")


# ----------------------------------------------------------------------
# Fault recovery: one slip retries, persistent slips escalate
# ----------------------------------------------------------------------

FAULT_SCENARIO = {
    "id": "acc-fault",
    "title": "Grasp slip recovery",
    "task": "relocate",
    "request": "Move the puck to a free spot.",
    "trials": 1,
    "seed": 4100,
    "table": {"z": 0.0, "extent": [[-0.45, 0.45], [-0.3, 0.3]]},
    "objects": [
        {"name": "puck", "shape": {"kind": "cylinder", "r": 0.03, "h": 0.03},
         "position": [0.1, 0.05], "color": "blue", "category": "toy"},
        {"name": "mug", "shape": {"kind": "cylinder", "r": 0.04, "h": 0.09},
         "position": [-0.3, 0.15], "color": "red", "category": "dishware"},
    ],
    "graph": {
        "workspace": {"affordance": ["None"], "contains": ["table"],
                      "position_in_cartesian_space": "irrelevant",
                      "things_to_know": "None", "coordinates": []},
        "table": {"affordance": ["fixed in space"], "contains": ["puck", "mug"],
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
}


def _decisions(events: list[dict], action: str) -> list[dict]:
    return [e for e in events
            if (e["payload"].get("decision") or {}).get("action") == action]


def test_grasp_fault_retry_and_escalation(tmp_path):
    once = copy.deepcopy(FAULT_SCENARIO)
    once["faults"] = [{"kind": "grasp_slip", "probability": 1.0,
                       "one_shot": True}]
    report, session = run_trial(parse_scenario(once), 0, trace_dir=tmp_path)
    trace = load_trace(tmp_path / "acc-fault-t00.ndjson")
    assert (report.pf, report.tcr, report.sgh) == (1, 1, 1.0)
    assert session.state.value == "Done"
    assert len(_decisions(trace, "retry")) == 1
    assert lint_trace(trace) == []

    stuck = copy.deepcopy(FAULT_SCENARIO)
    stuck["id"] = "acc-jam"
    stuck["faults"] = [{"kind": "grasp_slip", "probability": 1.0,
                        "one_shot": False}]
    scenario = parse_scenario(stuck)
    report, session = run_trial(scenario, 0, trace_dir=tmp_path)
    trace = load_trace(tmp_path / "acc-jam-t00.ndjson")
    assert session.state.value == "Done"  # finished by skipping, not wedged
    suggestions = _decisions(trace, "suggest")
    assert len(suggestions) == 1
    assert suggestions[0]["payload"]["decision"]["options"] == ["skip",
                                                                "reposition"]
    before = [e for e in trace
              if e["kind"] == "tool_result" and not e["payload"]["ok"]
              and e["payload"].get("failure_kind") == "grasp"
              and e["ts"] < suggestions[0]["ts"]]
    assert len(before) == 3  # escalation follows exactly three straight slips
    assert lint_trace(trace) == []

    first = (tmp_path / "acc-jam-t00.ndjson").read_bytes()
    run_trial(scenario, 0, trace_dir=tmp_path)
    assert (tmp_path / "acc-jam-t00.ndjson").read_bytes() == first
    _passed("one-shot slip recovered by a single retry (task complete); "
            "persistent slip escalated after 3 failures with skip/reposition "
            "options; both traces lint clean and replay byte-identically")


# ----------------------------------------------------------------------
# Fault statistics: reported rate equals seed enumeration
# ----------------------------------------------------------------------

def test_point_fault_rate_matches_hand_count(tmp_path):
    path = builtin_scenarios()["I-B1"]
    scenario = load_scenario(path)
    report = run_suite([path], tmp_path)

    # Enumerate which trials must fail straight from the seeds: trial i uses
    # world seed 1300+i, and the fault stream's first draw decides whether
    # the 40% localization bias fires on the single point query.
    predicted = {i for i in range(scenario.trials)
                 if np.random.default_rng([scenario.seed + i, 77]).uniform() < 0.4}
    assert predicted == {4, 6, 13, 14}

    summary = report["scenarios"][0]
    assert summary["trials"] == 20
    per_trial = {r["trial"]: r["tcr"] for r in summary["results"]}
    assert per_trial == {i: 0 if i in predicted else 1 for i in range(20)}
    assert summary["tcr_pct"] == 100.0 * (20 - len(predicted)) / 20 == 80.0
    assert summary["pf_pct"] == 100.0
    assert summary["sgh_pct"] == 100.0

    golden = (FIXTURES / "I-B1_table.txt").read_bytes()
    assert (tmp_path / "table.txt").read_bytes() == golden
    _passed("biased-point scenario failed exactly the 4 seed-predicted trials "
            "of 20 (TCR 80.0%); rendered table matches the golden fixture "
            "byte-for-byte")


# ----------------------------------------------------------------------
# Reproducibility: identical runs, identical bytes
# ----------------------------------------------------------------------

def test_repeated_suite_runs_are_byte_identical(tmp_path):
    paths = [builtin_scenarios()["I-B1"], builtin_scenarios()["III-A"]]
    first, second = tmp_path / "first", tmp_path / "second"
    run_suite(paths, first)
    run_suite(paths, second)

    for name in ("report.json", "table.txt"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    first_traces = sorted((first / "traces").glob("*.ndjson"))
    second_traces = sorted((second / "traces").glob("*.ndjson"))
    assert [p.name for p in first_traces] == [p.name for p in second_traces]
    assert first_traces, "no traces written"
    for a, b in zip(first_traces, second_traces):
        assert a.read_bytes() == b.read_bytes()
    _passed(f"two identical suite runs (25 trials) agree byte-for-byte on "
            f"report, table and all {len(first_traces)} traces")
