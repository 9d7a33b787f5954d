"""Command line front end: batch evaluation runs, the HTTP service,
trace replay, plan validation and scene-graph diffing."""

from __future__ import annotations

import argparse
import dataclasses
import json
import re
import sys
from pathlib import Path
from typing import Optional

from .backends.remote import BackendUnavailable
from .backends.vlm import ScriptedVlm
from .eval.scenario import Scenario, build_trial, builtin_scenarios, \
    load_scenario
from .eval.scoring import score_pf, score_sgh, score_tcr
from .eval.suite import TrialReport, make_backends, render_table, run_suite, \
    scripted_planner, summarize
from .orchestrator.session import Session, SessionState
from .orchestrator.tools import ToolExecutor
from .orchestrator.trace import ReplayMismatch, load_trace, replay_trace
from .planning.plan import PlanParseError, parse_plan, render_plan
from .planning.rules import validate_plan
from .scene_graph import SceneGraph, SceneGraphError, diff

_TRACE_NAME_RE = re.compile(r"(?P<id>.+)-t(?P<trial>\d+)$")
_TERMINAL = (SessionState.DONE, SessionState.FAILED)


def _resolve_scenario(ref: str) -> Path:
    """Accept either a path to a scenario file or the id of a built-in."""
    path = Path(ref)
    if path.exists():
        return path
    builtin = builtin_scenarios()
    if ref in builtin:
        return builtin[ref]
    raise SystemExit(f"error: no scenario file or built-in named {ref!r} "
                     f"(built-ins: {', '.join(sorted(builtin))})")


# ----------------------------------------------------------------------
# run
# ----------------------------------------------------------------------

def _prompt_choice(options: list[str]) -> str:
    while True:
        answer = input(f"choose one of {options}: ").strip().lower()
        if answer in options:
            return answer
        print(f"unrecognized answer {answer!r}")


def _run_interactive_trial(scenario: Scenario, index: int,
                           backend: str, trace_dir: Path) -> TrialReport:
    world, graph = build_trial(scenario, index)
    initial = {name: world.obj(name).position.copy()
               for name in world.objects}
    trace_name = f"{scenario.id}-t{index:02d}.ndjson"
    try:
        vlm, planner, chat = make_backends(scenario, graph, world, backend)
    except BackendUnavailable as exc:
        print(f"trial {index}: backend unavailable ({exc}); excluded")
        return TrialReport(scenario.id, index, None, None, None,
                           excluded=True, trace_path="")
    session = Session(world, graph, vlm=vlm, planner=planner, chat=chat,
                      mode=scenario.mode, interactive=True,
                      session_id=f"{scenario.id}-t{index}")
    session.submit_request(scenario.request)
    while session.state not in _TERMINAL:
        if session.state is SessionState.AWAIT_CONFIRMATION:
            print(f"\nProposed plan for trial {index}:\n")
            print(render_plan(session.plan))
            answer = input("Execute this plan? [y/N] ").strip().lower()
            session.confirm(answer in ("y", "yes"))
        elif session.state is SessionState.AWAIT_INTERVENTION:
            suggestion = session.pending_suggestion or {}
            print(f"\n{suggestion.get('text', 'The robot is stuck.')}")
            session.intervene(_prompt_choice(
                list(suggestion.get("options", ("skip",))) + ["abort"]))
        else:  # pragma: no cover - defensive; _drive leaves only await states
            break

    trace_dir.mkdir(parents=True, exist_ok=True)
    session.trace.write(trace_dir / trace_name)
    if session.excluded:
        return TrialReport(scenario.id, index, None, None, None,
                           excluded=True,
                           trace_path=f"{trace_dir.name}/{trace_name}")
    done = session.state is SessionState.DONE
    report = TrialReport(
        scenario.id, index,
        pf=score_pf(session.plan, graph, scenario),
        tcr=score_tcr(done, world, scenario, initial),
        sgh=score_sgh(session.executor.graph, world, scenario),
        excluded=False, trace_path=f"{trace_dir.name}/{trace_name}")
    print(f"trial {index}: state={session.state.value} pf={report.pf} "
          f"tcr={report.tcr} sgh={report.sgh:.2f}")
    return report


def _cmd_run(args: argparse.Namespace) -> int:
    path = _resolve_scenario(args.scenario)
    out = Path(args.report)
    if args.mode == "batch":
        report = run_suite([path], out, backend=args.backend,
                           trials_override=args.trials,
                           seed_override=args.seed)
        print(render_table_from_report(report))
        print(f"report written to {out / 'report.json'}")
        return 0

    scenario = load_scenario(path)
    if args.trials is not None:
        scenario = dataclasses.replace(scenario, trials=args.trials)
    if args.seed is not None:
        scenario = dataclasses.replace(scenario, seed=args.seed)
    out.mkdir(parents=True, exist_ok=True)
    trials = [_run_interactive_trial(scenario, index, args.backend,
                                     out / "traces")
              for index in range(scenario.trials)]
    summary = summarize(scenario, trials)
    print()
    print(render_table([summary]))
    entry = summary.to_dict()
    entry["results"] = [t.to_dict() for t in trials]
    (out / "report.json").write_text(json.dumps(
        {"backend": args.backend, "scenarios": [entry]},
        indent=2, sort_keys=True) + "\n")
    return 0


def render_table_from_report(report: dict) -> str:
    from .eval.suite import ScenarioSummary

    summaries = [ScenarioSummary(
        scenario_id=entry["scenario"], title=entry["title"],
        trials=entry["trials"], excluded=entry["excluded"],
        pf_pct=entry["pf_pct"], tcr_pct=entry["tcr_pct"],
        sgh_pct=entry["sgh_pct"]) for entry in report["scenarios"]]
    return render_table(summaries)


# ----------------------------------------------------------------------
# serve
# ----------------------------------------------------------------------

def _cmd_serve(args: argparse.Namespace) -> int:
    from .orchestrator.service import serve

    path = _resolve_scenario(args.scenario)
    serve(str(path), port=args.port, host=args.host, token=args.token)
    return 0


# ----------------------------------------------------------------------
# replay
# ----------------------------------------------------------------------

def _cmd_replay(args: argparse.Namespace) -> int:
    trace_path = Path(args.trace)
    if not trace_path.exists():
        raise SystemExit(f"error: no trace file {trace_path}")

    trial: Optional[int] = args.trial
    scenario_ref: Optional[str] = args.scenario
    if scenario_ref is None or trial is None:
        match = _TRACE_NAME_RE.match(trace_path.stem)
        if match is None:
            raise SystemExit(
                "error: trace name does not follow '<scenario>-tNN.ndjson'; "
                "pass --scenario and --trial explicitly")
        scenario_ref = scenario_ref or match.group("id")
        trial = trial if trial is not None else int(match.group("trial"))

    scenario = load_scenario(_resolve_scenario(scenario_ref))
    world, graph = build_trial(scenario, trial)
    vlm = ScriptedVlm(world) if scenario.mode == "vlm" else None
    executor = ToolExecutor(world, graph, vlm=vlm,
                            planner=scripted_planner(scenario, graph, world),
                            mode=scenario.mode)
    events = load_trace(trace_path)
    try:
        replay_trace(events, executor)
    except ReplayMismatch as exc:
        print(f"replay mismatch: {exc}")
        return 1
    print(f"replayed {len(events)} events from {trace_path.name} against "
          f"{scenario.id} trial {trial}; all tool outcomes match")
    return 0


# ----------------------------------------------------------------------
# validate-plan
# ----------------------------------------------------------------------

def _load_graph_file(path: str) -> SceneGraph:
    try:
        return SceneGraph.from_json(Path(path).read_text())
    except (OSError, SceneGraphError) as exc:
        raise SystemExit(f"error: cannot read scene graph {path}: {exc}")


def _cmd_validate_plan(args: argparse.Namespace) -> int:
    plan_text = Path(args.plan).read_text()
    graph = _load_graph_file(args.graph)
    try:
        plan = parse_plan(plan_text)
    except PlanParseError as exc:
        print(f"unparseable plan: {exc}")
        return 1
    violations = validate_plan(plan, graph)
    for violation in violations:
        label = "warning" if violation.is_warning else "error"
        print(f"{violation.rule_id} {label} at step "
              f"{violation.step_index}: {violation.message}")
    errors = [v for v in violations if not v.is_warning]
    if not violations:
        print(f"plan OK ({len(plan.steps)} steps, no rule violations)")
    return 1 if errors else 0


# ----------------------------------------------------------------------
# graph-diff
# ----------------------------------------------------------------------

def _cmd_graph_diff(args: argparse.Namespace) -> int:
    old = _load_graph_file(args.old)
    new = _load_graph_file(args.new)
    delta = diff(old, new)
    if delta.is_empty():
        print("graphs are identical")
        return 0
    for name in delta.added:
        print(f"added node {name}")
    for name in delta.removed:
        print(f"removed node {name}")
    for change in delta.reparented:
        print(f"reparented {change.node}: "
              f"{change.old_parent} -> {change.new_parent}")
    for change in delta.attribute_changes:
        print(f"changed {change.node}.{change.attribute}: "
              f"{change.old!r} -> {change.new!r}")
    return 1


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lta",
        description="Desk-scale language-to-action stack: run scripted "
                    "evaluations, serve interactive sessions, replay and "
                    "inspect traces.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and score it")
    run.add_argument("--scenario", required=True,
                     help="scenario file or built-in id (e.g. I-A)")
    run.add_argument("--trials", type=int, default=None,
                     help="override the scenario's trial count")
    run.add_argument("--seed", type=int, default=None,
                     help="override the scenario's base seed")
    run.add_argument("--backend", choices=("scripted", "remote"),
                     default="scripted")
    run.add_argument("--mode", choices=("batch", "interactive"),
                     default="batch")
    run.add_argument("--report", default="report",
                     help="directory for report.json, table.txt and traces/")
    run.set_defaults(func=_cmd_run)

    serve = sub.add_parser("serve", help="serve interactive sessions "
                                         "over HTTP")
    serve.add_argument("--port", type=int, default=8080)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--scenario", required=True,
                       help="scenario file or built-in id")
    serve.add_argument("--token", default=None,
                       help="require this static bearer token on every route")
    serve.set_defaults(func=_cmd_serve)

    replay = sub.add_parser("replay", help="re-execute a recorded trace "
                                           "and verify it")
    replay.add_argument("--trace", required=True)
    replay.add_argument("--scenario", default=None,
                        help="scenario file or id (default: from trace name)")
    replay.add_argument("--trial", type=int, default=None,
                        help="trial index (default: from trace name)")
    replay.set_defaults(func=_cmd_replay)

    vp = sub.add_parser("validate-plan", help="check a plan against the "
                                              "ordering and grounding rules")
    vp.add_argument("--plan", required=True, help="numbered plan text file")
    vp.add_argument("--graph", required=True, help="scene graph JSON file")
    vp.set_defaults(func=_cmd_validate_plan)

    gd = sub.add_parser("graph-diff", help="structural diff of two scene "
                                           "graph files")
    gd.add_argument("old")
    gd.add_argument("new")
    gd.set_defaults(func=_cmd_graph_diff)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
