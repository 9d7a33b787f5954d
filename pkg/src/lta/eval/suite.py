"""Suite runner: executes scenario trials, scores them and renders the
summary table.

Each trial builds a fresh world + graph from the scenario (seed + trial
index), runs one batch session against the selected backends, then scores
PF from the adopted plan, TCR from the simulator's final state and SGH
from the final scene graph. Trials that lose the backend entirely are
marked excluded and drop out of every denominator.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Sequence

from ..backends.chat import ScriptedChat
from ..backends.vlm import ScriptedVlm
from ..messages import BackendUnavailable
from ..orchestrator.session import Session, SessionState
from ..planning.plan import render_plan
from ..planning.prompt import build_planning_request
from ..planning.solvers import build_plan
from ..orchestrator.tools import tool_descriptions
from ..sim import render
from .scenario import Scenario, build_trial, load_scenario
from .scoring import score_pf, score_sgh, score_tcr


@dataclass(frozen=True)
class TrialReport:
    scenario_id: str
    trial_index: int
    pf: Optional[int]
    tcr: Optional[int]
    sgh: Optional[float]
    excluded: bool
    trace_path: str

    def to_dict(self) -> dict[str, Any]:
        return {"scenario": self.scenario_id, "trial": self.trial_index,
                "pf": self.pf, "tcr": self.tcr, "sgh": self.sgh,
                "excluded": self.excluded, "trace": self.trace_path}


@dataclass(frozen=True)
class ScenarioSummary:
    scenario_id: str
    title: str
    trials: int
    excluded: int
    pf_pct: Optional[float]
    tcr_pct: Optional[float]
    sgh_pct: Optional[float]

    def to_dict(self) -> dict[str, Any]:
        return {"scenario": self.scenario_id, "title": self.title,
                "trials": self.trials, "excluded": self.excluded,
                "pf_pct": self.pf_pct, "tcr_pct": self.tcr_pct,
                "sgh_pct": self.sgh_pct}


# ----------------------------------------------------------------------
# Backends
# ----------------------------------------------------------------------

_CAPTURE_TASKS = ("stacking", "sorting", "organize")


def scripted_planner(scenario: Scenario, graph, world):
    """Planner bound to the plan-time graph and, for the size-sensitive
    task families, an initial capture of the scene."""

    def planner(request: str) -> str:
        capture = None
        if scenario.task in _CAPTURE_TASKS:
            capture = render.capture(world)
        return render_plan(build_plan(scenario.task, request, graph, capture))

    return planner


def _remote_planner(scenario: Scenario, graph):
    from ..backends.remote import RemoteConfig, RemotePlanner

    client = RemotePlanner(RemoteConfig.chat_from_env())
    tools = tool_descriptions(scenario.mode)

    def planner(request: str) -> str:
        return client.complete(build_planning_request(request, graph, tools))

    return planner


def make_backends(scenario: Scenario, graph, world, backend: str):
    """Returns (vlm, planner, chat) for one trial."""
    if backend == "scripted":
        vlm = ScriptedVlm(world) if scenario.mode == "vlm" else None
        return vlm, scripted_planner(scenario, graph, world), ScriptedChat()
    if backend == "remote":
        from ..backends.remote import RemoteChat, RemoteConfig, RemoteVlm

        vlm = (RemoteVlm(RemoteConfig.vlm_from_env())
               if scenario.mode == "vlm" else None)
        return vlm, _remote_planner(scenario, graph), \
            RemoteChat(RemoteConfig.chat_from_env())
    raise ValueError(f"unknown backend {backend!r}")


# ----------------------------------------------------------------------
# Trials
# ----------------------------------------------------------------------

def run_trial(scenario: Scenario, trial_index: int,
              backend: str = "scripted",
              trace_dir: Optional[Path] = None
              ) -> tuple[TrialReport, Optional[Session]]:
    world, graph = build_trial(scenario, trial_index)
    initial_positions = {name: world.obj(name).position.copy()
                         for name in world.objects}
    trace_name = f"{scenario.id}-t{trial_index:02d}.ndjson"

    try:
        vlm, planner, chat = make_backends(scenario, graph, world, backend)
    except BackendUnavailable:
        return TrialReport(scenario.id, trial_index, None, None, None,
                           excluded=True, trace_path=""), None

    session = Session(world, graph, vlm=vlm, planner=planner, chat=chat,
                      mode=scenario.mode,
                      intervention_policy=scenario.intervention_policy,
                      session_id=f"{scenario.id}-t{trial_index}")
    session.submit_request(scenario.request)

    trace_path = ""
    if trace_dir is not None:
        trace_dir.mkdir(parents=True, exist_ok=True)
        session.trace.write(trace_dir / trace_name)
        trace_path = f"{trace_dir.name}/{trace_name}"

    if session.excluded:
        return TrialReport(scenario.id, trial_index, None, None, None,
                           excluded=True, trace_path=trace_path), session

    done = session.state is SessionState.DONE
    report = TrialReport(
        scenario.id, trial_index,
        pf=score_pf(session.plan, graph, scenario),
        tcr=score_tcr(done, world, scenario, initial_positions),
        sgh=score_sgh(session.executor.graph, world, scenario),
        excluded=False, trace_path=trace_path)
    return report, session


def summarize(scenario: Scenario,
              trials: Sequence[TrialReport]) -> ScenarioSummary:
    scored = [t for t in trials if not t.excluded]

    def pct(values: list[float]) -> Optional[float]:
        if not scored:
            return None
        return 100.0 * sum(values) / len(values)

    return ScenarioSummary(
        scenario_id=scenario.id, title=scenario.title,
        trials=len(trials), excluded=len(trials) - len(scored),
        pf_pct=pct([t.pf for t in scored]),
        tcr_pct=pct([t.tcr for t in scored]),
        sgh_pct=pct([t.sgh for t in scored]))


def run_suite(scenario_paths: Sequence[str | Path],
              out_dir: str | Path, backend: str = "scripted",
              trials_override: Optional[int] = None,
              seed_override: Optional[int] = None) -> dict[str, Any]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace_dir = out / "traces"

    summaries: list[ScenarioSummary] = []
    detail: list[dict[str, Any]] = []
    for path in scenario_paths:
        scenario = load_scenario(path)
        if trials_override is not None:
            scenario = dataclasses.replace(scenario, trials=trials_override)
        if seed_override is not None:
            scenario = dataclasses.replace(scenario, seed=seed_override)
        trials = [run_trial(scenario, index, backend, trace_dir)[0]
                  for index in range(scenario.trials)]
        summary = summarize(scenario, trials)
        summaries.append(summary)
        entry = summary.to_dict()
        entry["results"] = [t.to_dict() for t in trials]
        detail.append(entry)

    report = {"backend": backend, "scenarios": detail}
    table = render_table(summaries)
    (out / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n")
    (out / "table.txt").write_text(table)
    return report


# ----------------------------------------------------------------------
# Rendering
# ----------------------------------------------------------------------

def render_table(summaries: Sequence[ScenarioSummary]) -> str:
    header = f"{'Experiment':<38}{'PF (%)':>8}{'TCR (%)':>9}{'SGH (%)':>9}"
    lines = [header, "-" * len(header)]
    for s in summaries:
        label = f"{s.scenario_id:<8}{s.title}"[:38]

        def cell(value: Optional[float], width: int) -> str:
            if value is None:
                return f"{'n/a':>{width}}"
            return f"{value:>{width}.1f}"

        lines.append(f"{label:<38}{cell(s.pf_pct, 8)}{cell(s.tcr_pct, 9)}"
                     f"{cell(s.sgh_pct, 9)}")
    return "\n".join(lines) + "\n"
