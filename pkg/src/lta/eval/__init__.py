"""Scenario definitions, trial scoring and the batch evaluation harness."""

from .scenario import (
    ObjectSpec,
    Scenario,
    ScenarioParseError,
    builtin_scenarios,
    build_graph,
    build_trial,
    build_world,
    load_scenario,
    parse_scenario,
)
from .scoring import (
    PredicateError,
    score_pf,
    score_sgh,
    score_tcr,
    symbolic_final_state,
)
from .suite import (
    ScenarioSummary,
    TrialReport,
    make_backends,
    render_table,
    run_suite,
    run_trial,
    scripted_planner,
    summarize,
)

__all__ = [
    "ObjectSpec",
    "PredicateError",
    "Scenario",
    "ScenarioParseError",
    "ScenarioSummary",
    "TrialReport",
    "builtin_scenarios",
    "build_graph",
    "build_trial",
    "build_world",
    "load_scenario",
    "make_backends",
    "parse_scenario",
    "render_table",
    "run_suite",
    "run_trial",
    "score_pf",
    "score_sgh",
    "score_tcr",
    "scripted_planner",
    "summarize",
    "symbolic_final_state",
]
