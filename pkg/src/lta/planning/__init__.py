"""Plan grammar, planning prompt assembly, rule validation and the
built-in symbolic solvers."""

from .plan import (Placeholder, Plan, PlanParseError, PlanStep, parse_plan,
                   placeholder_from_str, render_plan)
from .rules import RuleViolation, validate_plan
from .prompt import build_planning_request
from . import solvers

__all__ = ["Placeholder", "Plan", "PlanParseError", "PlanStep", "parse_plan",
           "placeholder_from_str", "render_plan", "RuleViolation",
           "validate_plan", "build_planning_request", "solvers"]
