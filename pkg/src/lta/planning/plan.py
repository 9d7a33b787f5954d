"""Plan text grammar.

A plan is a numbered list of tool invocations::

    1. scan_and_update_coordinates_in_scene_graph(object_names=[orange, apple])
    2. get_a_specific_coordinate_point_using_vlm(prompt="a free spot on the table")
    3. pick_object(object_name=orange)
    4. place_object(object_name=orange, coordinates=$step2.out)

Values may be bare identifiers, JSON literals (quoted strings, numbers,
lists) or ``$stepK.out[.field...]`` placeholders that bind at execution time
to the output of an EARLIER step. Anything after the numbered steps is kept
as free-text rationale.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Iterator


class PlanParseError(Exception):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class Placeholder:
    """Deferred reference to the output of a previous step."""

    step: int
    path: tuple[str, ...] = ()

    def __str__(self) -> str:
        suffix = "".join(f".{part}" for part in self.path)
        return f"$step{self.step}.out{suffix}"


_PLACEHOLDER_RE = re.compile(r"^\$step(\d+)\.out((?:\.[A-Za-z0-9_]+)*)$")


def placeholder_from_str(text: str) -> Placeholder | None:
    match = _PLACEHOLDER_RE.match(text.strip())
    if match is None:
        return None
    path = tuple(p for p in match.group(2).split(".") if p)
    return Placeholder(step=int(match.group(1)), path=path)


@dataclass(frozen=True)
class PlanStep:
    tool: str
    args: dict[str, Any] = field(default_factory=dict)
    note: str = ""

    def __post_init__(self):
        object.__setattr__(self, "args", dict(self.args))


@dataclass(frozen=True)
class Plan:
    steps: tuple[PlanStep, ...]
    rationale: str = ""

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    def __len__(self) -> int:
        return len(self.steps)


_BARE_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_STEP_RE = re.compile(r"^\s*(\d+)\.\s*([A-Za-z_][A-Za-z0-9_]*)\((.*)\)\s*(?:#\s*(.*))?$")


def _split_top_level(text: str) -> Iterator[str]:
    """Split on commas that are not inside quotes or brackets."""
    depth = 0
    quoted = False
    start = 0
    i = 0
    while i < len(text):
        ch = text[i]
        if quoted:
            if ch == "\\":
                i += 1
            elif ch == '"':
                quoted = False
        elif ch == '"':
            quoted = True
        elif ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
        elif ch == "," and depth == 0:
            yield text[start:i]
            start = i + 1
        i += 1
    tail = text[start:]
    if tail.strip() or start < len(text):
        yield tail


def _parse_value(raw: str, line: int) -> Any:
    token = raw.strip()
    if not token:
        raise PlanParseError(line, "empty argument value")
    ph = placeholder_from_str(token)
    if ph is not None:
        return ph
    if token.startswith("[") and token.endswith("]"):
        inner = token[1:-1].strip()
        if not inner:
            return []
        return [_parse_value(part, line) for part in _split_top_level(inner)]
    if token.startswith('"'):
        try:
            return json.loads(token)
        except json.JSONDecodeError as exc:
            raise PlanParseError(line, f"bad quoted string {token!r}: {exc}")
    if _BARE_RE.match(token):
        if token in ("true", "false"):
            return token == "true"
        if token == "null":
            return None
        return token
    try:
        return json.loads(token)
    except json.JSONDecodeError:
        raise PlanParseError(line, f"cannot parse value {token!r}")


def _parse_args(raw: str, line: int) -> dict[str, Any]:
    args: dict[str, Any] = {}
    if not raw.strip():
        return args
    for chunk in _split_top_level(raw):
        if "=" not in chunk:
            raise PlanParseError(line, f"argument {chunk.strip()!r} lacks '='")
        key, value = chunk.split("=", 1)
        key = key.strip()
        if not _BARE_RE.match(key):
            raise PlanParseError(line, f"bad argument name {key!r}")
        if key in args:
            raise PlanParseError(line, f"duplicate argument {key!r}")
        args[key] = _parse_value(value, line)
    return args


def _check_placeholders(value: Any, step_number: int, line: int) -> None:
    if isinstance(value, Placeholder):
        if value.step >= step_number:
            raise PlanParseError(
                line, f"placeholder {value} must reference an earlier step")
        if value.step < 1:
            raise PlanParseError(line, f"placeholder {value} step out of range")
    elif isinstance(value, list):
        for item in value:
            _check_placeholders(item, step_number, line)


def parse_plan(text: str) -> Plan:
    steps: list[PlanStep] = []
    rationale_lines: list[str] = []
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line:
            continue
        match = _STEP_RE.match(line)
        if match is None:
            rationale_lines.append(line)
            continue
        number = int(match.group(1))
        if number != len(steps) + 1:
            raise PlanParseError(
                lineno, f"expected step {len(steps) + 1}, found {number}")
        tool = match.group(2)
        args = _parse_args(match.group(3), lineno)
        for value in args.values():
            _check_placeholders(value, number, lineno)
        steps.append(PlanStep(tool=tool, args=args,
                              note=(match.group(4) or "").strip()))
    if not steps:
        raise PlanParseError(1, "no plan steps found")
    return Plan(steps=tuple(steps), rationale="\n".join(rationale_lines))


def _render_value(value: Any) -> str:
    if isinstance(value, Placeholder):
        return str(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "null"
    if isinstance(value, str):
        if _BARE_RE.match(value) and value not in ("true", "false", "null"):
            return value
        return json.dumps(value)
    if isinstance(value, (int, float)):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_render_value(v) for v in value) + "]"
    raise TypeError(f"cannot render plan value {value!r}")


def render_plan(plan: Plan) -> str:
    lines = []
    for idx, step in enumerate(plan.steps, start=1):
        args = ", ".join(f"{k}={_render_value(v)}" for k, v in step.args.items())
        suffix = f"  # {step.note}" if step.note else ""
        lines.append(f"{idx}. {step.tool}({args}){suffix}")
    if plan.rationale:
        lines.append("")
        lines.append(plan.rationale)
    return "\n".join(lines)
