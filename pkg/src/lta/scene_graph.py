"""Hierarchical scene graph: the framework's persistent world model.

Nodes carry affordance tags, free-text notes, optional 3D coordinates and an
ordered ``contains`` list encoding the containment hierarchy rooted at
``workspace``. Graph values are immutable snapshots: every mutation returns a
new graph, so sessions can hand out read-only views without locking.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Optional

ROOT_NAME = "workspace"

ATTRIBUTES = ("affordance", "contains", "position_descriptor", "things_to_know",
              "coordinates")

# Attribute name -> field name used in the JSON wire format.
_WIRE_FIELDS = {
    "affordance": "affordance",
    "contains": "contains",
    "position_descriptor": "position_in_cartesian_space",
    "things_to_know": "things_to_know",
    "coordinates": "coordinates",
}
_WIRE_TO_ATTR = {v: k for k, v in _WIRE_FIELDS.items()}
# Alias accepted on tool surfaces, where the paper-style field name is used.
_ATTR_ALIASES = {"position_in_cartesian_space": "position_descriptor"}


class SceneGraphError(Exception):
    """Base class for scene-graph failures."""


class DuplicateNameError(SceneGraphError):
    pass


class UnknownNodeError(SceneGraphError):
    pass


class UnknownParentError(SceneGraphError):
    pass


class TypeMismatchError(SceneGraphError):
    pass


class WouldCreateCycleError(SceneGraphError):
    pass


class NonFiniteValueError(SceneGraphError):
    pass


class ParseError(SceneGraphError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class SchemaError(SceneGraphError):
    def __init__(self, field_name: str, message: str = ""):
        detail = message or f"bad or missing field {field_name!r}"
        super().__init__(detail)
        self.field = field_name


def _as_str_tuple(value: Any, attribute: str) -> tuple[str, ...]:
    if value is None:
        return ()
    if isinstance(value, str) or not isinstance(value, (list, tuple)):
        raise TypeMismatchError(f"{attribute} must be a list of strings")
    out = []
    for item in value:
        if not isinstance(item, str):
            raise TypeMismatchError(f"{attribute} entries must be strings")
        out.append(item)
    return tuple(out)


class _SourceFloat(float):
    """Float that remembers exactly how it was spelled in the source text.

    JSON files written by other tooling may spell a coordinate with more
    digits than Python's shortest round-trip repr (e.g. a 17-digit dump of
    a double). Keeping the original lexeme lets to_json reproduce parsed
    files byte-for-byte; values computed in-process serialize via repr.
    """

    __slots__ = ("lexeme",)

    def __new__(cls, lexeme: str) -> "_SourceFloat":
        out = super().__new__(cls, lexeme)
        out.lexeme = lexeme
        return out


def _as_coordinates(value: Any) -> tuple[float, ...]:
    if value is None:
        return ()
    if isinstance(value, (list, tuple)):
        if len(value) == 0:
            return ()
        if len(value) != 3:
            raise TypeMismatchError("coordinates must be empty or have 3 entries")
        out = []
        for item in value:
            if isinstance(item, bool) or not isinstance(item, (int, float)):
                raise TypeMismatchError("coordinates entries must be numbers")
            if not isinstance(item, float):
                item = float(item)
            if not math.isfinite(item):
                raise TypeMismatchError("coordinates entries must be finite")
            out.append(item)
        return tuple(out)
    raise TypeMismatchError("coordinates must be a list")


@dataclass(frozen=True)
class SceneNode:
    """One entity in the workspace hierarchy."""

    name: str
    affordance: tuple[str, ...] = ()
    contains: tuple[str, ...] = ()
    position_descriptor: str = ""
    things_to_know: str = ""
    coordinates: tuple[float, ...] = ()

    def get(self, attribute: str) -> Any:
        if attribute not in ATTRIBUTES:
            raise TypeMismatchError(f"unknown attribute {attribute!r}")
        return getattr(self, attribute)

    def to_wire(self) -> dict[str, Any]:
        return {
            "affordance": list(self.affordance),
            "contains": list(self.contains),
            "position_in_cartesian_space": self.position_descriptor,
            "things_to_know": self.things_to_know,
            "coordinates": list(self.coordinates),
        }


@dataclass(frozen=True)
class AttributeChange:
    node: str
    attribute: str
    old: Any
    new: Any


@dataclass(frozen=True)
class Reparent:
    node: str
    old_parent: Optional[str]
    new_parent: Optional[str]


@dataclass(frozen=True)
class GraphDelta:
    """Difference between two graphs; applying it to the old graph yields the
    new graph exactly. ``reparented`` summarizes containment moves for
    scoring; ``attribute_changes`` alone (plus added/removed) is sufficient
    to reconstruct the new graph."""

    added: tuple[str, ...] = ()
    removed: tuple[str, ...] = ()
    attribute_changes: tuple[AttributeChange, ...] = ()
    reparented: tuple[Reparent, ...] = ()

    def is_empty(self) -> bool:
        return not (self.added or self.removed or self.attribute_changes
                    or self.reparented)


@dataclass(frozen=True)
class SceneGraph:
    """Immutable snapshot of the containment hierarchy."""

    nodes: dict[str, SceneNode] = field(default_factory=dict)
    root: str = ROOT_NAME

    @staticmethod
    def empty() -> "SceneGraph":
        return SceneGraph(nodes={ROOT_NAME: SceneNode(name=ROOT_NAME)})

    def __contains__(self, name: str) -> bool:
        return name in self.nodes

    def node(self, name: str) -> SceneNode:
        try:
            return self.nodes[name]
        except KeyError:
            raise UnknownNodeError(f"no node named {name!r}") from None

    def parent_of(self, name: str) -> Optional[str]:
        for candidate, node in self.nodes.items():
            if name in node.contains:
                return candidate
        return None

    def parents(self) -> dict[str, str]:
        out: dict[str, str] = {}
        for name, node in self.nodes.items():
            for child in node.contains:
                out[child] = name
        return out

    def descendants(self, name: str) -> set[str]:
        seen: set[str] = set()
        stack = list(self.node(name).contains)
        while stack:
            current = stack.pop()
            if current in seen:
                continue
            seen.add(current)
            stack.extend(self.nodes[current].contains)
        return seen

    def validate(self) -> None:
        """Raise if any structural invariant is violated."""
        if self.root not in self.nodes:
            raise SchemaError(self.root, f"root node {self.root!r} missing")
        parent_count: dict[str, int] = {}
        for name, node in self.nodes.items():
            if node.name != name:
                raise SchemaError(name, "node key does not match node name")
            if node.coordinates and len(node.coordinates) != 3:
                raise TypeMismatchError(f"{name}: coordinates must be empty or 3-long")
            for value in node.coordinates:
                if not math.isfinite(value):
                    raise NonFiniteValueError(f"{name}: non-finite coordinate")
            seen_children: set[str] = set()
            for child in node.contains:
                if child not in self.nodes:
                    raise UnknownNodeError(f"{name} contains unknown node {child!r}")
                if child in seen_children:
                    raise DuplicateNameError(f"{name} lists child {child!r} twice")
                seen_children.add(child)
                parent_count[child] = parent_count.get(child, 0) + 1
        for child, count in parent_count.items():
            if count > 1:
                raise DuplicateNameError(f"{child!r} has {count} parents")
        if self.root in parent_count:
            raise WouldCreateCycleError("root cannot be contained by another node")
        # Forest check: following parent links must never revisit a node.
        parents = self.parents()
        for name in self.nodes:
            seen = {name}
            current = parents.get(name)
            while current is not None:
                if current in seen:
                    raise WouldCreateCycleError(f"containment cycle through {name!r}")
                seen.add(current)
                current = parents.get(current)

    # ------------------------------------------------------------------
    # Mutations (return new snapshots)
    # ------------------------------------------------------------------

    def add_object(self, name: str, affordance: Iterable[str] = (),
                   position_descriptor: str = "", things_to_know: str = "",
                   coordinates: Iterable[float] = (),
                   parent: str = ROOT_NAME) -> "SceneGraph":
        if name in self.nodes:
            raise DuplicateNameError(f"node {name!r} already exists")
        if parent not in self.nodes:
            raise UnknownParentError(f"parent {parent!r} does not exist")
        node = SceneNode(
            name=name,
            affordance=_as_str_tuple(affordance, "affordance"),
            position_descriptor=str(position_descriptor or ""),
            things_to_know=str(things_to_know or ""),
            coordinates=_as_coordinates(list(coordinates) if coordinates else []),
        )
        nodes = dict(self.nodes)
        nodes[name] = node
        parent_node = nodes[parent]
        nodes[parent] = replace(parent_node, contains=parent_node.contains + (name,))
        out = SceneGraph(nodes=nodes, root=self.root)
        out.validate()
        return out

    def edit_attribute(self, name: str, attribute: str, value: Any) -> "SceneGraph":
        attribute = _ATTR_ALIASES.get(attribute, attribute)
        node = self.node(name)
        if attribute not in ATTRIBUTES:
            raise TypeMismatchError(f"unknown attribute {attribute!r}")
        nodes = dict(self.nodes)
        if attribute == "contains":
            children = _as_str_tuple(value, "contains")
            seen: set[str] = set()
            for child in children:
                if child in seen:
                    raise DuplicateNameError(f"child {child!r} listed twice")
                seen.add(child)
                if child not in self.nodes:
                    raise UnknownNodeError(f"no node named {child!r}")
                if child == name or name in self.descendants(child):
                    raise WouldCreateCycleError(
                        f"{child!r} is an ancestor of {name!r}")
                if child == self.root:
                    raise WouldCreateCycleError("root cannot be contained")
            # Detach the new children from their previous parents atomically.
            for child in children:
                for other_name, other in list(nodes.items()):
                    if other_name != name and child in other.contains:
                        nodes[other_name] = replace(
                            other,
                            contains=tuple(c for c in other.contains if c != child))
            nodes[name] = replace(nodes[name], contains=children)
        elif attribute == "affordance":
            nodes[name] = replace(node, affordance=_as_str_tuple(value, "affordance"))
        elif attribute == "coordinates":
            nodes[name] = replace(node, coordinates=_as_coordinates(value))
        else:
            if value is None:
                value = ""
            if not isinstance(value, str):
                raise TypeMismatchError(f"{attribute} must be a string")
            nodes[name] = replace(node, **{attribute: value})
        out = SceneGraph(nodes=nodes, root=self.root)
        out.validate()
        return out

    def set_coordinates(self, name: str, xyz: Iterable[float]) -> "SceneGraph":
        node = self.node(name)
        values: list[float] = []
        for item in xyz:
            item = float(item)
            if not math.isfinite(item):
                raise NonFiniteValueError(f"non-finite coordinate for {name!r}")
            values.append(item)
        if len(values) != 3:
            raise TypeMismatchError("coordinates must have exactly 3 entries")
        nodes = dict(self.nodes)
        nodes[name] = replace(node, coordinates=tuple(values))
        return SceneGraph(nodes=nodes, root=self.root)

    def remove_node(self, name: str) -> "SceneGraph":
        """Delete a node, splicing its children onto its parent.

        Unused by the tool surface; kept for the test harness.
        """
        if name == self.root:
            raise WouldCreateCycleError("root is never deleted")
        node = self.node(name)
        nodes = dict(self.nodes)
        del nodes[name]
        for other_name, other in list(nodes.items()):
            if name in other.contains:
                spliced = []
                for child in other.contains:
                    if child == name:
                        spliced.extend(node.contains)
                    else:
                        spliced.append(child)
                nodes[other_name] = replace(other, contains=tuple(spliced))
                break
        else:
            # Detached node: its children become detached roots.
            pass
        out = SceneGraph(nodes=nodes, root=self.root)
        out.validate()
        return out

    # ------------------------------------------------------------------
    # Serialization
    # ------------------------------------------------------------------

    def to_json(self) -> str:
        payload = {name: node.to_wire() for name, node in self.nodes.items()}
        return _emit_json(payload, 0)

    @staticmethod
    def from_json(text: str) -> "SceneGraph":
        try:
            payload = json.loads(text, parse_float=_SourceFloat)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, line=exc.lineno, column=exc.colno) from exc
        if not isinstance(payload, dict):
            raise SchemaError("<root>", "top level must be a JSON object")
        nodes: dict[str, SceneNode] = {}
        for name, body in payload.items():
            if not isinstance(body, dict):
                raise SchemaError(name, f"node {name!r} must be an object")
            for wire_field in _WIRE_TO_ATTR:
                if wire_field not in body:
                    raise SchemaError(wire_field,
                                      f"node {name!r} missing field {wire_field!r}")
            for wire_field in body:
                if wire_field not in _WIRE_TO_ATTR:
                    raise SchemaError(wire_field,
                                      f"node {name!r} has unknown field {wire_field!r}")
            try:
                node = SceneNode(
                    name=name,
                    affordance=_as_str_tuple(body["affordance"], "affordance"),
                    contains=_as_str_tuple(body["contains"], "contains"),
                    position_descriptor=str(body["position_in_cartesian_space"] or ""),
                    things_to_know=str(body["things_to_know"] or ""),
                    coordinates=_as_coordinates(body["coordinates"]),
                )
            except TypeMismatchError as exc:
                raise SchemaError(name, f"node {name!r}: {exc}") from exc
            nodes[name] = node
        graph = SceneGraph(nodes=nodes)
        graph.validate()
        return graph

    def render_for_prompt(self) -> str:
        """Deterministic text form of the graph, as sent to planner models."""
        return self.to_json()


def _emit_json(value: Any, indent: int) -> str:
    """json.dumps(indent=2)-compatible writer that additionally emits
    source-preserving floats with their original lexeme."""
    pad = " " * indent
    if isinstance(value, dict):
        if not value:
            return "{}"
        parts = [f'{pad}  {json.dumps(str(key))}: {_emit_json(item, indent + 2)}'
                 for key, item in value.items()]
        return "{\n" + ",\n".join(parts) + "\n" + pad + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        parts = [f"{pad}  {_emit_json(item, indent + 2)}" for item in value]
        return "[\n" + ",\n".join(parts) + "\n" + pad + "]"
    if isinstance(value, _SourceFloat):
        return value.lexeme
    return json.dumps(value)


def diff(old: SceneGraph, new: SceneGraph) -> GraphDelta:
    """Structural difference; ``apply_delta(old, diff(old, new)) == new``."""
    added = tuple(name for name in new.nodes if name not in old.nodes)
    removed = tuple(name for name in old.nodes if name not in new.nodes)
    blank = SceneNode(name="")
    changes: list[AttributeChange] = []
    for name, node in new.nodes.items():
        base = old.nodes.get(name)
        for attribute in ATTRIBUTES:
            new_value = node.get(attribute)
            old_value = blank.get(attribute) if base is None else base.get(attribute)
            if new_value != old_value:
                changes.append(AttributeChange(
                    node=name, attribute=attribute,
                    old=None if base is None else old_value, new=new_value))
    old_parents = old.parents()
    new_parents = new.parents()
    reparented: list[Reparent] = []
    for name in new.nodes:
        before = old_parents.get(name) if name in old.nodes else None
        after = new_parents.get(name)
        if before != after:
            reparented.append(Reparent(node=name, old_parent=before, new_parent=after))
    return GraphDelta(added=added, removed=removed,
                      attribute_changes=tuple(changes),
                      reparented=tuple(reparented))


def apply_delta(graph: SceneGraph, delta: GraphDelta) -> SceneGraph:
    nodes = dict(graph.nodes)
    for name in delta.removed:
        if name not in nodes:
            raise UnknownNodeError(f"cannot remove unknown node {name!r}")
        del nodes[name]
    for name, node in list(nodes.items()):
        pruned = tuple(c for c in node.contains if c in nodes)
        if pruned != node.contains:
            nodes[name] = replace(node, contains=pruned)
    for name in delta.added:
        if name in nodes:
            raise DuplicateNameError(f"cannot add existing node {name!r}")
        nodes[name] = SceneNode(name=name)
    for change in delta.attribute_changes:
        if change.node not in nodes:
            raise UnknownNodeError(f"change targets unknown node {change.node!r}")
        node = nodes[change.node]
        if change.attribute == "contains":
            value: Any = _as_str_tuple(change.new, "contains")
        elif change.attribute == "affordance":
            value = _as_str_tuple(change.new, "affordance")
        elif change.attribute == "coordinates":
            value = _as_coordinates(list(change.new) if change.new else [])
        else:
            value = str(change.new or "")
        nodes[change.node] = replace(node, **{change.attribute: value})
    out = SceneGraph(nodes=nodes, root=graph.root)
    out.validate()
    return out
