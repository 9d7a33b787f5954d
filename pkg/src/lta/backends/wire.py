"""Exact wire formats for grounding-model answers.

Presence is a single character, detections are a JSON list of
``{"bbox_2d": [x1, y1, x2, y2], "label": name}`` entries, and point answers
are one ``<points x y>object</points>`` element. Every remote response is
run through these parsers before anything downstream sees it; the scripted
backends emit through the formatters so both routes share one contract.
"""

from __future__ import annotations

import json
import re

from ..messages import MalformedResponse
from ..perception.types import BBox


class MissingLabel(MalformedResponse):
    """A requested label is absent from the detection response."""

    def __init__(self, label: str):
        super().__init__(f"no detection for label {label!r}")
        self.label = label


def format_presence(present: bool) -> str:
    return "1" if present else "0"


def parse_presence(text: str) -> bool:
    cleaned = text.strip()
    if cleaned == "1":
        return True
    if cleaned == "0":
        return False
    raise MalformedResponse(f"presence reply must be '1' or '0', got {text!r}")


def format_bboxes(boxes: list[BBox]) -> str:
    return json.dumps([{"bbox_2d": [b.x_min, b.y_min, b.x_max, b.y_max],
                        "label": b.label} for b in boxes])


def parse_bboxes(text: str) -> list[BBox]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedResponse(f"detection reply is not JSON: {exc}") from None
    if not isinstance(data, list):
        raise MalformedResponse("detection reply must be a JSON list")
    boxes = []
    for entry in data:
        if not isinstance(entry, dict) or set(entry) != {"bbox_2d", "label"}:
            raise MalformedResponse(f"bad detection entry: {entry!r}")
        quad = entry["bbox_2d"]
        if (not isinstance(quad, list) or len(quad) != 4
                or not all(isinstance(v, (int, float)) for v in quad)):
            raise MalformedResponse(f"bad bbox_2d: {quad!r}")
        try:
            boxes.append(BBox(label=str(entry["label"]),
                              x_min=int(quad[0]), y_min=int(quad[1]),
                              x_max=int(quad[2]), y_max=int(quad[3])))
        except ValueError as exc:
            raise MalformedResponse(str(exc)) from None
    return boxes


def select_bbox(boxes: list[BBox], label: str) -> BBox:
    for box in boxes:
        if box.label == label:
            return box
    raise MissingLabel(label)


_POINT_RE = re.compile(
    r"<points\s+([+-]?[0-9]*\.?[0-9]+)\s+([+-]?[0-9]*\.?[0-9]+)\s*>"
    r"(.*?)</points>", re.DOTALL)


def format_point(u: float, v: float, label: str) -> str:
    return f"<points {u:g} {v:g}>{label}</points>"


def parse_point(text: str) -> tuple[float, float]:
    matches = _POINT_RE.findall(text)
    if len(matches) != 1:
        raise MalformedResponse(
            f"expected exactly one <points> element, found {len(matches)}")
    u, v, _label = matches[0]
    return float(u), float(v)
