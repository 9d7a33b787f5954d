"""Deterministic stand-in for the grounding/VQA models.

Answers are derived from simulator ground truth restricted to what the
camera could actually see (the visible set of the capture), then pushed
through the same wire formats a remote model would use. Noise — presence
flips and bbox jitter — comes from named world RNG streams so a seed fully
determines every reply.

The prompt grammar is deliberately narrow and documented per method;
anything outside it raises UnsupportedPrompt rather than guessing.
"""

from __future__ import annotations

import re

import numpy as np

from ..messages import UnsupportedPrompt
from ..perception.pipeline import project
from ..perception.types import BBox
from ..sim.render import CaptureResult
from ..sim.shapes import footprint_radius
from ..sim.world import WorldState
from . import wire


class ObjectNotVisible(Exception):
    def __init__(self, name: str):
        super().__init__(f"object {name!r} is not visible")
        self.name = name


_FREE_SPOT_RE = re.compile(r"free spot|temporary location|empty (spot|space)",
                           re.IGNORECASE)
_COLOR_Q_RE = re.compile(r"do you see (?:some|any|an?) (\w+) object",
                         re.IGNORECASE)
_COUNT_Q_RE = re.compile(r"how many (\w+?)s? are (?:visible|on the table)",
                         re.IGNORECASE)


class ScriptedVlm:
    def __init__(self, world: WorldState):
        self.world = world

    # -- presence ------------------------------------------------------

    def presence(self, name: str, cap: CaptureResult) -> str:
        truth = name in cap.visible
        noise = self.world.noise
        if truth and noise.presence_false_negative > 0:
            if self.world.rng("presence").uniform() < noise.presence_false_negative:
                truth = False
        elif not truth and noise.presence_false_positive > 0:
            if self.world.rng("presence").uniform() < noise.presence_false_positive:
                truth = True
        return wire.format_presence(truth)

    # -- detection -----------------------------------------------------

    def bboxes(self, names: list[str], cap: CaptureResult) -> str:
        jitter = self.world.noise.bbox_jitter_px
        rng = self.world.rng("bbox") if jitter > 0 else None
        intr = cap.views[0].depth.intrinsics
        out: list[BBox] = []
        for name in names:
            box = cap.bboxes.get(name)
            if box is None:
                continue
            if rng is not None:
                d = rng.integers(-jitter, jitter + 1, size=4)
                x1 = int(np.clip(box.x_min + d[0], 0, intr.width - 2))
                y1 = int(np.clip(box.y_min + d[1], 0, intr.height - 2))
                x2 = int(np.clip(box.x_max + d[2], x1 + 1, intr.width - 1))
                y2 = int(np.clip(box.y_max + d[3], y1 + 1, intr.height - 1))
                box = BBox(label=name, x_min=x1, y_min=y1, x_max=x2, y_max=y2)
            out.append(box)
        return wire.format_bboxes(out)

    # -- pointing ------------------------------------------------------

    def point(self, prompt: str, cap: CaptureResult) -> str:
        if _FREE_SPOT_RE.search(prompt):
            u, v = self._free_spot_pixel(cap)
            return wire.format_point(u, v, "free spot")
        if "between" in prompt.lower():
            anchors = self._mentioned(prompt)
            if len(anchors) != 2:
                raise UnsupportedPrompt(
                    f"'between' prompt must name exactly two known objects: "
                    f"{prompt!r}")
            centers = []
            for name in anchors:
                box = cap.bboxes.get(name)
                if box is None:
                    raise ObjectNotVisible(name)
                centers.append(box.center)
            u = (centers[0][0] + centers[1][0]) / 2.0
            v = (centers[0][1] + centers[1][1]) / 2.0
            return wire.format_point(u, v, " and ".join(anchors))
        raise UnsupportedPrompt(f"cannot ground prompt {prompt!r}")

    def _mentioned(self, prompt: str) -> list[str]:
        low = prompt.lower()
        found = [(low.index(name.lower()), name)
                 for name in self.world.objects if name.lower() in low]
        return [name for _, name in sorted(found)]

    def _free_spot_pixel(self, cap: CaptureResult) -> tuple[float, float]:
        """Centre of the largest clear circle on the table, reported as a
        pixel in the top view. Grid search is coarse but deterministic."""
        world = self.world
        (x0, x1), (y0, y1) = world.table_extent
        margin = 0.06
        xs = np.linspace(x0 + margin, x1 - margin, 41)
        ys = np.linspace(y0 + margin, y1 - margin, 41)
        obstacles = [(np.array(o.xy), footprint_radius(o.shape))
                     for o in world.resting()]
        best = None
        best_clear = -np.inf
        for y in ys:
            for x in xs:
                clear = min(x - x0, x1 - x, y - y0, y1 - y)
                for centre, radius in obstacles:
                    gap = float(np.hypot(x - centre[0], y - centre[1])) - radius
                    clear = min(clear, gap)
                if clear > best_clear + 1e-12:
                    best_clear = clear
                    best = (x, y)
        view = cap.views[0]
        u, v, _ = project(np.array([best[0], best[1], world.table_z]),
                          view.depth.intrinsics, view.pose)
        return float(round(u, 1)), float(round(v, 1))

    # -- VQA -----------------------------------------------------------

    def vqa(self, question: str, cap: CaptureResult) -> str:
        match = _COLOR_Q_RE.search(question)
        if match:
            colour = match.group(1).lower()
            hits = sorted(name for name in cap.visible
                          if self.world.objects[name].color.lower() == colour)
            return "yes: " + ", ".join(hits) if hits else "no"
        match = _COUNT_Q_RE.search(question)
        if match:
            word = match.group(1).lower()
            count = sum(1 for name in cap.visible
                        if self.world.objects[name].category.lower() == word)
            return str(count)
        raise UnsupportedPrompt(f"cannot answer question {question!r}")
