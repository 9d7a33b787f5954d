"""Desk-scale language-to-action stack.

A simulated tabletop robot driven through natural language: a scene-graph
world model shared with the language layer, a synthetic top-view perception
pipeline, a tool-calling session loop with plan confirmation and failure
recovery, scripted planner/VLM backends (plus remote HTTP adapters), and an
evaluation harness scoring planning feasibility, task completion and
scene-graph handling over seeded trials.
"""

from __future__ import annotations

from .scene_graph import GraphDelta, SceneGraph, SceneGraphError, diff

__version__ = "0.1.0"

__all__ = [
    "GraphDelta",
    "SceneGraph",
    "SceneGraphError",
    "diff",
    "__version__",
]
