"""Deterministic desk-scale manipulation simulator."""

from .shapes import (Box, Cylinder, Disc, Shape, Sphere, fits_on_top,
                     footprint_radius, overlap_fraction, shape_height)
from .world import (FAULT_KINDS, Fault, GraspMissedError, GripperEmptyError,
                    GripperOccupiedDuringCaptureError, GripperOccupiedError,
                    NoiseConfig, NotGraspableError, ObjectCoveredError,
                    ObjectInsideClosedContainerError, OutOfWorkspaceError,
                    PlacementCollisionError, SimError, SimObject,
                    UnknownFaultKindError, UnknownObjectError, WorldState)
from .render import (BACKGROUND_ID, DEFAULT_INTRINSICS, TABLE_ID,
                     CaptureDropoutError, CaptureResult, ViewCapture, capture,
                     render_view, truth_bboxes, vantage_poses)

__all__ = [
    "Box", "Cylinder", "Disc", "Shape", "Sphere", "fits_on_top",
    "footprint_radius", "overlap_fraction", "shape_height",
    "FAULT_KINDS", "Fault", "GraspMissedError", "GripperEmptyError",
    "GripperOccupiedDuringCaptureError", "GripperOccupiedError", "NoiseConfig",
    "NotGraspableError", "ObjectCoveredError", "ObjectInsideClosedContainerError",
    "OutOfWorkspaceError", "PlacementCollisionError", "SimError", "SimObject",
    "UnknownFaultKindError", "UnknownObjectError", "WorldState",
    "BACKGROUND_ID", "DEFAULT_INTRINSICS", "TABLE_ID", "CaptureDropoutError",
    "CaptureResult", "ViewCapture", "capture", "render_view", "truth_bboxes",
    "vantage_poses",
]
