"""Deterministic tabletop world: object poses, kinematic pick/place rules,
containers with lids, fiducial tags and injectable faults.

The world stands in for the execution layer: no dynamics, just support
relations and footprint geometry. Collisions with manipulable objects are
not planned around; they surface as runtime placement failures so the
failure-handling loop has something real to chew on.
"""

from __future__ import annotations

import copy as _copy
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .shapes import (FLOOR_THICKNESS, WALL_THICKNESS, Box, Cylinder, Disc,
                     Shape, Sphere, fits_on_top, footprint_contains,
                     footprint_radius, overlap_fraction, shape_height,
                     _footprint_samples)

TABLE = "table"


class SimError(Exception):
    pass


class GripperOccupiedError(SimError):
    pass


class GripperEmptyError(SimError):
    pass


class UnknownObjectError(SimError):
    pass


class NotGraspableError(SimError):
    pass


class GraspMissedError(SimError):
    def __init__(self, distance: float):
        super().__init__(f"grasp point missed the centroid by {distance:.3f} m")
        self.distance = distance


class ObjectCoveredError(SimError):
    pass


class ObjectInsideClosedContainerError(SimError):
    pass


class OutOfWorkspaceError(SimError):
    pass


class PlacementCollisionError(SimError):
    pass


class GripperOccupiedDuringCaptureError(SimError):
    pass


class UnknownFaultKindError(SimError):
    pass


FAULT_KINDS = ("grasp_slip", "loc_bias", "capture_dropout")

# Fixed stream ids so every noise source has an independent, reproducible
# generator for a given world seed.
_STREAMS = {"fault": 77, "depth": 11, "bbox": 23, "presence": 31, "placement": 47}


@dataclass
class Fault:
    kind: str
    one_shot: bool = True
    probability: float = 1.0
    magnitude: float = 0.0
    direction: tuple[float, float, float] = (1.0, 0.0, 0.0)
    scope: str = "both"  # loc_bias: "scan", "point" or "both"
    armed: bool = True


@dataclass
class NoiseConfig:
    depth_sigma: float = 0.0       # meters
    bbox_jitter_px: int = 0
    presence_false_negative: float = 0.0
    presence_false_positive: float = 0.0


@dataclass
class SimObject:
    name: str
    shape: Shape
    position: np.ndarray           # centroid in base frame
    yaw: float = 0.0
    color: str = ""
    category: str = ""
    graspable: bool = True
    container: bool = False
    is_lid_of: Optional[str] = None
    tag_id: Optional[int] = None

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)

    @property
    def height(self) -> float:
        return shape_height(self.shape)

    @property
    def top_z(self) -> float:
        return float(self.position[2] + self.height / 2)

    @property
    def bottom_z(self) -> float:
        return float(self.position[2] - self.height / 2)

    @property
    def xy(self) -> tuple[float, float]:
        return float(self.position[0]), float(self.position[1])

    def interior_shape(self) -> Shape:
        """Footprint of the usable interior of a container."""
        if isinstance(self.shape, Box):
            return Box(w=max(self.shape.w - 2 * WALL_THICKNESS, 1e-3),
                       d=max(self.shape.d - 2 * WALL_THICKNESS, 1e-3),
                       h=self.shape.h)
        if isinstance(self.shape, (Cylinder, Disc)):
            return Cylinder(r=max(self.shape.r - WALL_THICKNESS, 1e-3),
                            h=self.shape.h)
        raise ValueError(f"{self.name}: shape cannot be a container")

    @property
    def interior_floor_z(self) -> float:
        return self.bottom_z + FLOOR_THICKNESS


class WorldState:
    """Mutable ground truth; one logical owner per session."""

    def __init__(self, table_z: float, table_extent: tuple[tuple[float, float],
                                                           tuple[float, float]],
                 seed: int = 0, grasp_tolerance: float = 0.02,
                 overlap_limit: float = 0.5, min_visible_fraction: float = 0.3,
                 noise: NoiseConfig | None = None):
        self.table_z = float(table_z)
        self.table_extent = ((float(table_extent[0][0]), float(table_extent[0][1])),
                             (float(table_extent[1][0]), float(table_extent[1][1])))
        self.objects: dict[str, SimObject] = {}
        self.gripper: Optional[str] = None
        self.support: dict[str, str] = {}
        self.support_kind: dict[str, str] = {}
        self.faults: list[Fault] = []
        self.seed = int(seed)
        self.grasp_tolerance = float(grasp_tolerance)
        self.overlap_limit = float(overlap_limit)
        self.min_visible_fraction = float(min_visible_fraction)
        self.noise = noise or NoiseConfig()
        self._rngs = {name: np.random.default_rng([self.seed, stream])
                      for name, stream in _STREAMS.items()}

    def rng(self, stream: str) -> np.random.Generator:
        return self._rngs[stream]

    def snapshot(self) -> "WorldState":
        return _copy.deepcopy(self)

    # ------------------------------------------------------------------
    # Construction
    # ------------------------------------------------------------------

    def add_object(self, obj: SimObject, on: str = TABLE, kind: str = "on") -> None:
        if obj.name in self.objects:
            raise UnknownObjectError(f"duplicate object {obj.name!r}")
        if on != TABLE and on not in self.objects:
            raise UnknownObjectError(f"unknown support {on!r}")
        if on == TABLE:
            bottom = self.table_z
        elif kind == "in":
            bottom = self.objects[on].interior_floor_z
        else:
            bottom = self.objects[on].top_z
        obj.position = np.array([obj.position[0], obj.position[1],
                                 bottom + obj.height / 2])
        self.objects[obj.name] = obj
        self.support[obj.name] = on
        self.support_kind[obj.name] = kind

    # ------------------------------------------------------------------
    # Queries
    # ------------------------------------------------------------------

    def obj(self, name: str) -> SimObject:
        try:
            return self.objects[name]
        except KeyError:
            raise UnknownObjectError(f"no object named {name!r}") from None

    def supported_by(self, name: str) -> list[str]:
        return [o for o, s in self.support.items() if s == name]

    def lid_on(self, container: str) -> Optional[str]:
        for obj in self.objects.values():
            if obj.is_lid_of == container and self.support.get(obj.name) == container:
                return obj.name
        return None

    def is_closed(self, container: str) -> bool:
        return self.lid_on(container) is not None

    def enclosing_closed_container(self, name: str) -> Optional[str]:
        current = name
        while True:
            supporter = self.support.get(current)
            if supporter in (None, TABLE):
                return None
            if self.support_kind.get(current) == "in" and self.is_closed(supporter):
                return supporter
            current = supporter

    def resting(self) -> list[SimObject]:
        return [o for o in self.objects.values() if o.name in self.support]

    def _occludes(self, occluder: SimObject, xy, above_z: float) -> bool:
        if occluder.top_z <= above_z + 1e-12:
            return False
        if occluder.container:
            # Open container walls only; the interior is open sky.
            if footprint_contains(occluder.interior_shape(), occluder.xy,
                                  occluder.yaw, xy):
                return False
        return footprint_contains(occluder.shape, occluder.xy, occluder.yaw, xy)

    def visible_fraction(self, name: str) -> float:
        """Fraction of the object's top-down footprint not covered by any
        higher object (top view, pose 0)."""
        target = self.obj(name)
        samples = _footprint_samples(target.shape, target.xy, target.yaw)
        if len(samples) == 0:
            return 0.0
        others = [o for o in self.resting() if o.name != name]
        clear = 0
        for point in samples:
            if not any(self._occludes(o, point, target.top_z) for o in others):
                clear += 1
        return clear / len(samples)

    def visible_objects(self) -> set[str]:
        return {name for name in self.support
                if self.visible_fraction(name) >= self.min_visible_fraction}

    # ------------------------------------------------------------------
    # Motion primitives
    # ------------------------------------------------------------------

    def pick(self, name: str, grasp_point: Iterable[float]) -> "WorldState":
        if self.gripper is not None:
            raise GripperOccupiedError(f"already holding {self.gripper!r}")
        target = self.obj(name)
        if not target.graspable:
            raise NotGraspableError(f"{name!r} is not graspable")
        on_top = [o for o in self.supported_by(name)
                  if self.support_kind.get(o) == "on"]
        if on_top:
            raise ObjectCoveredError(f"{name!r} is covered by {sorted(on_top)}")
        inside = [o for o in self.supported_by(name)
                  if self.support_kind.get(o) == "in"]
        if inside:
            raise ObjectCoveredError(f"{name!r} still holds {sorted(inside)}")
        container = self.enclosing_closed_container(name)
        if container is not None:
            raise ObjectInsideClosedContainerError(
                f"{name!r} is inside closed container {container!r}")
        if self._consume_grasp_slip():
            raise GraspMissedError(self.grasp_tolerance + 0.03)
        grasp = np.asarray(list(grasp_point), dtype=float)
        distance = float(np.linalg.norm(grasp - target.position))
        if distance > self.grasp_tolerance:
            raise GraspMissedError(distance)
        self.gripper = name
        del self.support[name]
        del self.support_kind[name]
        return self

    def place(self, target_point: Iterable[float]) -> "WorldState":
        if self.gripper is None:
            raise GripperEmptyError("nothing in the gripper")
        point = np.asarray(list(target_point), dtype=float)
        x, y = float(point[0]), float(point[1])
        (x0, x1), (y0, y1) = self.table_extent
        if not (x0 <= x <= x1 and y0 <= y <= y1):
            raise OutOfWorkspaceError(f"({x:.3f}, {y:.3f}) outside the table")
        placed = self.obj(self.gripper)
        resting = [o for o in self.resting() if o.name != placed.name]

        entered: Optional[SimObject] = None
        for candidate in resting:
            if (candidate.container and not self.is_closed(candidate.name)
                    and footprint_contains(candidate.interior_shape(),
                                           candidate.xy, candidate.yaw, (x, y))):
                entered = candidate
                break

        if entered is not None and placed.is_lid_of == entered.name:
            # Re-seating a lid over its own box closes the box.
            supporter, kind, bottom = entered.name, "on", entered.top_z
        elif entered is not None:
            if not fits_on_top(placed.shape, entered.interior_shape()):
                raise PlacementCollisionError(
                    f"{placed.name!r} does not fit inside {entered.name!r}")
            contents = [o for o in resting if self.support.get(o.name) == entered.name
                        or self._chain_into(o.name, entered.name)]
            supporter, kind, bottom = self._land_among(
                placed, (x, y), contents,
                default=(entered.name, "in", entered.interior_floor_z))
        else:
            solids = []
            for other in resting:
                frac = overlap_fraction(placed.shape, (x, y), placed.yaw,
                                        other.shape, other.xy, other.yaw)
                if frac <= 0:
                    continue
                if other.container and not self.is_closed(other.name):
                    raise PlacementCollisionError(
                        f"{placed.name!r} would clip the wall of {other.name!r}")
                solids.append((other, frac))
            supporter, kind, bottom = self._land_on_solids(
                placed, solids, default=(TABLE, "on", self.table_z))

        placed.position = np.array([x, y, bottom + placed.height / 2])
        self.support[placed.name] = supporter
        self.support_kind[placed.name] = kind
        self.gripper = None
        return self

    def _chain_into(self, name: str, container: str) -> bool:
        current = self.support.get(name)
        while current not in (None, TABLE):
            if current == container:
                return True
            current = self.support.get(current)
        return False

    def _land_among(self, placed: SimObject, xy, contents: list[SimObject],
                    default: tuple[str, str, float]) -> tuple[str, str, float]:
        overlapping = []
        for other in contents:
            frac = overlap_fraction(placed.shape, xy, placed.yaw,
                                    other.shape, other.xy, other.yaw)
            if frac > 0:
                overlapping.append((other, frac))
        return self._land_on_solids(placed, overlapping, default=default)

    def _land_on_solids(self, placed: SimObject,
                        overlapping: list[tuple[SimObject, float]],
                        default: tuple[str, str, float]) -> tuple[str, str, float]:
        if not overlapping:
            return default
        top, frac = max(overlapping, key=lambda pair: pair[0].top_z)
        if frac <= self.overlap_limit:
            raise PlacementCollisionError(
                f"{placed.name!r} glances {top.name!r} (overlap {frac:.2f})")
        if not fits_on_top(placed.shape, top.shape):
            raise PlacementCollisionError(
                f"{placed.name!r} is too large to rest on {top.name!r}")
        return top.name, "on", top.top_z

    # ------------------------------------------------------------------
    # Fiducial readout
    # ------------------------------------------------------------------

    def read_apriltags(self) -> list[tuple[int, tuple[float, float, float]]]:
        """Tag id and true top-center position of each unobscured tagged
        object. A tag is readable iff nothing higher covers the marker at
        the object's top center."""
        if self.gripper is not None:
            raise GripperOccupiedDuringCaptureError(
                "cannot scan while holding an object")
        out = []
        for obj in self.resting():
            if obj.tag_id is None:
                continue
            others = [o for o in self.resting() if o.name != obj.name]
            if any(self._occludes(o, obj.xy, obj.top_z) for o in others):
                continue
            out.append((obj.tag_id,
                        (float(obj.position[0]), float(obj.position[1]), obj.top_z)))
        out.sort(key=lambda pair: pair[0])
        return out

    # ------------------------------------------------------------------
    # Faults
    # ------------------------------------------------------------------

    def inject_fault(self, kind: str, **options) -> "WorldState":
        if kind not in FAULT_KINDS:
            raise UnknownFaultKindError(f"unknown fault kind {kind!r}")
        self.faults.append(Fault(kind=kind, **options))
        return self

    def _consume_grasp_slip(self) -> bool:
        for fault in self.faults:
            if fault.kind != "grasp_slip" or not fault.armed:
                continue
            if fault.probability < 1.0:
                if self.rng("fault").uniform() >= fault.probability:
                    continue
            if fault.one_shot:
                fault.armed = False
            return True
        return False

    def localization_offset(self, scope: str) -> Optional[np.ndarray]:
        """Offset applied to perception results when a loc_bias fault fires."""
        for fault in self.faults:
            if fault.kind != "loc_bias" or not fault.armed:
                continue
            if fault.scope not in ("both", scope):
                continue
            if fault.probability < 1.0:
                if self.rng("fault").uniform() >= fault.probability:
                    continue
            if fault.one_shot:
                fault.armed = False
            direction = np.asarray(fault.direction, dtype=float)
            norm = np.linalg.norm(direction)
            if norm == 0:
                return None
            return direction / norm * fault.magnitude
        return None

    def capture_dropped(self) -> bool:
        for fault in self.faults:
            if fault.kind != "capture_dropout" or not fault.armed:
                continue
            if fault.probability < 1.0:
                if self.rng("fault").uniform() >= fault.probability:
                    continue
            if fault.one_shot:
                fault.armed = False
            return True
        return False

    # ------------------------------------------------------------------
    # Invariant checks (used by property tests)
    # ------------------------------------------------------------------

    def check_invariants(self) -> None:
        held = [n for n in self.objects if n not in self.support]
        if self.gripper is None:
            assert not held, f"unsupported objects without a gripper hold: {held}"
        else:
            assert held == [self.gripper], (held, self.gripper)
        for name in self.support:
            seen = {name}
            current = self.support[name]
            while current != TABLE:
                assert current in self.objects, f"dangling support {current!r}"
                assert current not in seen, f"support cycle through {name!r}"
                seen.add(current)
                current = self.support[current]
