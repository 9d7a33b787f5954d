"""Analytic depth rendering of the tabletop world.

Each vantage renders a 320x240 z-depth image by intersecting per-pixel rays
with the shape primitives directly — no mesh, no rasterizer. Open containers
are rendered as a solid minus an interior cavity so rays can fall through
the opening and hit the contents or the floor inside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..perception.types import BBox, CameraIntrinsics, CameraPose, DepthImage
from .shapes import FLOOR_THICKNESS, WALL_THICKNESS, Box, Cylinder, Disc, Sphere
from .world import SimError, GripperOccupiedDuringCaptureError, WorldState

DEFAULT_INTRINSICS = CameraIntrinsics(width=320, height=240,
                                      fx=240.0, fy=240.0, cx=160.0, cy=120.0)

_EPS = 1e-9
BACKGROUND_ID = -1
TABLE_ID = -2


class CaptureDropoutError(SimError):
    """The camera produced no usable frame for this trigger."""


def _rotz(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _look_at(eye: np.ndarray, target: np.ndarray) -> CameraPose:
    forward = target - eye
    forward = forward / np.linalg.norm(forward)
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, up)
    norm = np.linalg.norm(right)
    if norm < 1e-9:  # straight down: pin image x to world x
        right = np.array([1.0, 0.0, 0.0])
    else:
        right = right / norm
    down = np.cross(forward, right)
    rotation = np.column_stack([right, down, forward])
    return CameraPose(rotation=rotation, translation=eye.astype(float))


def vantage_poses(world: WorldState) -> list[CameraPose]:
    """Three calibrated vantages: a top-down view over the table centre and
    two oblique views from the long sides."""
    (x0, x1), (y0, y1) = world.table_extent
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
    z = world.table_z
    top = CameraPose(rotation=np.array([[1.0, 0.0, 0.0],
                                        [0.0, -1.0, 0.0],
                                        [0.0, 0.0, -1.0]]),
                     translation=np.array([cx, cy, z + 1.0]))
    left = _look_at(np.array([x0 - 0.35, cy, z + 0.75]), np.array([cx, cy, z]))
    right = _look_at(np.array([x1 + 0.35, cy, z + 0.75]), np.array([cx, cy, z]))
    return [top, left, right]


# ----------------------------------------------------------------------
# Ray / solid intersection intervals
# ----------------------------------------------------------------------

def _slab(e: float, d: np.ndarray, lo: float, hi: float):
    """Entry/exit parameters for one axis-aligned slab, per ray."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - e) / d
        t2 = (hi - e) / d
    near = np.where(np.abs(d) < _EPS,
                    np.where((lo <= e) & (e <= hi), -np.inf, np.inf), np.minimum(t1, t2))
    far = np.where(np.abs(d) < _EPS,
                   np.where((lo <= e) & (e <= hi), np.inf, -np.inf), np.maximum(t1, t2))
    return near, far


def _box_interval(eye, dirs, center, yaw, dims):
    rot = _rotz(-yaw)
    e = rot @ (eye - center)
    d = dirs @ rot.T
    w, depth, h = dims
    t0 = np.full(dirs.shape[:-1], -np.inf)
    t1 = np.full(dirs.shape[:-1], np.inf)
    for axis, half in ((0, w / 2), (1, depth / 2), (2, h / 2)):
        near, far = _slab(e[axis], d[..., axis], -half, half)
        t0 = np.maximum(t0, near)
        t1 = np.minimum(t1, far)
    return t0, t1


def _circle_interval(eye, dirs, center, r):
    rel = eye[:2] - center[:2]
    dx, dy = dirs[..., 0], dirs[..., 1]
    a = dx * dx + dy * dy
    b = 2.0 * (rel[0] * dx + rel[1] * dy)
    c = rel[0] ** 2 + rel[1] ** 2 - r * r
    disc = b * b - 4.0 * a * c
    vertical = a < _EPS
    with np.errstate(divide="ignore", invalid="ignore"):
        root = np.sqrt(np.maximum(disc, 0.0))
        t0 = (-b - root) / (2.0 * a)
        t1 = (-b + root) / (2.0 * a)
    inside = c < 0
    t0 = np.where(vertical, np.where(inside, -np.inf, np.inf), t0)
    t1 = np.where(vertical, np.where(inside, np.inf, -np.inf), t1)
    miss = (~vertical) & (disc < 0)
    t0 = np.where(miss, np.inf, t0)
    t1 = np.where(miss, -np.inf, t1)
    return t0, t1


def _cyl_interval(eye, dirs, center, r, z0, z1):
    c0, c1 = _circle_interval(eye, dirs, center, r)
    near, far = _slab(eye[2], dirs[..., 2], z0, z1)
    return np.maximum(c0, near), np.minimum(c1, far)


def _sphere_interval(eye, dirs, center, r):
    rel = eye - center
    a = np.sum(dirs * dirs, axis=-1)
    b = 2.0 * np.sum(dirs * rel, axis=-1)
    c = float(rel @ rel) - r * r
    disc = b * b - 4.0 * a * c
    with np.errstate(invalid="ignore"):
        root = np.sqrt(np.maximum(disc, 0.0))
    t0 = np.where(disc >= 0, (-b - root) / (2.0 * a), np.inf)
    t1 = np.where(disc >= 0, (-b + root) / (2.0 * a), -np.inf)
    return t0, t1


def _solid_interval(eye, dirs, obj):
    shape = obj.shape
    center = obj.position
    if isinstance(shape, Box):
        return _box_interval(eye, dirs, center, obj.yaw, (shape.w, shape.d, shape.h))
    if isinstance(shape, (Cylinder, Disc)):
        return _cyl_interval(eye, dirs, center, shape.r, obj.bottom_z, obj.top_z)
    if isinstance(shape, Sphere):
        return _sphere_interval(eye, dirs, center, shape.r)
    raise TypeError(f"unrenderable shape {type(shape).__name__}")


def _cavity_interval(eye, dirs, obj):
    """Interior cavity of an open container, extended upward so rays that
    enter through the opening are treated as starting inside it."""
    shape = obj.shape
    floor_z = obj.interior_floor_z
    ceiling = obj.top_z + 1.0
    if isinstance(shape, Box):
        dims = (shape.w - 2 * WALL_THICKNESS, shape.d - 2 * WALL_THICKNESS,
                ceiling - floor_z)
        center = np.array([obj.position[0], obj.position[1],
                           (floor_z + ceiling) / 2])
        return _box_interval(eye, dirs, center, obj.yaw, dims)
    if isinstance(shape, (Cylinder, Disc)):
        return _cyl_interval(eye, dirs, obj.position,
                             shape.r - WALL_THICKNESS, floor_z, ceiling)
    raise TypeError(f"shape cannot be a container: {type(shape).__name__}")


def _hit_param(eye, dirs, obj) -> np.ndarray:
    t0, t1 = _solid_interval(eye, dirs, obj)
    valid = (t1 >= t0) & (t1 > _EPS)
    t = np.where(t0 > _EPS, t0, np.inf)
    if obj.container:
        c0, c1 = _cavity_interval(eye, dirs, obj)
        entered_through_opening = valid & (t0 > c0 + _EPS) & (t0 < c1 - _EPS)
        inner_exit = np.where((c1 <= t1 + 1e-6) & (c1 > _EPS), c1, np.inf)
        t = np.where(entered_through_opening, inner_exit, t)
    return np.where(valid, t, np.inf)


# ----------------------------------------------------------------------
# Scene rendering
# ----------------------------------------------------------------------

@dataclass
class ViewCapture:
    depth: DepthImage
    pose: CameraPose
    ids: np.ndarray
    names: list[str]


@dataclass
class CaptureResult:
    views: list[ViewCapture]
    visible: set[str]
    bboxes: dict[str, BBox] = field(default_factory=dict)


def render_view(world: WorldState, pose: CameraPose,
                intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS,
                depth_noise: np.random.Generator | None = None) -> ViewCapture:
    h, w = intrinsics.height, intrinsics.width
    us, vs = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    cam_dirs = np.stack([(us - intrinsics.cx) / intrinsics.fx,
                         (vs - intrinsics.cy) / intrinsics.fy,
                         np.ones_like(us)], axis=-1)
    dirs = cam_dirs @ pose.rotation.T  # ray parameter t == camera-frame depth
    eye = np.asarray(pose.translation, dtype=float)

    objects = [o for o in world.resting()]
    names = [o.name for o in objects]
    best_t = np.full((h, w), np.inf)
    best_id = np.full((h, w), BACKGROUND_ID, dtype=np.int32)

    dz = dirs[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_table = (world.table_z - eye[2]) / dz
    table_hit = (np.abs(dz) > _EPS) & (t_table > _EPS)
    best_t = np.where(table_hit, t_table, best_t)
    best_id = np.where(table_hit, TABLE_ID, best_id)

    for idx, obj in enumerate(objects):
        t = _hit_param(eye, dirs, obj)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        best_id = np.where(closer, idx, best_id)

    depth = np.where(np.isfinite(best_t), best_t, 0.0)
    if depth_noise is not None and world.noise.depth_sigma > 0:
        jitter = depth_noise.normal(0.0, world.noise.depth_sigma,
                                    size=depth.shape)
        depth = np.where(depth > 0, np.maximum(depth + jitter, 1e-4), 0.0)
    image = DepthImage(intrinsics=intrinsics, depths=depth)
    return ViewCapture(depth=image, pose=pose, ids=best_id, names=names)


def truth_bboxes(view: ViewCapture) -> dict[str, BBox]:
    out: dict[str, BBox] = {}
    for idx, name in enumerate(view.names):
        rows, cols = np.nonzero(view.ids == idx)
        if rows.size == 0:
            continue
        x_min, y_min = int(cols.min()), int(rows.min())
        out[name] = BBox(label=name, x_min=x_min, y_min=y_min,
                         x_max=max(int(cols.max()), x_min + 1),
                         y_max=max(int(rows.max()), y_min + 1))
    return out


def capture(world: WorldState,
            intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS) -> CaptureResult:
    """Trigger all vantages at once. Fails while the gripper is loaded so a
    capture can never photograph a mid-transfer scene."""
    if world.gripper is not None:
        raise GripperOccupiedDuringCaptureError(
            "cannot capture while holding an object")
    if world.capture_dropped():
        raise CaptureDropoutError("camera trigger produced no frame")
    noise = world.rng("depth") if world.noise.depth_sigma > 0 else None
    views = [render_view(world, pose, intrinsics, depth_noise=noise)
             for pose in vantage_poses(world)]
    visible = world.visible_objects()
    boxes = {name: bb for name, bb in truth_bboxes(views[0]).items()
             if name in visible}
    return CaptureResult(views=views, visible=visible, bboxes=boxes)
