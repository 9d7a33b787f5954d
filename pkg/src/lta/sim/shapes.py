"""Primitive shapes and top-down footprint math for the tabletop simulator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

# Container geometry: wall and floor thickness of open boxes/cylinders.
WALL_THICKNESS = 0.008
FLOOR_THICKNESS = 0.005


@dataclass(frozen=True)
class Box:
    w: float  # full extent along local x
    d: float  # full extent along local y
    h: float

    def __post_init__(self):
        if min(self.w, self.d, self.h) <= 0:
            raise ValueError("box dimensions must be positive")


@dataclass(frozen=True)
class Cylinder:
    r: float
    h: float

    def __post_init__(self):
        if min(self.r, self.h) <= 0:
            raise ValueError("cylinder dimensions must be positive")


@dataclass(frozen=True)
class Sphere:
    r: float

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("sphere radius must be positive")


@dataclass(frozen=True)
class Disc:
    """Thin tagged cylinder used by the fiducial-tracking scenarios."""

    r: float
    h: float

    def __post_init__(self):
        if min(self.r, self.h) <= 0:
            raise ValueError("disc dimensions must be positive")


Shape = Union[Box, Cylinder, Sphere, Disc]


def shape_height(shape: Shape) -> float:
    if isinstance(shape, Sphere):
        return 2 * shape.r
    return shape.h


def footprint_radius(shape: Shape) -> float:
    """Circumscribed radius of the top-down footprint."""
    if isinstance(shape, Box):
        return math.hypot(shape.w / 2, shape.d / 2)
    return shape.r


def footprint_area(shape: Shape) -> float:
    if isinstance(shape, Box):
        return shape.w * shape.d
    return math.pi * shape.r ** 2


def footprint_contains(shape: Shape, center_xy, yaw: float, query_xy) -> bool:
    dx = query_xy[0] - center_xy[0]
    dy = query_xy[1] - center_xy[1]
    if isinstance(shape, Box):
        c, s = math.cos(-yaw), math.sin(-yaw)
        lx = c * dx - s * dy
        ly = s * dx + c * dy
        return abs(lx) <= shape.w / 2 and abs(ly) <= shape.d / 2
    return dx * dx + dy * dy <= shape.r ** 2


def _footprint_samples(shape: Shape, center_xy, yaw: float,
                       per_axis: int = 24) -> np.ndarray:
    """Fixed grid of points inside the footprint (deterministic)."""
    radius = footprint_radius(shape)
    xs = np.linspace(center_xy[0] - radius, center_xy[0] + radius, per_axis)
    ys = np.linspace(center_xy[1] - radius, center_xy[1] + radius, per_axis)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    keep = [footprint_contains(shape, center_xy, yaw, p) for p in pts]
    return pts[np.asarray(keep, dtype=bool)]


def overlap_fraction(shape_a: Shape, center_a, yaw_a,
                     shape_b: Shape, center_b, yaw_b) -> float:
    """Footprint overlap area as a fraction of the smaller footprint,
    estimated on a fixed sample grid."""
    gap = math.hypot(center_a[0] - center_b[0], center_a[1] - center_b[1])
    if gap > footprint_radius(shape_a) + footprint_radius(shape_b):
        return 0.0
    if footprint_area(shape_a) <= footprint_area(shape_b):
        small = (shape_a, center_a, yaw_a)
        big = (shape_b, center_b, yaw_b)
    else:
        small = (shape_b, center_b, yaw_b)
        big = (shape_a, center_a, yaw_a)
    samples = _footprint_samples(*small)
    if len(samples) == 0:
        return 0.0
    inside = [footprint_contains(big[0], big[1], big[2], p) for p in samples]
    return float(np.count_nonzero(inside)) / len(samples)


def fits_on_top(placed: Shape, support: Shape, tolerance: float = 1e-6) -> bool:
    """A placed object stacks stably iff its footprint does not exceed the
    support's (circumscribed-radius rule: small disc on large disc is fine,
    the reverse topples)."""
    return footprint_radius(placed) <= footprint_radius(support) + tolerance
