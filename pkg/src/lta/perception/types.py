"""Geometry carriers for the perception pipeline: camera model, depth grids,
bounding boxes and point clouds. All coordinates are meters in the robot base
frame unless a pixel frame is explicit."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np


class PerceptionError(Exception):
    pass


class InvalidDepthError(PerceptionError):
    pass


class OutOfBoundsError(PerceptionError):
    pass


class EmptyCloudError(PerceptionError):
    pass


class NoMatchError(PerceptionError):
    pass


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")


@dataclass(frozen=True)
class CameraPose:
    """Camera-to-base rigid transform. ``rotation`` maps camera-frame rays
    (x right, y down, z forward) into the base frame."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float)
        trans = np.asarray(self.translation, dtype=float)
        if rot.shape != (3, 3) or trans.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation 3-long")
        if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-9):
            raise ValueError("rotation must be orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > 1e-9:
            raise ValueError("rotation must be proper (det = +1)")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @staticmethod
    def identity() -> "CameraPose":
        return CameraPose(rotation=np.eye(3), translation=np.zeros(3))


_DEPTH_MAGIC = b"LTAD"


@dataclass(frozen=True)
class DepthImage:
    """Per-pixel depth in meters along the camera z axis; 0 marks invalid."""

    intrinsics: CameraIntrinsics
    depths: np.ndarray  # (height, width) float

    def __post_init__(self):
        grid = np.asarray(self.depths, dtype=float)
        if grid.shape != (self.intrinsics.height, self.intrinsics.width):
            raise ValueError("depth grid shape must match intrinsics")
        if not np.all(np.isfinite(grid)) or np.any(grid < 0):
            raise ValueError("depths must be finite and non-negative")
        object.__setattr__(self, "depths", grid)

    def write(self, stream: BinaryIO) -> None:
        """Portable binary grid: magic, width, height, 4 intrinsic floats,
        then float32 meters row-major."""
        intr = self.intrinsics
        stream.write(_DEPTH_MAGIC)
        stream.write(struct.pack("<II", intr.width, intr.height))
        stream.write(struct.pack("<dddd", intr.fx, intr.fy, intr.cx, intr.cy))
        stream.write(self.depths.astype("<f4").tobytes(order="C"))

    @staticmethod
    def read(stream: BinaryIO) -> "DepthImage":
        magic = stream.read(4)
        if magic != _DEPTH_MAGIC:
            raise ValueError("not a depth grid file")
        width, height = struct.unpack("<II", stream.read(8))
        fx, fy, cx, cy = struct.unpack("<dddd", stream.read(32))
        raw = stream.read(4 * width * height)
        grid = np.frombuffer(raw, dtype="<f4").reshape(height, width).astype(float)
        intr = CameraIntrinsics(fx=fx, fy=fy, cx=cx, cy=cy, width=width, height=height)
        return DepthImage(intrinsics=intr, depths=grid)


@dataclass(frozen=True)
class BBox:
    """Pixel-space box; half-open semantics are not used, both corners are
    inclusive pixel coordinates."""

    label: str
    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate bbox for {self.label!r}")

    def clamped(self, width: int, height: int) -> "BBox":
        return BBox(
            label=self.label,
            x_min=max(0, min(self.x_min, width - 1)),
            y_min=max(0, min(self.y_min, height - 1)),
            x_max=max(1, min(self.x_max, width - 1)),
            y_max=max(1, min(self.y_max, height - 1)),
        )

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)


class PointCloud:
    """Immutable (n, 3) float64 cloud in the base frame."""

    __slots__ = ("points",)

    def __init__(self, points):
        arr = np.asarray(points, dtype=float)
        if arr.size == 0:
            arr = arr.reshape(0, 3)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise ValueError("points must be (n, 3)")
        if not np.all(np.isfinite(arr)):
            raise ValueError("points must be finite")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        self.points = arr

    def __len__(self) -> int:
        return self.points.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, PointCloud) and np.array_equal(
            self.points, other.points)

    def centroid(self) -> np.ndarray:
        if len(self) == 0:
            raise EmptyCloudError("cannot take centroid of an empty cloud")
        return self.points.mean(axis=0)
