"""Both perception pathways over synthetic or file-loaded depth data.

Pathway one: bounding box -> per-view clouds -> merge -> table/outlier
removal -> clustering -> cluster matched to the bbox cloud -> centroid.
Pathway two: a single pixel query deprojected through the depth map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .types import (BBox, CameraIntrinsics, CameraPose, DepthImage,
                    EmptyCloudError, InvalidDepthError, NoMatchError,
                    OutOfBoundsError, PointCloud)


@dataclass(frozen=True)
class PerceptionConfig:
    # 2 mm voxels: large enough to thin redundant view overlap, small enough
    # that depth noise spreading a flat face across two voxel layers does not
    # bias the centroid upward by a visible fraction of the voxel.
    voxel_size: float = 0.002
    link_distance: float = 0.02
    min_cluster_points: int = 20
    outlier_k: int = 8
    outlier_sigma: float = 2.0
    match_floor: float = 0.2
    table_z_epsilon: float = 0.01


def deproject(pixel: tuple[float, float], depth: float, intr: CameraIntrinsics,
              pose: CameraPose) -> np.ndarray:
    """Pinhole inverse: pixel + depth -> 3D point in the base frame."""
    u, v = pixel
    if not (0 <= u < intr.width and 0 <= v < intr.height):
        raise OutOfBoundsError(f"pixel ({u}, {v}) outside {intr.width}x{intr.height}")
    if depth <= 0:
        raise InvalidDepthError(f"no valid depth at pixel ({u}, {v})")
    cam = np.array([
        (u - intr.cx) * depth / intr.fx,
        (v - intr.cy) * depth / intr.fy,
        depth,
    ])
    return pose.rotation @ cam + pose.translation


def project(point: np.ndarray, intr: CameraIntrinsics,
            pose: CameraPose) -> tuple[float, float, float]:
    """Forward pinhole map; returns (u, v, depth). Inverse of deproject."""
    cam = pose.rotation.T @ (np.asarray(point, dtype=float) - pose.translation)
    if cam[2] <= 0:
        raise OutOfBoundsError("point is behind the camera")
    u = cam[0] * intr.fx / cam[2] + intr.cx
    v = cam[1] * intr.fy / cam[2] + intr.cy
    return u, v, cam[2]


def depth_to_cloud(depth: DepthImage, pose: CameraPose,
                   bbox: BBox | None = None) -> PointCloud:
    """Deproject every valid-depth pixel (optionally restricted to a bbox)."""
    intr = depth.intrinsics
    if bbox is None:
        x0, y0 = 0, 0
        x1, y1 = intr.width - 1, intr.height - 1
    else:
        clamped = bbox.clamped(intr.width, intr.height)
        x0, y0, x1, y1 = clamped.x_min, clamped.y_min, clamped.x_max, clamped.y_max
    region = depth.depths[y0:y1 + 1, x0:x1 + 1]
    vs, us = np.nonzero(region > 0)
    if len(us) == 0:
        return PointCloud(np.zeros((0, 3)))
    d = region[vs, us]
    u = us + x0
    v = vs + y0
    cam = np.stack([
        (u - intr.cx) * d / intr.fx,
        (v - intr.cy) * d / intr.fy,
        d,
    ], axis=1)
    pts = cam @ pose.rotation.T + pose.translation
    return PointCloud(pts)


def bbox_to_cloud(bbox: BBox, depth: DepthImage, pose: CameraPose) -> PointCloud:
    cloud = depth_to_cloud(depth, pose, bbox=bbox)
    if len(cloud) == 0:
        raise EmptyCloudError(f"no valid depths inside bbox {bbox.label!r}")
    return cloud


def merge_views(clouds: list[PointCloud],
                config: PerceptionConfig = PerceptionConfig()) -> PointCloud:
    """Concatenate per-view clouds and deduplicate at the voxel size."""
    if not clouds:
        raise ValueError("merge_views needs at least one cloud")
    stacked = np.concatenate([c.points for c in clouds], axis=0)
    if len(stacked) == 0:
        return PointCloud(stacked)
    mask = kernels.voxel_keep_mask(stacked, config.voxel_size)
    return PointCloud(stacked[mask])


def remove_plane_and_outliers(cloud: PointCloud, table_z: float,
                              config: PerceptionConfig = PerceptionConfig()) -> PointCloud:
    """Drop the table band (z <= table_z + epsilon), then statistical
    outlier removal on mean k-nearest-neighbour distance."""
    if len(cloud) == 0:
        raise EmptyCloudError("cannot filter an empty cloud")
    above = cloud.points[cloud.points[:, 2] > table_z + config.table_z_epsilon]
    if len(above) == 0:
        raise EmptyCloudError("all points lie on the table plane")
    dists = kernels.knn_mean_dists(above, config.outlier_k)
    mean = dists.mean()
    std = dists.std()
    kept = above[dists <= mean + config.outlier_sigma * std]
    if len(kept) == 0:
        raise EmptyCloudError("outlier removal discarded every point")
    return PointCloud(kept)


def cluster(cloud: PointCloud,
            config: PerceptionConfig = PerceptionConfig()) -> list[PointCloud]:
    """Connected components linking points within the link distance;
    small components discarded; output ordered by centroid (x, y, z)."""
    if len(cloud) == 0:
        raise EmptyCloudError("cannot cluster an empty cloud")
    labels = kernels.link_labels(cloud.points, config.link_distance)
    out: list[PointCloud] = []
    for label in range(labels.max() + 1):
        members = cloud.points[labels == label]
        if len(members) >= config.min_cluster_points:
            out.append(PointCloud(members))
    out.sort(key=lambda c: tuple(c.centroid()))
    return out


def match_cluster(clusters: list[PointCloud], bbox_cloud: PointCloud,
                  config: PerceptionConfig = PerceptionConfig()) -> PointCloud:
    """Pick the cluster with the highest bbox-cloud overlap score: the
    fraction of its points within one voxel of some bbox-cloud point."""
    if not clusters:
        raise NoMatchError("no clusters to match against")
    if len(bbox_cloud) == 0:
        raise EmptyCloudError("bbox cloud is empty")
    from scipy.spatial import cKDTree

    tree = cKDTree(bbox_cloud.points)
    bbox_centroid = bbox_cloud.centroid()
    best_index = -1
    best_key: tuple[float, float, int] | None = None
    for index, candidate in enumerate(clusters):
        dists, _ = tree.query(candidate.points, k=1)
        score = float(np.count_nonzero(dists <= config.voxel_size)) / len(candidate)
        gap = float(np.linalg.norm(candidate.centroid() - bbox_centroid))
        key = (-score, gap, index)
        if best_key is None or key < best_key:
            best_key = key
            best_index = index
    assert best_key is not None
    best_score = -best_key[0]
    if best_score < config.match_floor:
        raise NoMatchError(
            f"best overlap {best_score:.3f} below floor {config.match_floor}")
    return clusters[best_index]


def centroid(cloud: PointCloud) -> np.ndarray:
    return cloud.centroid()


def locate(bbox: BBox, views: list[tuple[DepthImage, CameraPose]], table_z: float,
           config: PerceptionConfig = PerceptionConfig()) -> np.ndarray:
    """Full bounding-box pathway: returns the matched-cluster centroid.

    ``views[0]`` must be the view the bbox was issued against.
    """
    if not views:
        raise ValueError("locate needs at least one view")
    bbox_cloud = bbox_to_cloud(bbox, views[0][0], views[0][1])
    merged = merge_views([depth_to_cloud(d, p) for d, p in views], config)
    filtered = remove_plane_and_outliers(merged, table_z, config)
    clusters = cluster(filtered, config)
    matched = match_cluster(clusters, bbox_cloud, config)
    return centroid(matched)
