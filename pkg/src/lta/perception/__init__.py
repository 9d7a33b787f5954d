from .types import (BBox, CameraIntrinsics, CameraPose, DepthImage,
                    EmptyCloudError, InvalidDepthError, NoMatchError,
                    OutOfBoundsError, PerceptionError, PointCloud)
from .pipeline import (PerceptionConfig, bbox_to_cloud, centroid, cluster,
                       deproject, depth_to_cloud, locate, match_cluster,
                       merge_views, project, remove_plane_and_outliers)
from . import kernels

__all__ = [
    "BBox", "CameraIntrinsics", "CameraPose", "DepthImage", "PointCloud",
    "PerceptionError", "EmptyCloudError", "InvalidDepthError", "NoMatchError",
    "OutOfBoundsError", "PerceptionConfig", "deproject", "project",
    "depth_to_cloud", "bbox_to_cloud", "merge_views",
    "remove_plane_and_outliers", "cluster", "match_cluster", "centroid",
    "locate", "kernels",
]
