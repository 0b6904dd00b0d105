"""Domain types, coordinate transforms, and file I/O shared by all modules."""

from .geometry import (
    ANCHOR_DIMS,
    DETECTION_RANGE_M,
    BoundingBox3D,
    FrameLabel,
    PointCloud,
    Prediction,
    RangeBucket,
    Trajectory,
    TrajectorySample,
    VehicleDims,
    box_canonical_coords,
    bucket_of,
    interpolate_pose,
    normalize_yaw,
    points_in_box,
    rotation_z,
    world_box_to_ego,
)
from .io import (
    DatasetManifest,
    FrameRecord,
    load_labels,
    load_manifest,
    load_point_cloud,
    load_predictions,
    load_trajectory,
    save_labels,
    save_manifest,
    save_point_cloud,
    save_predictions,
    save_trajectory,
    split_manifest,
)

__all__ = [
    "ANCHOR_DIMS",
    "DETECTION_RANGE_M",
    "BoundingBox3D",
    "DatasetManifest",
    "FrameLabel",
    "FrameRecord",
    "PointCloud",
    "Prediction",
    "RangeBucket",
    "Trajectory",
    "TrajectorySample",
    "VehicleDims",
    "box_canonical_coords",
    "bucket_of",
    "interpolate_pose",
    "load_labels",
    "load_manifest",
    "load_point_cloud",
    "load_predictions",
    "load_trajectory",
    "normalize_yaw",
    "points_in_box",
    "rotation_z",
    "save_labels",
    "save_manifest",
    "save_point_cloud",
    "save_predictions",
    "save_trajectory",
    "split_manifest",
    "world_box_to_ego",
]
