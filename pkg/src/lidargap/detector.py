"""Deterministic non-learned 3D detector: ground-plane removal, Euclidean
clustering on a spatial hash, and fixed-anchor box fitting with a yaw search.
It exists to drive the evaluation pipeline end to end, not to rival learned
detectors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core.geometry import (
    ANCHOR_DIMS,
    DETECTION_RANGE_M,
    BoundingBox3D,
    PointCloud,
    Prediction,
    VehicleDims,
    points_in_box,
)
from .errors import ValidationError

# Perpendicular distance within which a point counts as part of the fitted
# ground plane.
GROUND_INLIER_M = 0.15


@dataclass(frozen=True)
class DetectorConfig:
    """Pipeline knobs; `ground_z` is the fallback height cut used when the
    plane fit is degenerate."""

    ground_z: float = -0.3
    cluster_eps: float = 0.7
    min_cluster: int = 10
    anchor: VehicleDims = field(default_factory=lambda: ANCHOR_DIMS)
    yaw_steps: int = 36

    def __post_init__(self):
        if self.cluster_eps <= 0:
            raise ValidationError("cluster_eps must be positive")
        if self.min_cluster < 1:
            raise ValidationError("min_cluster must be >= 1")
        if self.yaw_steps < 1:
            raise ValidationError("yaw_steps must be >= 1")


def fit_ground_plane(cloud: PointCloud, cfg: DetectorConfig) -> tuple[float, float, float] | None:
    """Least-squares plane z = ax + by + c over the lowest-z quartile;
    None when the fit is degenerate (too few or collinear points)."""
    n = len(cloud)
    if n < 4:
        return None
    z = cloud.xyz[:, 2]
    q = np.quantile(z, 0.25)
    low = cloud.xyz[z <= q]
    if low.shape[0] < 3:
        return None
    A = np.column_stack([low[:, 0], low[:, 1], np.ones(low.shape[0])])
    sol, _, rank, _ = np.linalg.lstsq(A, low[:, 2], rcond=None)
    if rank < 3:
        return None
    return float(sol[0]), float(sol[1]), float(sol[2])


def _nonground_mask(
    cloud: PointCloud, plane: tuple[float, float, float] | None, cfg: DetectorConfig
) -> np.ndarray:
    if plane is None:
        return cloud.xyz[:, 2] >= cfg.ground_z
    a, b, c = plane
    dist = np.abs(
        cloud.xyz[:, 2] - (a * cloud.xyz[:, 0] + b * cloud.xyz[:, 1] + c)
    ) / math.sqrt(1.0 + a * a + b * b)
    return dist > GROUND_INLIER_M


def remove_ground(cloud: PointCloud, cfg: DetectorConfig) -> PointCloud:
    """Drop points within the inlier band of the fitted ground plane; if no
    plane fits, drop everything below the configured ground height."""
    if len(cloud) == 0:
        return cloud
    plane = fit_ground_plane(cloud, cfg)
    return cloud.take(np.nonzero(_nonground_mask(cloud, plane, cfg))[0])


def cluster(cloud: PointCloud, cfg: DetectorConfig) -> list[np.ndarray]:
    """Connected components of the "within eps" relation, found through an
    eps-sized spatial hash; equivalent to brute-force pairwise linking.
    Components smaller than min_cluster are dropped. Deterministic: clusters
    are ordered and their members sorted by point index."""
    n = len(cloud)
    if n == 0:
        return []
    eps = cfg.cluster_eps
    cells = np.floor(cloud.xyz / eps).astype(np.int64)
    grid: dict[tuple[int, int, int], list[int]] = {}
    for i, key in enumerate(map(tuple, cells)):
        grid.setdefault(key, []).append(i)

    eps2 = eps * eps
    visited = np.zeros(n, dtype=bool)
    clusters: list[np.ndarray] = []
    xyz = cloud.xyz
    for seed in range(n):
        if visited[seed]:
            continue
        visited[seed] = True
        members = [seed]
        stack = [seed]
        while stack:
            p = stack.pop()
            cx, cy, cz = cells[p]
            pp = xyz[p]
            for ox in (-1, 0, 1):
                for oy in (-1, 0, 1):
                    for oz in (-1, 0, 1):
                        bucket = grid.get((cx + ox, cy + oy, cz + oz))
                        if not bucket:
                            continue
                        for q in bucket:
                            if visited[q]:
                                continue
                            d = xyz[q] - pp
                            if d[0] * d[0] + d[1] * d[1] + d[2] * d[2] <= eps2:
                                visited[q] = True
                                members.append(q)
                                stack.append(q)
        if len(members) >= cfg.min_cluster:
            clusters.append(np.array(sorted(members), dtype=np.int64))
    return clusters


def fit_box(
    points: np.ndarray,
    cfg: DetectorConfig,
    ground_z: float | None = None,
    frame_id: str = "",
) -> Prediction:
    """Anchor-dims box at the cluster centroid, yaw chosen from yaw_steps
    hypotheses in [0, pi) to contain the most points (ties take the smallest
    yaw). The box bottom sits on the ground when a ground height is given,
    otherwise the center takes the centroid height. Confidence is the
    contained fraction."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if points.shape[0] == 0:
        raise ValidationError("cannot fit a box to an empty cluster")
    centroid = points.mean(axis=0)
    cz = centroid[2] if ground_z is None else ground_z + cfg.anchor.h / 2.0
    center = np.array([centroid[0], centroid[1], cz])
    best_yaw = 0.0
    best_count = -1
    for k in range(cfg.yaw_steps):
        yaw = k * math.pi / cfg.yaw_steps
        box = BoundingBox3D(center, cfg.anchor.l, cfg.anchor.w, cfg.anchor.h, yaw)
        count = int(points_in_box(points, box).shape[0])
        if count > best_count:
            best_count = count
            best_yaw = yaw
    box = BoundingBox3D(center, cfg.anchor.l, cfg.anchor.w, cfg.anchor.h, best_yaw)
    return Prediction(frame_id, box, best_count / points.shape[0])


def detect(cloud: PointCloud, cfg: DetectorConfig, frame_id: str = "") -> list[Prediction]:
    """Ground removal, clustering, box fitting; predictions beyond the
    detection range are dropped. Fully deterministic."""
    if len(cloud) == 0:
        return []
    plane = fit_ground_plane(cloud, cfg)
    objects = cloud.take(np.nonzero(_nonground_mask(cloud, plane, cfg))[0])

    preds: list[Prediction] = []
    for idx in cluster(objects, cfg):
        pts = objects.xyz[idx]
        if plane is None:
            gz: float | None = cfg.ground_z
        else:
            a, b, c = plane
            cx, cy = pts[:, 0].mean(), pts[:, 1].mean()
            gz = a * cx + b * cy + c
        p = fit_box(pts, cfg, ground_z=gz, frame_id=frame_id)
        if p.box.horizontal_distance() <= DETECTION_RANGE_M:
            preds.append(p)
    return preds
