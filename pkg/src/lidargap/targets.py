"""Target-level analysis: pull the points inside each ground-truth box into
the canonical vehicle frame (x along length, y along width, z up, origin at
the box center) and aggregate them per range bucket for plotting export."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core.geometry import (
    DETECTION_RANGE_M,
    BoundingBox3D,
    PointCloud,
    RangeBucket,
    box_canonical_coords,
    bucket_of,
    points_in_box,
)
from .core.io import DatasetManifest
from .errors import ValidationError
from .seeding import make_rng

DEFAULT_CAP = 20_000

PROJECTIONS = {
    "side": (0, 2),
    "top": (0, 1),
    "front": (1, 2),
    "back": (1, 2),
}


def extract_canonical(cloud: PointCloud, box: BoundingBox3D) -> np.ndarray:
    """In-box points expressed in the box frame, (M, 3); every output
    coordinate lies within the half-extents. May be empty."""
    idx = points_in_box(cloud, box)
    if idx.size == 0:
        return np.empty((0, 3))
    return box_canonical_coords(cloud.xyz[idx], box)


@dataclass
class AggregatedCloud:
    """Canonical-frame points pooled from many targets of one range bucket."""

    bucket: RangeBucket
    points: np.ndarray
    n_frames: int = 0
    n_targets: int = 0
    n_source_points: int = 0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)


def aggregate(
    man: DatasetManifest,
    bucket: RangeBucket,
    cap: int = DEFAULT_CAP,
    seed: int = 0,
) -> AggregatedCloud:
    """Concatenate canonical extractions of every bucket target, in frame
    order, then subsample uniformly (seeded) down to `cap` points."""
    if cap < 1:
        raise ValidationError("cap must be >= 1")
    chunks: list[np.ndarray] = []
    n_frames = 0
    n_targets = 0
    for fr in man.frames:
        label = man.load_labels(fr)
        picked = []
        for box, _ in label.boxes:
            if box.horizontal_distance() > DETECTION_RANGE_M:
                continue
            if bucket is not RangeBucket.FULL and bucket_of(box) is not bucket:
                continue
            picked.append(box)
        if not picked:
            continue
        cloud = man.load_cloud(fr)
        n_frames += 1
        for box in picked:
            chunks.append(extract_canonical(cloud, box))
            n_targets += 1
    points = np.vstack(chunks) if chunks else np.empty((0, 3))
    total = points.shape[0]
    if total > cap:
        rng = make_rng(seed)
        idx = np.sort(rng.choice(total, size=cap, replace=False))
        points = points[idx]
    return AggregatedCloud(bucket, points, n_frames, n_targets, total)


def export_aggregate(agg: AggregatedCloud, path, projection: str = "top") -> None:
    """CSV of the canonical points plus the chosen 2D projection columns
    (side = (x, z), top = (x, y), front/back = (y, z)); no rendering."""
    if projection not in PROJECTIONS:
        raise ValidationError(
            f"unknown projection '{projection}', pick one of {sorted(PROJECTIONS)}"
        )
    ui, vi = PROJECTIONS[projection]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["x", "y", "z", "u", "v"])
        for p in agg.points:
            writer.writerow(
                [f"{p[0]:.6f}", f"{p[1]:.6f}", f"{p[2]:.6f}", f"{p[ui]:.6f}", f"{p[vi]:.6f}"]
            )


def export_ply(agg: AggregatedCloud, path) -> None:
    """ASCII PLY for external 3D viewers."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = agg.points.shape[0]
    header = (
        "ply\nformat ascii 1.0\n"
        f"element vertex {n}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "end_header\n"
    )
    body = "".join(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f}\n" for p in agg.points)
    path.write_text(header + body)


def load_aggregate_csv(path) -> np.ndarray:
    """Re-read an exported aggregate's canonical coordinates, (N, 3)."""
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        next(reader)
        rows = [[float(c) for c in row[:3]] for row in reader if row]
    return np.array(rows).reshape(-1, 3)
