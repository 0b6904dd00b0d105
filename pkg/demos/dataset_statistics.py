"""
Comparing the bulk statistics of two point cloud datasets
=========================================================

Before any detector runs, cheap per-frame statistics already say a lot
about how two datasets differ: cloud sizes, the spatial spread of the
points, how many points land on each labeled target. This builds a
small dataset, a thinned twin of it, and prints the side-by-side table.
"""

import tempfile
from pathlib import Path

import numpy as np

from lidargap.core.geometry import BoundingBox3D, FrameLabel, PointCloud
from lidargap.core.io import (
    DatasetManifest,
    FrameRecord,
    save_labels,
    save_manifest,
    save_point_cloud,
)
from lidargap.effects import DownsampleConfig, downsample_random
from lidargap.stats import compare_stats, dataset_stats

rng = np.random.default_rng(7)
root = Path(tempfile.mkdtemp(prefix="stats_demo_"))


def write_split(name: str, keep_ratio: float | None) -> DatasetManifest:
    """A 6-frame dataset: ground plane points plus a dense blob on one target."""
    out = root / name
    frames = []
    for f in range(6):
        fid = f"{f:06d}"
        ground = np.column_stack([
            rng.uniform(-40.0, 40.0, 4000),
            rng.uniform(-40.0, 40.0, 4000),
            rng.normal(0.0, 0.02, 4000),
        ])
        center = np.array([12.0 + 2.0 * f, -3.0, 0.75])
        blob = center + rng.uniform(-1.0, 1.0, (600, 3)) * np.array([2.0, 0.9, 0.7])
        xyz = np.vstack([ground, blob]).astype(np.float32)
        cloud = PointCloud(xyz, frame_id=fid, timestamp=0.1 * f)
        if keep_ratio is not None:
            cloud = downsample_random(cloud, DownsampleConfig(keep_ratio, seed=f))
        cloud_path = out / "clouds" / f"{fid}.bin"
        save_point_cloud(cloud, cloud_path)
        label = FrameLabel(fid, [(BoundingBox3D(center, 4.5, 2.0, 1.6, 0.0), "v2")])
        label_path = out / "labels" / f"{fid}.txt"
        save_labels(label, label_path)
        frames.append(FrameRecord(fid, 0.1 * f, f"clouds/{fid}.bin", f"labels/{fid}.txt"))
    man = DatasetManifest(frames, name=name, root=out)
    save_manifest(man, out / "manifest.json")
    return man


full = write_split("full", None)
thin = write_split("thin", 0.35)

# one dataset alone; split=None means every frame, a label picks one
# train/val/test slice per the manifest's ratios
s = dataset_stats(full, split=None)
print(f"dataset '{full.name}': {s.n_frames} frames, {s.n_targets} targets, "
      f"mean cloud size {s.points_per_cloud.mean:.0f}")

# the side-by-side report pairs frames by id and prints both columns
report = compare_stats(full, thin, split=None)
print()
print(report.to_text())
