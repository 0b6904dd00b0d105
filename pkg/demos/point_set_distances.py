"""
Chamfer and earth mover's distance between point clouds
=======================================================

Two ways to put a number on "how different are these two scans". Chamfer
sums squared nearest-neighbor distances in both directions, so a single
far-flung point costs its squared offset. The earth mover's distance
solves an assignment and averages the moved distance, so the same
outlier only contributes linearly. The contrast is what makes reporting
both worthwhile.
"""

import numpy as np

from lidargap.core.geometry import PointCloud
from lidargap.similarity import DistanceConfig, chamfer_distance, earth_movers_distance

rng = np.random.default_rng(42)
cfg = DistanceConfig(emd_subsample=512, seed=0)

# two views of the same surface: a noisy resample of a ring of points
theta = rng.uniform(0.0, 2.0 * np.pi, 1500)
xyz = np.stack([10.0 * np.cos(theta), 10.0 * np.sin(theta), np.zeros_like(theta)], axis=1)
ring = PointCloud(xyz)
noisy = PointCloud(xyz + rng.normal(0.0, 0.05, xyz.shape))

print(f"cloud vs itself:        CD {chamfer_distance(ring, ring):.6f}  "
      f"EMD {earth_movers_distance(ring, ring, cfg):.6f}")
print(f"cloud vs 5 cm noise:    CD {chamfer_distance(ring, noisy):.6f}  "
      f"EMD {earth_movers_distance(ring, noisy, cfg):.6f}")

# symmetry holds for both
cd_ab = chamfer_distance(ring, noisy)
cd_ba = chamfer_distance(noisy, ring)
print(f"symmetry check:         |CD(a,b) - CD(b,a)| = {abs(cd_ab - cd_ba):.2e}")

# --- outlier sensitivity ------------------------------------------------------
# 8 collinear points; push the last one d meters further out. Chamfer grows
# with d^2, EMD with d / n. Doubling d quadruples one and doubles the other.
base_xyz = np.zeros((8, 3))
base_xyz[:, 0] = np.arange(8, dtype=float)
base = PointCloud(base_xyz)

print("\n   d     CD           EMD")
prev_cd, prev_emd = None, None
small = DistanceConfig(emd_subsample=8, seed=0)
for d in (25.0, 50.0, 100.0):
    moved_xyz = base_xyz.copy()
    moved_xyz[7, 0] = 7.0 + d
    moved = PointCloud(moved_xyz)
    cd = chamfer_distance(base, moved)
    emd = earth_movers_distance(base, moved, small)
    line = f"  {d:5.0f}  {cd:10.1f}  {emd:8.3f}"
    if prev_cd is not None:
        line += f"   (x{cd / prev_cd:.2f} CD, x{emd / prev_emd:.2f} EMD vs previous row)"
    print(line)
    prev_cd, prev_emd = cd, emd

# --- uneven sizes -------------------------------------------------------------
# EMD needs equal counts, so both clouds are subsampled to the configured
# size with a seeded draw; Chamfer takes the clouds as they are.
a = PointCloud(rng.normal(0.0, 1.0, (3000, 3)))
b = PointCloud(rng.normal(0.0, 1.0, (900, 3)))
print(f"\n3000 vs 900 gaussians:  CD {chamfer_distance(a, b):.4f}  "
      f"EMD {earth_movers_distance(a, b, cfg):.4f} "
      f"(both subsampled to {min(cfg.emd_subsample, len(a), len(b))})")
