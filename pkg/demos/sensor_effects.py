"""
Degrading clean simulated clouds toward sensor realism
======================================================

Three effects, each seeded and reproducible: Gaussian range noise along
each point's own ray, independent random downsampling, and downsampling
matched to a target range histogram via a per-bin keep-probability table.
"""

import numpy as np

from lidargap.core.geometry import PointCloud
from lidargap.effects import (
    DownsampleConfig,
    KeepProbabilityTable,
    NoiseConfig,
    apply_range_noise,
    downsample_matched,
    downsample_random,
    range_histogram,
)

rng = np.random.default_rng(42)

# a synthetic scan: 60,000 points spread over 5 to 90 m
dirs = rng.normal(size=(60_000, 3))
dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
ranges = rng.uniform(5.0, 90.0, 60_000)
clean = PointCloud(dirs * ranges[:, None])

# 1. range noise: each point slides along its ray by N(0, sigma^2)
noisy = apply_range_noise(clean, NoiseConfig(sigma=0.02, seed=0))
delta = np.linalg.norm(noisy.xyz, axis=1) - ranges
print(f"range noise sigma 0.02: measured std {np.std(delta):.4f} m, "
      f"mean {np.mean(delta):+.5f} m")

# the displacement is purely radial: no point moves off its ray
u = clean.xyz / ranges[:, None]
d = noisy.xyz - clean.xyz
off_ray = d - (d * u).sum(axis=1, keepdims=True) * u
print(f"max off-ray component: {np.abs(off_ray).max():.2e} m")

# 2. random downsampling: every point survives independently
thinned = downsample_random(clean, DownsampleConfig(keep_ratio=0.8, seed=1))
print(f"\nkeep_ratio 0.8 kept {len(thinned)} of {len(clean)} points "
      f"({len(thinned) / len(clean):.3f})")

# 3. matched downsampling: reshape the range distribution itself.
# Real sensors lose points fastest at long range; emulate that with a
# table whose keep probability decays with the bin index.
table = KeepProbabilityTable(2.0, np.linspace(1.0, 0.25, 50))
matched = downsample_matched(clean, table, seed=2)
before = range_histogram(clean, table)
after = range_histogram(matched, table)

print("\nbin    range        p_keep   before   after")
for i in range(2, 45, 7):
    lo, hi = 2.0 * i, 2.0 * (i + 1)
    print(f"{i:3d}  [{lo:4.0f}, {hi:4.0f}) m   {table.p_keep[i]:.2f}   "
          f"{before[i]:6d}   {after[i]:6d}")
print(f"\ntotal {len(matched)} of {len(clean)} points after matching")
