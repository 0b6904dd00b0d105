"""Post-hoc sensor-effect models applied to simulated clouds: longitudinal
range noise, random downsampling, and distribution-matched downsampling that
copies a paired real dataset's range profile."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core.geometry import PointCloud
from .core.io import DatasetManifest
from .errors import FormatError, ValidationError
from .seeding import make_rng

DEFAULT_SIGMA = 0.02
DEFAULT_KEEP_RATIO = 0.8
DEFAULT_BIN_WIDTH = 2.0

# Keep tables span the detection range.
TABLE_RANGE_M = 100.0


@dataclass(frozen=True)
class NoiseConfig:
    """Gaussian range noise along each point's ray; sigma in meters."""

    sigma: float = DEFAULT_SIGMA
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValidationError("sigma must be >= 0")


@dataclass(frozen=True)
class DownsampleConfig:
    """Independent per-point survival with the given keep ratio."""

    keep_ratio: float = DEFAULT_KEEP_RATIO
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.keep_ratio <= 1.0:
            raise ValidationError("keep_ratio must be in [0, 1]")


@dataclass
class KeepProbabilityTable:
    """Per-radial-bin survival probabilities over [0, 100] m.

    Bin i covers [i*bin_width, (i+1)*bin_width); points beyond the last bin
    clamp into it.
    """

    bin_width: float = DEFAULT_BIN_WIDTH
    p_keep: np.ndarray = field(default_factory=lambda: np.ones(50))

    def __post_init__(self):
        if self.bin_width <= 0:
            raise ValidationError("bin_width must be positive")
        self.p_keep = np.asarray(self.p_keep, dtype=np.float64).reshape(-1)
        if self.p_keep.size == 0:
            raise ValidationError("keep table needs at least one bin")
        if ((self.p_keep < 0) | (self.p_keep > 1)).any():
            raise ValidationError("keep probabilities must be in [0, 1]")
        if self.p_keep.size * self.bin_width < TABLE_RANGE_M - 1e-9:
            raise ValidationError(
                f"table covers {self.p_keep.size * self.bin_width:.1f} m, "
                f"needs {TABLE_RANGE_M:.0f} m"
            )

    @property
    def n_bins(self) -> int:
        return self.p_keep.size

    def edges(self) -> np.ndarray:
        return np.arange(self.n_bins + 1) * self.bin_width

    def bin_index(self, radii: np.ndarray) -> np.ndarray:
        idx = np.floor(np.asarray(radii, dtype=np.float64) / self.bin_width).astype(np.int64)
        return np.clip(idx, 0, self.n_bins - 1)


def _radii(cloud: PointCloud, origin=(0.0, 0.0, 0.0)) -> np.ndarray:
    return np.linalg.norm(cloud.xyz - np.asarray(origin, dtype=np.float64), axis=1)


def apply_range_noise(
    cloud: PointCloud, cfg: NoiseConfig, sensor_origin=(0.0, 0.0, 0.0)
) -> PointCloud:
    """Displace every point along its own ray by Normal(0, sigma^2).

    Points coinciding with the sensor origin have no ray direction; they are
    kept unchanged with a warning. A draw that would pull a point behind the
    origin (delta < -range) drops the point.
    """
    origin = np.asarray(sensor_origin, dtype=np.float64).reshape(3)
    rel = cloud.xyz - origin
    r = np.linalg.norm(rel, axis=1)
    rng = make_rng(cfg.seed)
    delta = rng.normal(0.0, cfg.sigma, size=len(cloud)) if cfg.sigma > 0 else np.zeros(len(cloud))
    at_origin = r == 0.0
    if at_origin.any():
        warnings.warn(
            f"{int(at_origin.sum())} point(s) at the sensor origin left unchanged",
            stacklevel=2,
        )
        delta[at_origin] = 0.0
    behind = ~at_origin & (delta < -r)
    safe_r = np.where(at_origin, 1.0, r)
    xyz = cloud.xyz + (delta / safe_r)[:, None] * rel
    keep = ~behind
    inten = None if cloud.intensity is None else cloud.intensity[keep]
    return PointCloud(xyz[keep], inten, cloud.frame_id, cloud.timestamp)


def downsample_random(cloud: PointCloud, cfg: DownsampleConfig) -> PointCloud:
    """Keep each point independently with probability keep_ratio; the output
    is a subsequence of the input."""
    if cfg.keep_ratio == 1.0:
        return cloud.take(np.arange(len(cloud)))
    rng = make_rng(cfg.seed)
    keep = rng.random(len(cloud)) < cfg.keep_ratio
    return cloud.take(np.nonzero(keep)[0])


def downsample_matched(cloud: PointCloud, table: KeepProbabilityTable, seed: int) -> PointCloud:
    """Keep each point with its radial bin's probability (seeded)."""
    rng = make_rng(seed)
    p = table.p_keep[table.bin_index(_radii(cloud))]
    keep = rng.random(len(cloud)) < p
    return cloud.take(np.nonzero(keep)[0])


def range_histogram(cloud: PointCloud, table: KeepProbabilityTable) -> np.ndarray:
    """Per-bin point counts under the table's binning (clamped last bin)."""
    return np.bincount(table.bin_index(_radii(cloud)), minlength=table.n_bins)


def compute_keep_table(
    real: DatasetManifest,
    sim: DatasetManifest,
    bin_width: float = DEFAULT_BIN_WIDTH,
) -> KeepProbabilityTable:
    """Survival table that reshapes the sim range distribution into the real
    one: p_keep(bin) = min(1, real_count / sim_count), empty sim bins get 1.

    Counts are aggregated over frames paired by id across the two manifests.
    """
    from .stats import pair_frames

    pairing = pair_frames(real, sim)
    n_bins = int(np.ceil(TABLE_RANGE_M / bin_width))
    template = KeepProbabilityTable(bin_width, np.ones(n_bins))
    real_counts = np.zeros(n_bins, dtype=np.int64)
    sim_counts = np.zeros(n_bins, dtype=np.int64)
    for _, ia, ib in pairing.pairs:
        real_counts += range_histogram(real.load_cloud(real.frames[ia]), template)
        sim_counts += range_histogram(sim.load_cloud(sim.frames[ib]), template)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = real_counts / sim_counts
    p = np.where(sim_counts == 0, 1.0, np.minimum(1.0, ratio))
    return KeepProbabilityTable(bin_width, p)


def save_keep_table(table: KeepProbabilityTable, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    edges = table.edges()
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["bin_lo", "bin_hi", "p_keep"])
        for i in range(table.n_bins):
            writer.writerow([f"{edges[i]:.6f}", f"{edges[i + 1]:.6f}", f"{table.p_keep[i]:.9f}"])


def load_keep_table(path) -> KeepProbabilityTable:
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["bin_lo", "bin_hi", "p_keep"]:
            raise FormatError(f"{path}: expected header bin_lo,bin_hi,p_keep")
        rows = [row for row in reader if row]
    if not rows:
        raise FormatError(f"{path}: no bins")
    try:
        arr = np.array([[float(c) for c in row] for row in rows])
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e
    widths = arr[:, 1] - arr[:, 0]
    if not np.allclose(widths, widths[0]) or not np.allclose(arr[1:, 0], arr[:-1, 1]):
        raise FormatError(f"{path}: bins must be contiguous and equal width")
    return KeepProbabilityTable(float(widths[0]), arr[:, 2])
