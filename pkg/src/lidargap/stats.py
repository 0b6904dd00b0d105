"""Paired dataset statistics: per-dataset coordinate and count summaries,
frame pairing by id, target location histograms, and range-bucket breakdowns.

All statistics run over the training split of each manifest and crop every
cloud to points within 100 m horizontal distance of the ego origin first.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core.geometry import (
    DETECTION_RANGE_M,
    BoundingBox3D,
    FrameLabel,
    RangeBucket,
    bucket_of,
    points_in_box,
)
from .core.io import DatasetManifest, split_slices
from .errors import PairingError, ToolkitError

DEFAULT_CELL_SIZE = 2.0

HIST_EXTENT = 100.0


@dataclass
class FramePairing:
    """Frames shared by two manifests, matched on frame id."""

    pairs: list[tuple[str, int, int]]
    only_a: list[str]
    only_b: list[str]

    @property
    def n_matched(self) -> int:
        return len(self.pairs)


def pair_frames(a: DatasetManifest, b: DatasetManifest) -> FramePairing:
    """Match frames with identical ids; ids on one side only are reported,
    an empty intersection is an error."""
    ids_a = {fr.frame_id: i for i, fr in enumerate(a.frames)}
    ids_b = {fr.frame_id: i for i, fr in enumerate(b.frames)}
    shared = sorted(set(ids_a) & set(ids_b))
    only_a = sorted(set(ids_a) - set(ids_b))
    only_b = sorted(set(ids_b) - set(ids_a))
    if not shared:
        raise PairingError(
            "no shared frame ids; "
            f"first side has {sorted(ids_a)[:5]}..., second has {sorted(ids_b)[:5]}..."
        )
    return FramePairing(
        [(fid, ids_a[fid], ids_b[fid]) for fid in shared], only_a, only_b
    )


@dataclass
class Summary:
    """Mean/min/max triple; empty inputs yield NaN."""

    mean: float = math.nan
    min: float = math.nan
    max: float = math.nan

    @classmethod
    def of(cls, values: np.ndarray) -> "Summary":
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if values.size == 0:
            return cls()
        return cls(float(values.mean()), float(values.min()), float(values.max()))

    def to_dict(self) -> dict:
        return {"mean": self.mean, "min": self.min, "max": self.max}


@dataclass
class DatasetStats:
    """One dataset's summary column: pooled coordinate extremes, per-cloud
    point counts, per-target in-box point counts."""

    name: str = ""
    n_frames: int = 0
    n_targets: int = 0
    x: Summary = field(default_factory=Summary)
    y: Summary = field(default_factory=Summary)
    z: Summary = field(default_factory=Summary)
    points_per_cloud: Summary = field(default_factory=Summary)
    points_per_target: Summary = field(default_factory=Summary)
    errors: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n_frames": self.n_frames,
            "n_targets": self.n_targets,
            "x": self.x.to_dict(),
            "y": self.y.to_dict(),
            "z": self.z.to_dict(),
            "points_per_cloud": self.points_per_cloud.to_dict(),
            "points_per_target": self.points_per_target.to_dict(),
            "errors": self.errors,
        }


def frames_in_split(man: DatasetManifest, split: str | None):
    """Frames of one named split ('train'/'val'/'test'), or all when None."""
    if split is None:
        return list(man.frames)
    if split not in ("train", "val", "test"):
        raise ValueError(f"unknown split '{split}'")
    tr, va, te = split_slices(len(man), man.split)
    return list(man.frames[{"train": tr, "val": va, "test": te}[split]])


def _crop(xyz: np.ndarray) -> np.ndarray:
    keep = np.hypot(xyz[:, 0], xyz[:, 1]) <= DETECTION_RANGE_M
    return xyz[keep]


class _PooledExtremes:
    """Streaming mean/min/max over pooled coordinates (one axis)."""

    def __init__(self):
        self.n = 0
        self.total = 0.0
        self.lo = math.inf
        self.hi = -math.inf

    def add(self, values: np.ndarray):
        if values.size == 0:
            return
        self.n += values.size
        self.total += float(values.sum())
        self.lo = min(self.lo, float(values.min()))
        self.hi = max(self.hi, float(values.max()))

    def summary(self) -> Summary:
        if self.n == 0:
            return Summary()
        return Summary(self.total / self.n, self.lo, self.hi)


def dataset_stats(man: DatasetManifest, split: str | None = "train") -> DatasetStats:
    """Summary column for one manifest (training split by default).

    Clouds are cropped to 100 m horizontal distance before any statistic;
    unreadable frames are recorded in `errors` and excluded.
    """
    out = DatasetStats(name=man.name)
    axes = (_PooledExtremes(), _PooledExtremes(), _PooledExtremes())
    per_cloud: list[int] = []
    per_target: list[int] = []
    for fr in frames_in_split(man, split):
        try:
            cloud = man.load_cloud(fr)
            label = man.load_labels(fr)
        except (OSError, ToolkitError) as e:
            out.errors.append(f"{fr.frame_id}: {e}")
            continue
        xyz = _crop(cloud.xyz)
        per_cloud.append(xyz.shape[0])
        for k in range(3):
            axes[k].add(xyz[:, k])
        for box, _ in label.boxes:
            per_target.append(int(points_in_box(xyz, box).shape[0]))
        out.n_frames += 1
    out.n_targets = len(per_target)
    out.x, out.y, out.z = (a.summary() for a in axes)
    out.points_per_cloud = Summary.of(np.array(per_cloud))
    out.points_per_target = Summary.of(np.array(per_target))
    return out


@dataclass
class StatsReport:
    """Two summary columns plus pairing counts and the in-box ratio
    diagnostic (mean points per target, first dataset over second)."""

    a: DatasetStats
    b: DatasetStats
    matched: int = 0
    unmatched_a: int = 0
    unmatched_b: int = 0

    @property
    def in_box_ratio(self) -> float:
        return self.a.points_per_target.mean / self.b.points_per_target.mean

    def to_dict(self) -> dict:
        ratio = self.in_box_ratio
        return {
            "a": self.a.to_dict(),
            "b": self.b.to_dict(),
            "matched_frames": self.matched,
            "unmatched_a": self.unmatched_a,
            "unmatched_b": self.unmatched_b,
            "in_box_ratio": None if math.isnan(ratio) else ratio,
        }

    def save_json(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def to_text(self) -> str:
        """Aligned two-column table of every summary row."""
        rows: list[tuple[str, float, float]] = []
        for axis in ("x", "y", "z"):
            sa: Summary = getattr(self.a, axis)
            sb: Summary = getattr(self.b, axis)
            for stat in ("mean", "min", "max"):
                rows.append(
                    (f"{stat} {axis} [m]", getattr(sa, stat), getattr(sb, stat))
                )
        for attr, label in (
            ("points_per_cloud", "points per cloud"),
            ("points_per_target", "points per target"),
        ):
            sa, sb = getattr(self.a, attr), getattr(self.b, attr)
            for stat in ("mean", "min", "max"):
                rows.append((f"{stat} {label}", getattr(sa, stat), getattr(sb, stat)))
        name_a = self.a.name or "a"
        name_b = self.b.name or "b"
        width = max(len(r[0]) for r in rows)
        lines = [f"{'':<{width}}  {name_a:>14} {name_b:>14}"]
        for label, va, vb in rows:
            lines.append(f"{label:<{width}}  {va:>14.3f} {vb:>14.3f}")
        ratio = self.in_box_ratio
        if not math.isnan(ratio):
            lines.append(
                f"{'in-box ratio':<{width}}  {ratio:>14.4f} ({100 * ratio:.0f}%)"
            )
        lines.append(
            f"{'paired frames':<{width}}  {self.matched:>14d} "
            f"(+{self.unmatched_a} only {name_a}, +{self.unmatched_b} only {name_b})"
        )
        return "\n".join(lines)


def compare_stats(
    a: DatasetManifest, b: DatasetManifest, split: str | None = "train"
) -> StatsReport:
    """Side-by-side statistics of two manifests with frame pairing counts."""
    pairing = pair_frames(a, b)
    return StatsReport(
        a=dataset_stats(a, split),
        b=dataset_stats(b, split),
        matched=pairing.n_matched,
        unmatched_a=len(pairing.only_a),
        unmatched_b=len(pairing.only_b),
    )


@dataclass
class LocationHistogram:
    """2D target-center histogram over ego-frame x, y in [-100, 100] m with
    per-axis marginals."""

    cell_size: float
    counts: np.ndarray

    @property
    def n_cells(self) -> int:
        return self.counts.shape[0]

    def edges(self) -> np.ndarray:
        return -HIST_EXTENT + np.arange(self.n_cells + 1) * self.cell_size

    @property
    def marginal_x(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def marginal_y(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def save_csv(self, path) -> None:
        """Grid CSV: one row per cell with nonzero-count cells included too,
        columns x_lo, y_lo, count."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        e = self.edges()
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["x_lo", "y_lo", "count"])
            for i in range(self.n_cells):
                for j in range(self.n_cells):
                    writer.writerow([f"{e[i]:.3f}", f"{e[j]:.3f}", int(self.counts[i, j])])


def location_histogram(
    labels: list[FrameLabel], cell_size: float = DEFAULT_CELL_SIZE
) -> LocationHistogram:
    """Bin every target's (x, y) center into the ego-frame grid.

    Every target within the detection range lands in exactly one cell; the
    rare exact +100 m edge clamps into the last cell.
    """
    n = int(math.ceil(2 * HIST_EXTENT / cell_size))
    counts = np.zeros((n, n), dtype=np.int64)
    for label in labels:
        for box, _ in label.boxes:
            i = min(int((box.center[0] + HIST_EXTENT) // cell_size), n - 1)
            j = min(int((box.center[1] + HIST_EXTENT) // cell_size), n - 1)
            counts[max(i, 0), max(j, 0)] += 1
    return LocationHistogram(cell_size, counts)


def bucketize_targets(
    labels: list[FrameLabel],
) -> tuple[dict[RangeBucket, list[tuple[str, BoundingBox3D, str]]], list[tuple[str, BoundingBox3D, str]]]:
    """Partition targets into range buckets by center distance; targets past
    the detection range go to the separate overflow list."""
    buckets: dict[RangeBucket, list] = {
        RangeBucket.CLOSE: [],
        RangeBucket.MID: [],
        RangeBucket.LONG: [],
    }
    out_of_range: list[tuple[str, BoundingBox3D, str]] = []
    for label in labels:
        for box, vid in label.boxes:
            entry = (label.frame_id, box, vid)
            if box.horizontal_distance() > DETECTION_RANGE_M:
                out_of_range.append(entry)
            else:
                buckets[bucket_of(box)].append(entry)
    return buckets, out_of_range
