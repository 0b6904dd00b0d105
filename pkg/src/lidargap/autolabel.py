"""Auto-labeling of real scans: interpolate recorded trajectories to each
cloud's timestamp, place vehicle-sized boxes, then refine each box against
the local point distribution with a deterministic planar grid search."""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core.geometry import (
    DETECTION_RANGE_M,
    BoundingBox3D,
    FrameLabel,
    PointCloud,
    Trajectory,
    TrajectorySample,
    VehicleDims,
    box_canonical_coords,
    interpolate_pose,
    rotation_z,
    world_box_to_ego,
)
from .core.io import DatasetManifest, FrameRecord, save_labels, save_manifest
from .errors import ConfigurationError, ToolkitError, ValidationError


@dataclass(frozen=True)
class RefineConfig:
    """Grid-search refinement parameters (meters; penalty is unitless)."""

    search_radius_xy: float = 1.0
    step: float = 0.1
    shell_margin: float = 0.3
    shell_penalty: float = 0.5
    min_points: int = 5

    def __post_init__(self):
        if self.step <= 0:
            raise ValidationError("step must be positive")
        if self.search_radius_xy < 0:
            raise ValidationError("search_radius_xy must be >= 0")
        if self.shell_penalty < 0:
            raise ValidationError("shell_penalty must be >= 0")


@dataclass
class RefineResult:
    """Refined box plus the applied shift (in the box's yaw-aligned frame),
    its score, and the low-confidence flag raised when too few points
    support the result."""

    box: BoundingBox3D
    dx: float
    dy: float
    score: float
    low_confidence: bool


def initial_box(
    ego: TrajectorySample, target: TrajectorySample, dims: VehicleDims
) -> BoundingBox3D:
    """GPS-derived starting box: the target pose expressed in the ego frame."""
    return world_box_to_ego(ego, target, dims)


def refine_box(cloud: PointCloud, box: BoundingBox3D, cfg: RefineConfig) -> RefineResult:
    """Search planar shifts (dx, dy) on a step grid within the search radius,
    in the box's yaw-aligned frame, maximizing

        score = points inside the box - penalty * points in the shell

    where the shell is the box grown by the margin minus the box itself.
    Ties prefer the smallest shift norm, then lexicographic (dx, dy). The
    shift leaves z, yaw, and dims untouched. When the winning box holds
    fewer than min_points points the initial box is returned, flagged.
    """
    n = int(round(cfg.search_radius_xy / cfg.step))
    offsets = np.arange(-n, n + 1) * cfg.step
    dx_grid, dy_grid = np.meshgrid(offsets, offsets, indexing="ij")
    dx_flat = dx_grid.ravel()
    dy_flat = dy_grid.ravel()

    # Work in the box's canonical frame: a world shift of R(yaw)(dx, dy, 0)
    # is a canonical shift of (dx, dy, 0).
    local = box_canonical_coords(cloud.xyz, box)
    reach = cfg.search_radius_xy + cfg.shell_margin
    half = np.array([box.length / 2.0, box.width / 2.0, box.height / 2.0])
    near = (
        (np.abs(local[:, 0]) <= half[0] + reach)
        & (np.abs(local[:, 1]) <= half[1] + reach)
        & (np.abs(local[:, 2]) <= half[2] + cfg.shell_margin)
    )
    pts = local[near]

    if pts.shape[0] == 0:
        inside_counts = np.zeros(dx_flat.shape[0], dtype=np.int64)
        shell_counts = np.zeros(dx_flat.shape[0], dtype=np.int64)
    else:
        rx = np.abs(pts[None, :, 0] - dx_flat[:, None])
        ry = np.abs(pts[None, :, 1] - dy_flat[:, None])
        rz = np.abs(pts[:, 2])[None, :]
        inside = (rx <= half[0]) & (ry <= half[1]) & (rz <= half[2])
        grown = (
            (rx <= half[0] + cfg.shell_margin)
            & (ry <= half[1] + cfg.shell_margin)
            & (rz <= half[2] + cfg.shell_margin)
        )
        inside_counts = inside.sum(axis=1)
        shell_counts = (grown & ~inside).sum(axis=1)

    scores = inside_counts - cfg.shell_penalty * shell_counts
    norm2 = dx_flat**2 + dy_flat**2
    best = int(np.lexsort((dy_flat, dx_flat, norm2, -scores))[0])
    dx, dy = float(dx_flat[best]), float(dy_flat[best])
    score = float(scores[best])

    if inside_counts[best] < cfg.min_points:
        zero = int(np.nonzero((dx_flat == 0.0) & (dy_flat == 0.0))[0][0])
        return RefineResult(box, 0.0, 0.0, float(scores[zero]), True)

    shifted = box.translated(rotation_z(box.yaw) @ np.array([dx, dy, 0.0]))
    return RefineResult(shifted, dx, dy, score, False)


@dataclass
class AutolabelResult:
    """Labeled manifest plus the refinement log and any per-frame errors."""

    manifest: DatasetManifest
    log: list[tuple[str, str, float, float, float, bool]]
    errors: list[str]


def _link_path(target: Path, base: Path) -> str:
    """Manifest-relative path when the file lives under the manifest dir,
    absolute otherwise (the clouds of a labeled dataset stay in place)."""
    target = target.resolve()
    base = base.resolve()
    try:
        return target.relative_to(base).as_posix()
    except ValueError:
        return os.fspath(target)


def label_frame(
    cloud: PointCloud,
    t: float,
    trajectories: dict[str, Trajectory],
    ego_id: str,
    dims: VehicleDims,
    cfg: RefineConfig,
) -> tuple[FrameLabel, list[tuple[str, str, float, float, float, bool]], list[str]]:
    """Label one cloud: interpolate every vehicle to time t, box the targets
    within detection range, refine each box. Targets whose trajectory does
    not cover t are skipped and reported."""
    errors: list[str] = []
    log: list[tuple[str, str, float, float, float, bool]] = []
    label = FrameLabel(cloud.frame_id)
    ego = interpolate_pose(trajectories[ego_id], t)
    for vid, traj in sorted(trajectories.items()):
        if vid == ego_id:
            continue
        try:
            pose = interpolate_pose(traj, t)
        except ToolkitError as e:
            errors.append(f"{cloud.frame_id}/{vid}: {e}")
            continue
        box = initial_box(ego, pose, dims)
        if box.horizontal_distance() > DETECTION_RANGE_M:
            continue
        res = refine_box(cloud, box, cfg)
        label.boxes.append((res.box, vid))
        log.append((cloud.frame_id, vid, res.dx, res.dy, res.score, res.low_confidence))
    return label, log, errors


def autolabel_dataset(
    man: DatasetManifest,
    trajectories: dict[str, Trajectory],
    ego_id: str,
    dims: VehicleDims,
    cfg: RefineConfig,
    out_dir,
    time_shift: float = 0.0,
    threads: int | None = None,
) -> AutolabelResult:
    """Label every frame of a manifest from trajectories.

    `time_shift` is added to each cloud timestamp before trajectory lookup
    (constant per-dataset GPS-to-scan offset). Frames the ego trajectory
    cannot cover are skipped with a recorded error; the pipeline continues.
    Writes labels, the labeled manifest, and the refinement log to out_dir.
    """
    if ego_id not in trajectories:
        raise ConfigurationError(f"ego trajectory '{ego_id}' not found")
    out_dir = Path(out_dir)
    (out_dir / "labels").mkdir(parents=True, exist_ok=True)

    def run(fr: FrameRecord):
        t = fr.timestamp + time_shift
        try:
            cloud = man.load_cloud(fr)
            label, log, errors = label_frame(cloud, t, trajectories, ego_id, dims, cfg)
        except (OSError, ToolkitError) as e:
            return fr, None, [], [f"{fr.frame_id}: {e}"]
        return fr, label, log, errors

    if threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, man.frames))
    else:
        results = [run(fr) for fr in man.frames]

    frames: list[FrameRecord] = []
    all_log: list[tuple[str, str, float, float, float, bool]] = []
    all_errors: list[str] = []
    for fr, label, log, errors in results:
        all_errors.extend(errors)
        if label is None:
            continue
        label_rel = f"labels/{fr.frame_id}.txt"
        save_labels(label, out_dir / label_rel)
        frames.append(
            FrameRecord(
                fr.frame_id,
                fr.timestamp,
                _link_path(man.cloud_path(fr), out_dir),
                label_rel,
            )
        )
        all_log.extend(log)

    labeled = DatasetManifest(frames, name=f"{man.name}-labeled", root=out_dir, split=man.split)
    save_manifest(labeled, out_dir / "manifest.json")
    save_refine_log(all_log, out_dir / "refine_log.csv")
    return AutolabelResult(labeled, all_log, all_errors)


def save_refine_log(log, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["frame_id", "vehicle_id", "dx", "dy", "score", "flag"])
        for fid, vid, dx, dy, score, flag in log:
            writer.writerow([fid, vid, f"{dx:.3f}", f"{dy:.3f}", f"{score:.3f}", int(flag)])
