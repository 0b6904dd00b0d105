"""Domain types and the coordinate transforms every other module builds on.

Conventions: right-handed frames, z up, yaw measured counterclockwise around z
from +x, normalized to (-pi, pi]. Boxes are 7-DoF (center, l/w/h, yaw) with
roll and pitch identically zero. The ego frame is the sensing vehicle's local
frame; all labels live there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..errors import OutOfRangeError, TrajectorySpanError, ValidationError

# Single target class: race-car ground-truth dimensions used as the anchor.
ANCHOR_DIMS_LWH = (4.88, 1.90, 1.18)

# Horizontal detection range limit; targets farther out are not labeled.
DETECTION_RANGE_M = 100.0

TWO_PI = 2.0 * math.pi


def normalize_yaw(yaw: float) -> float:
    """Map an angle in radians to (-pi, pi]."""
    y = (yaw + math.pi) % TWO_PI - math.pi
    if y == -math.pi:
        return math.pi
    return y


def normalize_yaw_array(yaw: np.ndarray) -> np.ndarray:
    y = (np.asarray(yaw, dtype=np.float64) + np.pi) % TWO_PI - np.pi
    return np.where(y == -np.pi, np.pi, y)


def rotation_z(yaw: float) -> np.ndarray:
    """3x3 rotation matrix about z by `yaw` radians (counterclockwise)."""
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass
class PointCloud:
    """An ordered set of 3D points, optionally with per-point intensity.

    `xyz` is an (N, 3) float64 array in meters; `intensity` is (N,) in [0, 1]
    or None when the source had no intensity channel. Point order is
    significant and preserved by file round trips.
    """

    xyz: np.ndarray
    intensity: np.ndarray | None = None
    frame_id: str = ""
    timestamp: float | None = None

    def __post_init__(self):
        self.xyz = np.ascontiguousarray(np.asarray(self.xyz, dtype=np.float64))
        if self.xyz.size == 0:
            self.xyz = self.xyz.reshape(0, 3)
        if self.xyz.ndim != 2 or self.xyz.shape[1] != 3:
            raise ValidationError(f"xyz must be (N, 3), got {self.xyz.shape}")
        if not np.isfinite(self.xyz).all():
            raise ValidationError("point cloud contains non-finite coordinates")
        if self.intensity is not None:
            self.intensity = np.ascontiguousarray(
                np.asarray(self.intensity, dtype=np.float64)
            ).reshape(-1)
            if self.intensity.shape[0] != self.xyz.shape[0]:
                raise ValidationError(
                    f"intensity length {self.intensity.shape[0]} != point count {self.xyz.shape[0]}"
                )

    def __len__(self) -> int:
        return self.xyz.shape[0]

    def take(self, indices: np.ndarray) -> "PointCloud":
        """New cloud holding the selected points, original order of `indices`."""
        inten = None if self.intensity is None else self.intensity[indices]
        return PointCloud(self.xyz[indices], inten, self.frame_id, self.timestamp)


@dataclass(frozen=True)
class VehicleDims:
    """Length/width/height of a vehicle in meters."""

    l: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.l > 0 and self.w > 0 and self.h > 0):
            raise ValidationError(f"vehicle dims must be positive, got {self}")


ANCHOR_DIMS = VehicleDims(*ANCHOR_DIMS_LWH)


@dataclass
class BoundingBox3D:
    """7-DoF oriented box: center (ego frame, meters), l/w/h, yaw in (-pi, pi].

    Roll and pitch are zero by construction. `length` runs along the box x
    axis (heading), `width` along y, `height` along z.
    """

    center: np.ndarray
    length: float
    width: float
    height: float
    yaw: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64).reshape(3)
        if not np.isfinite(self.center).all():
            raise ValidationError("box center must be finite")
        if not (self.length > 0 and self.width > 0 and self.height > 0):
            raise ValidationError("box dimensions must be positive")
        if not math.isfinite(self.yaw):
            raise ValidationError("box yaw must be finite")
        self.yaw = normalize_yaw(self.yaw)

    @property
    def dims(self) -> VehicleDims:
        return VehicleDims(self.length, self.width, self.height)

    def horizontal_distance(self) -> float:
        return float(math.hypot(self.center[0], self.center[1]))

    def translated(self, offset) -> "BoundingBox3D":
        return BoundingBox3D(
            self.center + np.asarray(offset, dtype=np.float64),
            self.length,
            self.width,
            self.height,
            self.yaw,
        )


@dataclass(frozen=True)
class TrajectorySample:
    """One timestamped vehicle pose in the world frame."""

    t: float
    position: tuple[float, float, float]
    yaw: float
    speed: float | None = None

    def __post_init__(self):
        vals = (self.t, *self.position, self.yaw)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError("trajectory sample contains non-finite values")

    @property
    def position_array(self) -> np.ndarray:
        return np.array(self.position, dtype=np.float64)


@dataclass
class Trajectory:
    """Time-sorted poses of one vehicle; nominal 20 Hz but gaps are allowed."""

    vehicle_id: str
    t: np.ndarray
    positions: np.ndarray
    yaws: np.ndarray
    speeds: np.ndarray | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64).reshape(-1)
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.yaws = np.asarray(self.yaws, dtype=np.float64).reshape(-1)
        if self.speeds is not None:
            self.speeds = np.asarray(self.speeds, dtype=np.float64).reshape(-1)
        n = self.t.shape[0]
        if n < 2:
            raise ValidationError(
                f"trajectory '{self.vehicle_id}' needs >= 2 samples for interpolation, got {n}"
            )
        if self.positions.shape[0] != n or self.yaws.shape[0] != n:
            raise ValidationError("trajectory arrays have mismatched lengths")
        if self.speeds is not None and self.speeds.shape[0] != n:
            raise ValidationError("trajectory arrays have mismatched lengths")
        if not (np.isfinite(self.t).all() and np.isfinite(self.positions).all()):
            raise ValidationError("trajectory contains non-finite values")
        if not (np.diff(self.t) > 0).all():
            raise ValidationError(
                f"trajectory '{self.vehicle_id}' timestamps must be strictly increasing"
            )

    @classmethod
    def from_samples(cls, vehicle_id: str, samples: list[TrajectorySample]) -> "Trajectory":
        speeds = None
        if samples and all(s.speed is not None for s in samples):
            speeds = np.array([s.speed for s in samples])
        return cls(
            vehicle_id,
            np.array([s.t for s in samples]),
            np.array([s.position for s in samples]),
            np.array([s.yaw for s in samples]),
            speeds,
        )

    def __len__(self) -> int:
        return self.t.shape[0]

    @property
    def span(self) -> tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])

    def sample_at(self, i: int) -> TrajectorySample:
        speed = None if self.speeds is None else float(self.speeds[i])
        return TrajectorySample(
            float(self.t[i]), tuple(self.positions[i]), float(self.yaws[i]), speed
        )


@dataclass
class FrameLabel:
    """Ground-truth boxes of one frame: list of (box, vehicle_id) in ego frame."""

    frame_id: str
    boxes: list[tuple[BoundingBox3D, str]] = field(default_factory=list)


@dataclass
class Prediction:
    """A detector output box with confidence in [0, 1]."""

    frame_id: str
    box: BoundingBox3D
    confidence: float

    def __post_init__(self):
        if not math.isfinite(self.confidence):
            raise ValidationError("prediction confidence must be finite")


class RangeBucket(Enum):
    """Distance buckets over the horizontal target distance from the ego origin.

    Close=[0, 33.3), Mid=[33.3, 66.6), Long=[66.6, 100.0]; Full spans [0, 100].
    """

    CLOSE = "close"
    MID = "mid"
    LONG = "long"
    FULL = "full"

    @property
    def bounds(self) -> tuple[float, float]:
        return _BUCKET_BOUNDS[self]


_BUCKET_BOUNDS = {
    RangeBucket.CLOSE: (0.0, 33.3),
    RangeBucket.MID: (33.3, 66.6),
    RangeBucket.LONG: (66.6, 100.0),
    RangeBucket.FULL: (0.0, 100.0),
}


def bucket_of(box: BoundingBox3D) -> RangeBucket:
    """Range bucket of a box by horizontal center distance from the ego origin.

    Lower edges are half-open (33.3 -> Mid, 66.6 -> Long); 100.0 itself is
    Long. Raises OutOfRangeError beyond 100 m; the caller decides to drop.
    """
    d = box.horizontal_distance()
    if d > DETECTION_RANGE_M:
        raise OutOfRangeError(
            f"target at {d:.2f} m is beyond the {DETECTION_RANGE_M:.0f} m detection range",
            distance=d,
        )
    if d < 33.3:
        return RangeBucket.CLOSE
    if d < 66.6:
        return RangeBucket.MID
    return RangeBucket.LONG


def interpolate_pose(traj: Trajectory, t: float) -> TrajectorySample:
    """Pose at time `t`: linear position, shortest-arc yaw, no extrapolation.

    Exact samples are returned verbatim when `t` hits a stored timestamp.
    """
    t0, t1 = traj.span
    if not (t0 <= t <= t1):
        raise TrajectorySpanError(
            f"t={t} outside trajectory '{traj.vehicle_id}' span [{t0}, {t1}]"
        )
    i = int(np.searchsorted(traj.t, t))
    if i < len(traj) and traj.t[i] == t:
        return traj.sample_at(i)
    lo, hi = i - 1, i
    f = (t - traj.t[lo]) / (traj.t[hi] - traj.t[lo])
    pos = (1.0 - f) * traj.positions[lo] + f * traj.positions[hi]
    dyaw = normalize_yaw(float(traj.yaws[hi] - traj.yaws[lo]))
    yaw = normalize_yaw(float(traj.yaws[lo]) + f * dyaw)
    speed = None
    if traj.speeds is not None:
        speed = float((1.0 - f) * traj.speeds[lo] + f * traj.speeds[hi])
    return TrajectorySample(t, tuple(pos), yaw, speed)


def world_box_to_ego(
    ego: TrajectorySample, target: TrajectorySample, dims: VehicleDims
) -> BoundingBox3D:
    """Express a target pose as a 7-DoF box in the ego vehicle's frame."""
    delta = target.position_array - ego.position_array
    center = rotation_z(-ego.yaw) @ delta
    return BoundingBox3D(center, dims.l, dims.w, dims.h, target.yaw - ego.yaw)


def box_canonical_coords(xyz: np.ndarray, box: BoundingBox3D) -> np.ndarray:
    """Points expressed in the box frame: translate by -center, rotate by -yaw."""
    return (np.asarray(xyz, dtype=np.float64) - box.center) @ rotation_z(-box.yaw).T


def points_in_box(cloud: PointCloud | np.ndarray, box: BoundingBox3D) -> np.ndarray:
    """Indices of points inside the box, boundary included (closed faces)."""
    xyz = cloud.xyz if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    if xyz.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    local = box_canonical_coords(xyz, box)
    half = np.array([box.length / 2.0, box.width / 2.0, box.height / 2.0])
    inside = (np.abs(local) <= half).all(axis=1)
    return np.nonzero(inside)[0]
