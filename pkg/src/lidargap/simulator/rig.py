"""Multi-sensor LiDAR scan-pattern configuration and ray generation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..core.geometry import TrajectorySample, rotation_z
from ..errors import ValidationError


@dataclass(frozen=True)
class SensorConfig:
    """One spinning-sector LiDAR: angles in degrees, ranges in meters.

    `yaw_offset` is the boresight direction relative to the vehicle's +x
    axis; `mount_offset` is the sensor position relative to the ego origin.
    """

    horizontal_fov: float = 120.0
    yaw_offset: float = 0.0
    channels: int = 32
    vertical_fov: tuple[float, float] = (-15.0, 15.0)
    horizontal_resolution: float = 0.2
    max_range: float = 250.0
    mount_offset: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.horizontal_fov <= 0:
            raise ValidationError("horizontal_fov must be positive")
        if self.channels < 1:
            raise ValidationError("channels must be >= 1")
        if self.horizontal_resolution <= 0:
            raise ValidationError("horizontal_resolution must be positive")
        if self.max_range <= 0:
            raise ValidationError("max_range must be positive")
        if self.vertical_fov[0] > self.vertical_fov[1]:
            raise ValidationError("vertical_fov must be (low, high)")

    @property
    def n_azimuth(self) -> int:
        return max(1, int(round(self.horizontal_fov / self.horizontal_resolution)))

    @property
    def rays_per_scan(self) -> int:
        return self.channels * self.n_azimuth


@dataclass(frozen=True)
class SensorRig:
    """A set of sensors fired together each frame."""

    sensors: tuple[SensorConfig, ...] = field(
        default_factory=lambda: tuple(
            SensorConfig(yaw_offset=o) for o in (0.0, 120.0, 240.0)
        )
    )

    def __post_init__(self):
        if len(self.sensors) == 0:
            raise ValidationError("rig needs at least one sensor")

    @property
    def rays_per_scan(self) -> int:
        return sum(s.rays_per_scan for s in self.sensors)


def default_rig() -> SensorRig:
    """Three 120-degree sensors at 0/120/240 covering 360 degrees."""
    return SensorRig()


def _sensor_angles(cfg: SensorConfig) -> tuple[np.ndarray, np.ndarray]:
    """(azimuths, elevations) in radians, relative to the sensor boresight.

    Azimuth steps are centered inside the fov; a single channel sits at the
    vertical fov midpoint.
    """
    n_az = cfg.n_azimuth
    res = math.radians(cfg.horizontal_resolution)
    start = -math.radians(cfg.horizontal_fov) / 2.0
    az = start + (np.arange(n_az) + 0.5) * res
    lo, hi = (math.radians(v) for v in cfg.vertical_fov)
    if cfg.channels == 1:
        el = np.array([(lo + hi) / 2.0])
    else:
        el = np.linspace(lo, hi, cfg.channels)
    return az, el


def generate_rays(
    rig: SensorRig, ego: TrajectorySample
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """World-frame rays for one scan: (origins, unit directions, max ranges).

    One ray per (sensor, channel, azimuth step), in that order. Origins sit
    at the ego position plus the yaw-rotated mount offset.
    """
    ego_rot = rotation_z(ego.yaw)
    origins = []
    dirs = []
    max_t = []
    for s in rig.sensors:
        az, el = _sensor_angles(s)
        yaw_total = ego.yaw + math.radians(s.yaw_offset) + az  # (n_az,)
        cos_el = np.cos(el)[:, None]
        sin_el = np.sin(el)[:, None]
        d = np.empty((s.channels, az.shape[0], 3))
        d[:, :, 0] = cos_el * np.cos(yaw_total)[None, :]
        d[:, :, 1] = cos_el * np.sin(yaw_total)[None, :]
        d[:, :, 2] = np.broadcast_to(sin_el, (s.channels, az.shape[0]))
        d = d.reshape(-1, 3)
        origin = ego.position_array + ego_rot @ np.asarray(s.mount_offset, dtype=np.float64)
        origins.append(np.broadcast_to(origin, d.shape))
        dirs.append(d)
        max_t.append(np.full(d.shape[0], s.max_range))
    return (
        np.ascontiguousarray(np.vstack(origins)),
        np.ascontiguousarray(np.vstack(dirs)),
        np.concatenate(max_t),
    )
