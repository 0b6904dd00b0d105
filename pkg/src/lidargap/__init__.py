"""Quantify the sim-to-real domain shift of LiDAR point cloud datasets.

The toolkit simulates scenario-identical synthetic scans from recorded
trajectories, applies sensor-effect models, auto-labels real scans from GPS
tracks, and measures the remaining gap with detection metrics (rotated 3D
IoU, 40-point interpolated AP) and point-set distances (Chamfer, Earth
Mover's).
"""

from . import (
    autolabel,
    core,
    detector,
    effects,
    errors,
    evaluation,
    similarity,
    simulator,
    stats,
    targets,
)

__version__ = "0.1.0"

__all__ = [
    "autolabel",
    "core",
    "detector",
    "effects",
    "errors",
    "evaluation",
    "similarity",
    "simulator",
    "stats",
    "targets",
    "__version__",
]
