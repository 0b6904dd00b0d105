"""Ray-casting LiDAR simulation: meshes, BVH intersection, sensor rigs, and
trajectory replay."""

from .bvh import BVH, brute_force_cast, build_bvh
from .mesh import (
    TriangleMesh,
    clean_mesh,
    load_obj,
    load_stl,
    make_box_mesh,
    make_plane_mesh,
    merge_meshes,
    save_obj,
)
from .rig import SensorConfig, SensorRig, default_rig, generate_rays
from .trace import (
    FrameScenario,
    Scene,
    build_scene,
    replay_scenarios,
    simulate_dataset,
    trace_frame,
)

__all__ = [
    "BVH",
    "FrameScenario",
    "Scene",
    "SensorConfig",
    "SensorRig",
    "TriangleMesh",
    "brute_force_cast",
    "build_bvh",
    "build_scene",
    "clean_mesh",
    "default_rig",
    "generate_rays",
    "load_obj",
    "load_stl",
    "make_box_mesh",
    "make_plane_mesh",
    "merge_meshes",
    "replay_scenarios",
    "save_obj",
    "simulate_dataset",
    "trace_frame",
]
