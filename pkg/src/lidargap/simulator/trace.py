"""Scenario replay: cast the rig's rays into the scene at recorded poses and
emit clean synthetic clouds with exact labels."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..core.geometry import (
    DETECTION_RANGE_M,
    FrameLabel,
    PointCloud,
    Trajectory,
    TrajectorySample,
    VehicleDims,
    interpolate_pose,
    rotation_z,
    world_box_to_ego,
)
from ..core.io import DatasetManifest, FrameRecord, save_labels, save_manifest, save_point_cloud
from ..errors import ConfigurationError, TrajectorySpanError
from .bvh import BVH, build_bvh
from .mesh import TriangleMesh, clean_mesh
from .rig import SensorRig, generate_rays


@dataclass
class Scene:
    """Static world geometry plus one canonical vehicle mesh.

    The vehicle mesh is axis-aligned, centered at the box center (length
    along +x), and instanced at each target pose during tracing; its axis
    extents define the label dimensions.
    """

    static_mesh: TriangleMesh
    vehicle_mesh: TriangleMesh
    static_bvh: BVH
    vehicle_bvh: BVH
    vehicle_dims: VehicleDims


@dataclass
class FrameScenario:
    """Poses of everyone at one instant: the ego and all other vehicles."""

    t: float
    ego: TrajectorySample
    others: list[tuple[str, TrajectorySample]]


def build_scene(static_mesh: TriangleMesh, vehicle_mesh: TriangleMesh) -> Scene:
    """Clean both meshes, build their hierarchies, derive vehicle dims from
    the vehicle mesh's axis extents."""
    static_mesh = clean_mesh(static_mesh)
    vehicle_mesh = clean_mesh(vehicle_mesh)
    if static_mesh.n_triangles == 0:
        raise ConfigurationError("static mesh has no triangles")
    if vehicle_mesh.n_triangles == 0:
        raise ConfigurationError("vehicle mesh has no triangles")
    extent = vehicle_mesh.vertices.max(axis=0) - vehicle_mesh.vertices.min(axis=0)
    dims = VehicleDims(float(extent[0]), float(extent[1]), float(extent[2]))
    return Scene(
        static_mesh=static_mesh,
        vehicle_mesh=vehicle_mesh,
        static_bvh=build_bvh(static_mesh),
        vehicle_bvh=build_bvh(vehicle_mesh),
        vehicle_dims=dims,
    )


def trace_frame(
    scene: Scene, scenario: FrameScenario, rig: SensorRig, frame_id: str = ""
) -> tuple[PointCloud, FrameLabel]:
    """One clean scan: nearest hit per ray against the static mesh and every
    instanced vehicle, returned in the ego frame. No noise, no dropout;
    misses produce no point. Labels are the exact target boxes; targets
    beyond the detection range are not labeled.
    """
    origins, dirs, max_t = generate_rays(rig, scenario.ego)
    best_t, _ = scene.static_bvh.cast(origins, dirs, max_t)
    for _, pose in scenario.others:
        # Ray transform into the vehicle's canonical frame instead of
        # re-meshing: local = R(-yaw) (x - position).
        rot = rotation_z(pose.yaw)
        o_local = (origins - pose.position_array) @ rot
        d_local = dirs @ rot
        t_v, _ = scene.vehicle_bvh.cast(o_local, d_local, max_t)
        best_t = np.minimum(best_t, t_v)

    hit = np.isfinite(best_t)
    p_world = origins[hit] + best_t[hit, None] * dirs[hit]
    p_ego = (p_world - scenario.ego.position_array) @ rotation_z(scenario.ego.yaw)
    cloud = PointCloud(
        p_ego, np.zeros(p_ego.shape[0]), frame_id=frame_id, timestamp=scenario.t
    )

    label = FrameLabel(frame_id)
    for vid, pose in scenario.others:
        box = world_box_to_ego(scenario.ego, pose, scene.vehicle_dims)
        if box.horizontal_distance() <= DETECTION_RANGE_M:
            label.boxes.append((box, vid))
    return cloud, label


def _common_span(trajectories: dict[str, Trajectory]) -> tuple[float, float]:
    lo = max(tr.span[0] for tr in trajectories.values())
    hi = min(tr.span[1] for tr in trajectories.values())
    if lo > hi:
        spans = ", ".join(
            f"{vid}=[{tr.span[0]:.3f}, {tr.span[1]:.3f}]"
            for vid, tr in sorted(trajectories.items())
        )
        raise TrajectorySpanError(f"trajectory time spans do not overlap: {spans}")
    return lo, hi


def replay_scenarios(
    trajectories: dict[str, Trajectory], ego_id: str, stride: int = 1
) -> list[tuple[str, FrameScenario]]:
    """(frame_id, scenario) list for every stride-th ego sample inside the
    common time span of all trajectories.

    Frame ids number the eligible ego samples (zero-padded), so the same
    trajectories always produce the same ids regardless of stride; stride 5
    keeps ids 000000, 000005, ...
    """
    if ego_id not in trajectories:
        raise ConfigurationError(f"ego trajectory '{ego_id}' not found")
    if stride < 1:
        raise ConfigurationError(f"stride must be >= 1, got {stride}")
    ego = trajectories[ego_id]
    lo, hi = _common_span(trajectories)
    eligible = np.nonzero((ego.t >= lo) & (ego.t <= hi))[0]
    if eligible.size == 0:
        raise TrajectorySpanError(
            f"ego trajectory has no samples inside the common span [{lo:.3f}, {hi:.3f}]"
        )
    out = []
    for j, k in enumerate(eligible):
        if j % stride != 0:
            continue
        t = float(ego.t[k])
        others = [
            (vid, interpolate_pose(tr, t))
            for vid, tr in sorted(trajectories.items())
            if vid != ego_id
        ]
        out.append((f"{j:06d}", FrameScenario(t, ego.sample_at(int(k)), others)))
    return out


def simulate_dataset(
    scene: Scene,
    trajectories: dict[str, Trajectory],
    ego_id: str,
    rig: SensorRig,
    out_dir,
    stride: int = 5,
    name: str = "sim",
    threads: int | None = None,
) -> DatasetManifest:
    """Replay every stride-th frame, write clouds/labels/manifest under
    `out_dir`, and return the manifest.

    Deterministic: the tracer has no randomness, so identical inputs give
    bitwise-identical files, whatever `threads` is.
    """
    out_dir = Path(out_dir)
    scenarios = replay_scenarios(trajectories, ego_id, stride)

    def run(item: tuple[str, FrameScenario]) -> FrameRecord:
        fid, scenario = item
        cloud, label = trace_frame(scene, scenario, rig, frame_id=fid)
        cloud_rel = f"clouds/{fid}.bin"
        label_rel = f"labels/{fid}.txt"
        save_point_cloud(cloud, out_dir / cloud_rel)
        save_labels(label, out_dir / label_rel)
        return FrameRecord(fid, scenario.t, cloud_rel, label_rel)

    (out_dir / "clouds").mkdir(parents=True, exist_ok=True)
    (out_dir / "labels").mkdir(parents=True, exist_ok=True)
    if threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            frames = list(pool.map(run, scenarios))
    else:
        frames = [run(s) for s in scenarios]
    man = DatasetManifest(frames, name=name, root=out_dir)
    save_manifest(man, out_dir / "manifest.json")
    return man
