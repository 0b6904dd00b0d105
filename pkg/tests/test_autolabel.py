import math

import numpy as np
import pytest

from lidargap.autolabel import (
    RefineConfig,
    autolabel_dataset,
    initial_box,
    label_frame,
    refine_box,
)
from lidargap.core.geometry import (
    BoundingBox3D,
    PointCloud,
    TrajectorySample,
    VehicleDims,
    rotation_z,
)
from lidargap.core.io import load_manifest
from lidargap.errors import ConfigurationError

from helpers import (
    straight_trajectory,
    surface_points_on_box,
    write_dataset,
)

DIMS = VehicleDims(4.0, 2.0, 1.5)


def _surface_cloud(rng, center, yaw, n=400, jitter=0.0):
    pts = surface_points_on_box(rng, center, (DIMS.l, DIMS.w, DIMS.h), yaw, n, jitter)
    return PointCloud(pts)


def test_initial_box_matches_relative_pose():
    ego = TrajectorySample(0.0, (5.0, 5.0, 0.0), math.pi / 2)
    tgt = TrajectorySample(0.0, (5.0, 15.0, 0.5), math.pi / 2)
    box = initial_box(ego, tgt, DIMS)
    assert np.allclose(box.center, [10.0, 0.0, 0.5], atol=1e-9)
    assert box.yaw == pytest.approx(0.0, abs=1e-12)


def test_refine_recovers_known_offset():
    rng = np.random.default_rng(3)
    cfg = RefineConfig()
    for _ in range(20):
        yaw = rng.uniform(-math.pi, math.pi)
        true_center = np.append(rng.uniform(5, 30, 2), 0.75)
        cloud = _surface_cloud(rng, true_center, yaw, n=800)
        offset_local = rng.uniform(-0.8, 0.8, 2)
        offset_world = rotation_z(yaw) @ np.array([offset_local[0], offset_local[1], 0.0])
        start = BoundingBox3D(true_center + offset_world, DIMS.l, DIMS.w, DIMS.h, yaw)
        res = refine_box(cloud, start, cfg)
        assert not res.low_confidence
        err = np.linalg.norm(res.box.center[:2] - true_center[:2])
        assert err <= 2 * cfg.step + 1e-9


def test_refine_shift_bounded_by_radius():
    rng = np.random.default_rng(5)
    cfg = RefineConfig(search_radius_xy=1.0, step=0.1)
    cloud = _surface_cloud(rng, np.array([20.0, 0.0, 0.75]), 0.3)
    # start far off so the best shift saturates at the search boundary
    start = BoundingBox3D(np.array([21.5, 0.5, 0.75]), DIMS.l, DIMS.w, DIMS.h, 0.3)
    res = refine_box(cloud, start, cfg)
    assert max(abs(res.dx), abs(res.dy)) <= cfg.search_radius_xy + 1e-12


def test_refine_score_not_worse_than_zero_shift():
    rng = np.random.default_rng(7)
    cfg = RefineConfig()
    for _ in range(10):
        cloud = _surface_cloud(rng, np.array([15.0, 3.0, 0.75]), 1.0)
        start = BoundingBox3D(
            np.array([15.0, 3.0, 0.75]) + np.append(rng.uniform(-0.5, 0.5, 2), 0.0),
            DIMS.l, DIMS.w, DIMS.h, 1.0,
        )
        res = refine_box(cloud, start, cfg)
        zero = refine_box(cloud, start, RefineConfig(search_radius_xy=1e-9, step=1.0))
        assert res.score >= zero.score - 1e-12


def test_refine_low_confidence_returns_initial():
    rng = np.random.default_rng(9)
    cfg = RefineConfig(min_points=5)
    # only 3 points near the box: flagged, box unchanged
    pts = np.array([[10.0, 0.0, 0.0], [10.2, 0.1, 0.1], [9.9, -0.1, 0.0]])
    cloud = PointCloud(np.concatenate([pts, rng.uniform(50, 60, (100, 3))]))
    start = BoundingBox3D(np.array([10.0, 0.0, 0.0]), DIMS.l, DIMS.w, DIMS.h, 0.0)
    res = refine_box(cloud, start, cfg)
    assert res.low_confidence
    assert res.dx == 0.0 and res.dy == 0.0
    assert np.array_equal(res.box.center, start.center)


def test_refine_plateau_prefers_zero_shift():
    # regular lattice, spacing divides both step and box dims, points offset
    # off every candidate edge: all shifts capture the same count, tie at (0, 0)
    ax = np.arange(-2.0, 6.0, 0.05) + 0.025
    gx, gy = np.meshgrid(ax, ax, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, 0.75)])
    cloud = PointCloud(pts)
    start = BoundingBox3D(np.array([2.0, 1.0, 0.75]), DIMS.l, DIMS.w, DIMS.h, 0.0)
    res = refine_box(cloud, start, RefineConfig())
    assert res.dx == 0.0 and res.dy == 0.0


def test_refine_far_clutter_irrelevant():
    rng = np.random.default_rng(13)
    cloud = _surface_cloud(rng, np.array([12.0, -2.0, 0.75]), 0.4)
    clutter = PointCloud(
        np.concatenate([cloud.xyz, rng.uniform(40, 90, (5000, 3))])
    )
    start = BoundingBox3D(np.array([12.3, -1.8, 0.75]), DIMS.l, DIMS.w, DIMS.h, 0.4)
    r1 = refine_box(cloud, start, RefineConfig())
    r2 = refine_box(clutter, start, RefineConfig())
    assert r1.dx == r2.dx and r1.dy == r2.dy
    assert r1.score == r2.score


def test_refine_rotation_equivariance():
    rng = np.random.default_rng(17)
    cfg = RefineConfig()
    cloud = _surface_cloud(rng, np.array([10.0, 5.0, 0.75]), 0.2)
    start = BoundingBox3D(np.array([10.4, 5.3, 0.75]), DIMS.l, DIMS.w, DIMS.h, 0.2)
    res = refine_box(cloud, start, cfg)

    ang = 1.3
    rot = rotation_z(ang)
    cloud_r = PointCloud(cloud.xyz @ rot.T)
    start_r = BoundingBox3D(rot @ start.center, DIMS.l, DIMS.w, DIMS.h, start.yaw + ang)
    res_r = refine_box(cloud_r, start_r, cfg)
    back = rotation_z(-ang) @ res_r.box.center
    assert np.linalg.norm(back[:2] - res.box.center[:2]) <= cfg.step + 1e-9


def test_refine_determinism():
    rng = np.random.default_rng(19)
    cloud = _surface_cloud(rng, np.array([14.0, 1.0, 0.75]), -0.6)
    start = BoundingBox3D(np.array([14.2, 1.3, 0.75]), DIMS.l, DIMS.w, DIMS.h, -0.6)
    r1 = refine_box(cloud, start, RefineConfig())
    r2 = refine_box(cloud, start, RefineConfig())
    assert r1.dx == r2.dx and r1.dy == r2.dy and r1.score == r2.score


def test_label_frame_drops_far_targets():
    rng = np.random.default_rng(23)
    trajs = {
        "ego": straight_trajectory("ego", (0, 0), 0.0, 0.0, z=0.0),
        "far": straight_trajectory("far", (500, 0), 0.0, 0.0),
    }
    cloud = PointCloud(rng.uniform(-5, 5, (50, 3)))
    label, log, errors = label_frame(cloud, 1.0, trajs, "ego", DIMS, RefineConfig())
    assert label.boxes == []
    assert log == [] and errors == []


def test_label_frame_records_span_gap():
    rng = np.random.default_rng(29)
    trajs = {
        "ego": straight_trajectory("ego", (0, 0), 0.0, 1.0, t0=0.0, t1=10.0, z=0.0),
        "v2": straight_trajectory("v2", (10, 0), 0.0, 1.0, t0=5.0, t1=10.0),
    }
    cloud = PointCloud(rng.uniform(-5, 5, (50, 3)))
    # t=1 is outside v2's span: target skipped, not fatal
    label, _, errors = label_frame(cloud, 1.0, trajs, "ego", DIMS, RefineConfig())
    assert label.boxes == []
    assert len(errors) == 1 and "v2" in errors[0]


def _sim_like_dataset(tmp_path, rng, n_frames=8, gps_sigma=0.0):
    """Clouds synthesized from box surfaces at trajectory poses.

    Only the two faces turned toward the ego carry points, as a ranging
    sensor would see them.
    """
    ego = straight_trajectory("ego", (0.0, 0.0), 0.0, 2.0, t0=0.0, t1=10.0, dt=0.5, z=0.0)
    tgt = straight_trajectory("v2", (12.0, 2.0), 0.0, 2.0, t0=0.0, t1=10.0, dt=0.5, z=0.75)
    frames = []
    for i in range(n_frames):
        t = 0.5 * i
        # ego at (2t, 0, 0) yaw 0; target at (12 + 2t, 2, 0.75)
        center_world = np.array([12.0 + 2.0 * t, 2.0, 0.75])
        ego_pos = np.array([2.0 * t, 0.0, 0.0])
        pts_world = surface_points_on_box(
            rng, center_world, (DIMS.l, DIMS.w, DIMS.h), 0.0, 500,
            jitter=0.0, faces=(1, 3),
        )
        frames.append((f"{i:06d}", t, pts_world - ego_pos, None))
    man = write_dataset(tmp_path / "ds", frames, name="mini")
    trajs = {"ego": ego, "v2": tgt}
    if gps_sigma > 0:
        noisy = tgt.positions.copy()
        noisy[:, :2] += rng.normal(0, gps_sigma, (len(tgt.t), 2))
        from lidargap.core.geometry import Trajectory

        trajs["v2"] = Trajectory("v2", tgt.t, noisy, tgt.yaws)
    return man, trajs


def test_autolabel_dataset_end_to_end(tmp_path):
    rng = np.random.default_rng(31)
    man, trajs = _sim_like_dataset(tmp_path, rng, gps_sigma=0.05)
    result = autolabel_dataset(
        man, trajs, "ego", DIMS, RefineConfig(), tmp_path / "out"
    )
    assert result.errors == []
    labeled = load_manifest(tmp_path / "out" / "manifest.json")
    assert labeled.name == "mini-labeled"
    assert len(labeled) == len(man)
    # every frame got exactly one box for v2, close to truth
    for i, fr in enumerate(labeled.frames):
        label = labeled.load_labels(fr)
        assert [vid for _, vid in label.boxes] == ["v2"]
        box = label.boxes[0][0]
        t = 0.5 * i
        true_center_ego = np.array([12.0, 2.0, 0.75])  # constant relative offset
        assert np.linalg.norm(box.center[:2] - true_center_ego[:2]) <= 0.2
    log = (tmp_path / "out" / "refine_log.csv").read_text().splitlines()
    assert log[0] == "frame_id,vehicle_id,dx,dy,score,flag"
    assert len(log) == 1 + len(man)
    # clouds referenced from the source dataset, not copied
    assert not (tmp_path / "out" / "clouds").exists()


def test_autolabel_missing_ego_raises(tmp_path):
    rng = np.random.default_rng(37)
    man, trajs = _sim_like_dataset(tmp_path, rng)
    del trajs["ego"]
    with pytest.raises(ConfigurationError):
        autolabel_dataset(man, trajs, "ego", DIMS, RefineConfig(), tmp_path / "out")


def test_autolabel_out_of_span_frames_recorded(tmp_path):
    rng = np.random.default_rng(41)
    man, trajs = _sim_like_dataset(tmp_path, rng)
    result = autolabel_dataset(
        man, trajs, "ego", DIMS, RefineConfig(), tmp_path / "out", time_shift=100.0
    )
    # every frame lands outside the trajectory span: recorded, none written
    assert len(result.errors) == len(man)
    assert len(result.manifest.frames) == 0


def test_autolabel_threads_deterministic(tmp_path):
    rng = np.random.default_rng(43)
    man, trajs = _sim_like_dataset(tmp_path, rng, gps_sigma=0.05)
    r1 = autolabel_dataset(man, trajs, "ego", DIMS, RefineConfig(), tmp_path / "o1", threads=1)
    r2 = autolabel_dataset(man, trajs, "ego", DIMS, RefineConfig(), tmp_path / "o2", threads=4)
    for fr1, fr2 in zip(r1.manifest.frames, r2.manifest.frames):
        t1 = (tmp_path / "o1" / fr1.labels).read_text()
        t2 = (tmp_path / "o2" / fr2.labels).read_text()
        assert t1 == t2
