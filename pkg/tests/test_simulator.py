import math
import struct

import numpy as np
import pytest

from lidargap.core.geometry import TrajectorySample
from lidargap.errors import ConfigurationError, FormatError, TrajectorySpanError, ValidationError
from lidargap.simulator import (
    SensorConfig,
    SensorRig,
    TriangleMesh,
    brute_force_cast,
    build_bvh,
    build_scene,
    clean_mesh,
    generate_rays,
    load_obj,
    load_stl,
    make_box_mesh,
    make_plane_mesh,
    merge_meshes,
    replay_scenarios,
    save_obj,
    simulate_dataset,
    trace_frame,
)
from lidargap.simulator.trace import FrameScenario

from helpers import straight_trajectory


# ------------------------------------------------------------------- mesh ---

def test_obj_round_trip(tmp_path):
    mesh = make_box_mesh(2.0, 1.0, 0.5)
    p = tmp_path / "box.obj"
    save_obj(mesh, p)
    back = load_obj(p)
    assert np.allclose(back.vertices, mesh.vertices, atol=1e-6)
    assert np.array_equal(back.triangles, mesh.triangles)


def test_obj_slash_faces(tmp_path):
    p = tmp_path / "m.obj"
    p.write_text(
        "v 0 0 0\nv 1 0 0\nv 0 1 0\n"
        "f 1/1 2/2 3/3\n"
        "f 1//1 2//2 3//3\n"
    )
    mesh = load_obj(p)
    assert mesh.triangles.shape == (2, 3)
    assert np.array_equal(mesh.triangles[0], [0, 1, 2])


def test_obj_errors_carry_line_numbers(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nf 1 2 5\n")
    with pytest.raises(FormatError) as exc:
        load_obj(p)
    assert ":3" in str(exc.value)
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3 4\n")
    with pytest.raises(FormatError):
        load_obj(p)


def test_stl_binary(tmp_path):
    # hand-built single-triangle binary file
    p = tmp_path / "t.stl"
    tri = [(0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)]
    body = struct.pack("<3f", 0.0, 0.0, 1.0)
    for v in tri:
        body += struct.pack("<3f", *v)
    body += struct.pack("<H", 0)
    p.write_bytes(b"\x00" * 80 + struct.pack("<I", 1) + body)
    mesh = load_stl(p)
    assert mesh.triangles.shape == (1, 3)
    assert np.allclose(mesh.vertices[mesh.triangles[0]], tri)


def test_stl_rejects_ascii_and_truncation(tmp_path):
    p = tmp_path / "a.stl"
    p.write_text("solid foo\nendsolid foo\n")
    with pytest.raises(FormatError):
        load_stl(p)
    p2 = tmp_path / "b.stl"
    p2.write_bytes(b"\x00" * 80 + struct.pack("<I", 2) + b"\x00" * 50)
    with pytest.raises(FormatError):
        load_stl(p2)


def test_clean_mesh_drops_degenerate():
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0]], dtype=float)
    tris = np.array([[0, 1, 2], [0, 1, 3]])  # second is collinear
    with pytest.warns(UserWarning):
        cleaned = clean_mesh(TriangleMesh(verts, tris))
    assert cleaned.triangles.shape == (1, 3)


def test_box_mesh_surface_area():
    l, w, h = 2.0, 1.0, 0.5
    mesh = make_box_mesh(l, w, h)
    assert mesh.triangles.shape == (12, 3)
    assert mesh.triangle_areas().sum() == pytest.approx(2 * (l * w + l * h + w * h))


def test_merge_meshes_offsets_indices():
    a = make_box_mesh(1, 1, 1)
    b = make_plane_mesh((-5, 5), (-5, 5), 0.0)
    merged = merge_meshes([a, b])
    assert merged.triangles.shape[0] == a.triangles.shape[0] + b.triangles.shape[0]
    assert merged.triangles.max() == merged.vertices.shape[0] - 1


# -------------------------------------------------------------------- bvh ---

def _random_soup(rng, n_tris, scale=10.0):
    base = rng.uniform(-scale, scale, (n_tris, 3))
    edge1 = rng.uniform(-1.5, 1.5, (n_tris, 3))
    edge2 = rng.uniform(-1.5, 1.5, (n_tris, 3))
    verts = np.concatenate([base, base + edge1, base + edge2], axis=0)
    tris = np.stack(
        [np.arange(n_tris), np.arange(n_tris) + n_tris, np.arange(n_tris) + 2 * n_tris],
        axis=1,
    )
    return TriangleMesh(verts, tris)


def test_bvh_matches_brute_force_exactly():
    rng = np.random.default_rng(41)
    for round_i in range(5):
        mesh = _random_soup(rng, int(rng.integers(5, 300)))
        bvh = build_bvh(mesh)
        origins = rng.uniform(-12, 12, (200, 3))
        dirs = rng.normal(size=(200, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        t_b, id_b = brute_force_cast(mesh, origins, dirs, 100.0)
        t_v, id_v = bvh.cast(origins, dirs, 100.0)
        assert np.array_equal(id_b, id_v)
        assert np.array_equal(t_b, t_v)


def test_bvh_axis_aligned_rays():
    # axis-aligned directions exercise the d == 0 slab branches
    mesh = make_box_mesh(2.0, 2.0, 2.0)
    bvh = build_bvh(mesh)
    origins = np.array([[5.0, 0.0, 0.0], [0.0, -7.0, 0.0], [0.0, 0.0, 9.0]])
    dirs = np.array([[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]])
    t_v, id_v = bvh.cast(origins, dirs, 100.0)
    t_b, id_b = brute_force_cast(mesh, origins, dirs, 100.0)
    assert np.allclose(t_v, [4.0, 6.0, 8.0], atol=1e-12)
    assert np.array_equal(id_v, id_b)
    assert np.array_equal(t_v, t_b)


def test_plane_hit_analytic():
    mesh = make_plane_mesh((-50, 50), (-50, 50), 0.0)
    bvh = build_bvh(mesh)
    # straight down from 3 m, then oblique at angle a: range = 3 / cos(a)
    for ang in (0.0, 0.3, 1.0):
        d = np.array([[math.sin(ang), 0.0, -math.cos(ang)]])
        t, hit_id = bvh.cast(np.array([[0.0, 0.0, 3.0]]), d, 500.0)
        assert hit_id[0] >= 0
        assert t[0] == pytest.approx(3.0 / math.cos(ang), abs=1e-6)


def test_miss_returns_inf():
    mesh = make_box_mesh(1.0, 1.0, 1.0)
    bvh = build_bvh(mesh)
    t, hit_id = bvh.cast(np.array([[5.0, 5.0, 5.0]]), np.array([[1.0, 0.0, 0.0]]), 100.0)
    assert hit_id[0] == -1 and np.isinf(t[0])


def test_max_range_cuts_hits():
    mesh = make_box_mesh(1.0, 1.0, 1.0)
    bvh = build_bvh(mesh)
    o = np.array([[10.0, 0.0, 0.0]])
    d = np.array([[-1.0, 0.0, 0.0]])
    t, hit_id = bvh.cast(o, d, 5.0)
    assert hit_id[0] == -1
    t, hit_id = bvh.cast(o, d, 9.6)
    assert hit_id[0] >= 0 and t[0] == pytest.approx(9.5, abs=1e-9)


def test_ray_origin_inside_box():
    mesh = make_box_mesh(2.0, 2.0, 2.0)
    bvh = build_bvh(mesh)
    t, hit_id = bvh.cast(np.zeros((1, 3)), np.array([[1.0, 0.0, 0.0]]), 100.0)
    assert hit_id[0] >= 0
    assert t[0] == pytest.approx(1.0, abs=1e-9)


def test_per_ray_max_t_array():
    mesh = make_box_mesh(2.0, 2.0, 2.0)
    bvh = build_bvh(mesh)
    o = np.array([[5.0, 0.0, 0.0], [5.0, 0.0, 0.0]])
    d = np.array([[-1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
    t, hit_id = bvh.cast(o, d, np.array([3.0, 50.0]))
    assert hit_id[0] == -1 and hit_id[1] >= 0


# -------------------------------------------------------------------- rig ---

def test_rig_ray_counts():
    rig = SensorRig()
    assert sum(s.rays_per_scan for s in rig.sensors) == 3 * 32 * 600
    ego = TrajectorySample(0.0, (0.0, 0.0, 1.8), 0.0)
    origins, dirs, max_t = generate_rays(rig, ego)
    assert origins.shape == (57600, 3)
    assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0, atol=1e-12)
    assert np.all(max_t == 250.0)


def test_rig_mount_offset_rotates_with_ego():
    cfg = SensorConfig(channels=1, horizontal_fov=1.0, horizontal_resolution=1.0,
                       vertical_fov=(0.0, 0.0), mount_offset=(1.0, 0.0, 0.5))
    rig = SensorRig((cfg,))
    ego = TrajectorySample(0.0, (10.0, 20.0, 1.0), math.pi / 2)
    origins, dirs, _ = generate_rays(rig, ego)
    assert np.allclose(origins[0], [10.0, 21.0, 1.5], atol=1e-12)
    # single forward ray swings with ego yaw
    assert np.allclose(dirs[0], [0.0, 1.0, 0.0], atol=1e-9)


def test_rig_azimuths_center_on_offset():
    cfg = SensorConfig(channels=1, vertical_fov=(0.0, 0.0), yaw_offset=40.0,
                       horizontal_fov=30.0, horizontal_resolution=0.5)
    rig = SensorRig((cfg,))
    ego = TrajectorySample(0.0, (0.0, 0.0, 0.0), 0.0)
    _, dirs, _ = generate_rays(rig, ego)
    mean_dir = dirs.mean(axis=0)
    assert math.degrees(math.atan2(mean_dir[1], mean_dir[0])) == pytest.approx(40.0, abs=1e-6)


def test_sensor_config_validation():
    with pytest.raises(ValidationError):
        SensorConfig(horizontal_fov=0.0)
    with pytest.raises(ValidationError):
        SensorConfig(vertical_fov=(10.0, -10.0))
    with pytest.raises(ValidationError):
        SensorConfig(max_range=0.0)


# ------------------------------------------------------------------ trace ---

def _mini_scene():
    static = make_plane_mesh((-100, 100), (-100, 100), 0.0)
    vehicle = make_box_mesh(4.0, 2.0, 1.5)
    return build_scene(static, vehicle)


def _mini_rig():
    return SensorRig((SensorConfig(horizontal_fov=60.0, horizontal_resolution=1.0,
                                   channels=8, vertical_fov=(-12.0, 0.0),
                                   mount_offset=(0.0, 0.0, 2.5)),))


def test_build_scene_dims_from_mesh():
    scene = _mini_scene()
    assert scene.vehicle_dims.l == pytest.approx(4.0)
    assert scene.vehicle_dims.w == pytest.approx(2.0)
    assert scene.vehicle_dims.h == pytest.approx(1.5)


def test_trace_frame_labels_in_ego_frame():
    scene = _mini_scene()
    ego = TrajectorySample(0.0, (0.0, 0.0, 0.75), 0.0)
    other = TrajectorySample(0.0, (12.0, 1.0, 0.75), 0.5)
    cloud, label = trace_frame(scene, FrameScenario(0.0, ego, [("v2", other)]), _mini_rig(), "f0")
    assert len(label.boxes) == 1
    box, vid = label.boxes[0]
    assert vid == "v2"
    assert np.allclose(box.center, [12.0, 1.0, 0.0], atol=1e-9)
    assert box.yaw == pytest.approx(0.5)
    assert len(cloud) > 0


def test_trace_frame_drops_far_labels():
    scene = _mini_scene()
    ego = TrajectorySample(0.0, (0.0, 0.0, 0.75), 0.0)
    far = TrajectorySample(0.0, (150.0, 0.0, 0.75), 0.0)
    _, label = trace_frame(scene, FrameScenario(0.0, ego, [("v2", far)]), _mini_rig(), "f0")
    assert label.boxes == []


def test_trace_frame_points_hit_target():
    scene = _mini_scene()
    ego = TrajectorySample(0.0, (0.0, 0.0, 0.75), 0.0)
    other = TrajectorySample(0.0, (10.0, 0.0, 0.75), 0.0)
    cloud, _ = trace_frame(scene, FrameScenario(0.0, ego, [("v2", other)]), _mini_rig(), "f0")
    # some returns on the vehicle: points with z above ground, ahead of ego
    near_target = (np.abs(cloud.xyz[:, 0] - 10.0) < 3.0) & (cloud.xyz[:, 2] > -0.5)
    assert near_target.sum() > 5


def test_trace_vehicle_occludes_ground():
    scene = _mini_scene()
    rig = _mini_rig()
    ego = TrajectorySample(0.0, (0.0, 0.0, 0.75), 0.0)
    empty_cloud, _ = trace_frame(scene, FrameScenario(0.0, ego, []), rig, "f0")
    other = TrajectorySample(0.0, (10.0, 0.0, 0.75), 0.0)
    cloud, _ = trace_frame(scene, FrameScenario(0.0, ego, [("v2", other)]), rig, "f0")
    assert len(cloud) >= len(empty_cloud)
    # rays that previously reached ground behind the box now stop earlier
    assert cloud.xyz[:, 0].max() <= empty_cloud.xyz[:, 0].max() + 1e-9


def test_replay_scenarios_stride_and_ids():
    trajs = {
        "ego": straight_trajectory("ego", (0.0, 0.0), 0.0, 5.0, t0=0.0, t1=10.0, dt=0.5),
        "v2": straight_trajectory("v2", (20.0, 3.0), 0.0, 4.0, t0=1.0, t1=9.0, dt=0.5),
    }
    frames = replay_scenarios(trajs, "ego", stride=5)
    ids = [fid for fid, _ in frames]
    assert ids[:3] == ["000000", "000005", "000010"]
    # every scenario time lies inside the intersection of spans
    for _, sc in frames:
        assert 1.0 <= sc.t <= 9.0


def test_replay_unknown_ego():
    trajs = {"a": straight_trajectory("a", (0, 0), 0.0, 1.0)}
    with pytest.raises(ConfigurationError):
        replay_scenarios(trajs, "nope")


def test_replay_disjoint_spans():
    trajs = {
        "ego": straight_trajectory("ego", (0, 0), 0.0, 1.0, t0=0.0, t1=1.0),
        "v2": straight_trajectory("v2", (0, 0), 0.0, 1.0, t0=5.0, t1=6.0),
    }
    with pytest.raises(TrajectorySpanError):
        replay_scenarios(trajs, "ego")


def test_simulate_dataset_deterministic_across_threads(tmp_path):
    scene = _mini_scene()
    rig = _mini_rig()
    trajs = {
        "ego": straight_trajectory("ego", (0.0, 0.0), 0.0, 5.0, t0=0.0, t1=4.0, dt=0.5, z=0.75),
        "v2": straight_trajectory("v2", (15.0, 2.0), 0.0, 5.0, t0=0.0, t1=4.0, dt=0.5, z=0.75),
    }
    man1 = simulate_dataset(scene, trajs, "ego", rig, tmp_path / "one", stride=2, threads=1)
    man2 = simulate_dataset(scene, trajs, "ego", rig, tmp_path / "two", stride=2, threads=4)
    assert man1.frame_ids() == man2.frame_ids()
    assert len(man1) == 5
    for fr1, fr2 in zip(man1.frames, man2.frames):
        b1 = (tmp_path / "one" / fr1.cloud).read_bytes()
        b2 = (tmp_path / "two" / fr2.cloud).read_bytes()
        assert b1 == b2
    # labels exist and are loadable
    label = man1.load_labels(man1.frames[0])
    assert [vid for _, vid in label.boxes] == ["v2"]
