"""Shared fixtures and independent oracles for the test suite.

The oracles here deliberately avoid the library's own geometry helpers so
tests compare two separately-derived routes to the same quantity.
"""

import itertools

import numpy as np
from numba import njit
from scipy.stats import qmc

from lidargap.core.geometry import (
    BoundingBox3D,
    FrameLabel,
    PointCloud,
    Trajectory,
    VehicleDims,
)
from lidargap.core.io import (
    DatasetManifest,
    FrameRecord,
    save_labels,
    save_manifest,
    save_point_cloud,
    save_trajectory,
)


# ------------------------------------------------------- box volume oracle ---

def _rot_z(yaw):
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def oracle_corners(center, dims, yaw):
    l, w, h = dims
    sx = np.array([-1, 1, 1, -1, -1, 1, 1, -1]) * (l / 2)
    sy = np.array([-1, -1, 1, 1, -1, -1, 1, 1]) * (w / 2)
    sz = np.array([-1, -1, -1, -1, 1, 1, 1, 1]) * (h / 2)
    local = np.stack([sx, sy, sz], axis=1)
    return local @ _rot_z(yaw).T + np.asarray(center, dtype=float)


def oracle_inside(pts, center, dims, yaw):
    d = pts - np.asarray(center, dtype=float)
    c, s = np.cos(yaw), np.sin(yaw)
    cx = c * d[:, 0] + s * d[:, 1]
    cy = -s * d[:, 0] + c * d[:, 1]
    l, w, h = dims
    return (
        (np.abs(cx) <= l / 2) & (np.abs(cy) <= w / 2) & (np.abs(d[:, 2]) <= h / 2)
    )


_UNIT_SOBOL = {}


def _unit_sobol(m, seed=7):
    key = (m, seed)
    if key not in _UNIT_SOBOL:
        _UNIT_SOBOL[key] = qmc.Sobol(d=3, scramble=True, seed=seed).random_base2(m)
    return _UNIT_SOBOL[key]


@njit(cache=True)
def _count_double_hits(u, lo, span, ca, da, ya, cb, db, yb):
    # scalar form of the canonical-frame containment test, both boxes
    cos_a, sin_a = np.cos(ya), np.sin(ya)
    cos_b, sin_b = np.cos(yb), np.sin(yb)
    hits = 0
    for i in range(u.shape[0]):
        px = lo[0] + u[i, 0] * span[0]
        py = lo[1] + u[i, 1] * span[1]
        pz = lo[2] + u[i, 2] * span[2]
        dx, dy, dz = px - ca[0], py - ca[1], pz - ca[2]
        qx = cos_a * dx + sin_a * dy
        qy = -sin_a * dx + cos_a * dy
        if abs(qx) > da[0] / 2 or abs(qy) > da[1] / 2 or abs(dz) > da[2] / 2:
            continue
        dx, dy, dz = px - cb[0], py - cb[1], pz - cb[2]
        qx = cos_b * dx + sin_b * dy
        qy = -sin_b * dx + cos_b * dy
        if abs(qx) <= db[0] / 2 and abs(qy) <= db[1] / 2 and abs(dz) <= db[2] / 2:
            hits += 1
    return hits


def mc_iou(box_a, box_b, m=20, seed=7, chunks=1):
    """Quasi-Monte-Carlo IoU of two yaw-rotated boxes.

    Samples chunks * 2^m low-discrepancy points inside the intersection of
    the two axis-aligned bounding hulls; box volumes are analytic, so only
    the intersection volume is estimated.
    """
    ca = (np.asarray(box_a.center, float), np.array([box_a.length, box_a.width, box_a.height]), box_a.yaw)
    cb = (np.asarray(box_b.center, float), np.array([box_b.length, box_b.width, box_b.height]), box_b.yaw)
    vol_a = float(np.prod(ca[1]))
    vol_b = float(np.prod(cb[1]))
    corners_a = oracle_corners(*ca)
    corners_b = oracle_corners(*cb)
    lo = np.maximum(corners_a.min(axis=0), corners_b.min(axis=0))
    hi = np.minimum(corners_a.max(axis=0), corners_b.max(axis=0))
    if np.any(hi <= lo):
        return 0.0
    span = hi - lo
    hits, total = 0, 0
    if chunks == 1:
        u = _unit_sobol(m, seed)
        hits = _count_double_hits(u, lo, span, ca[0], ca[1], ca[2], cb[0], cb[1], cb[2])
        total = u.shape[0]
    else:
        engine = qmc.Sobol(d=3, scramble=True, seed=seed)
        for _ in range(chunks):
            u = engine.random(2**m)
            hits += _count_double_hits(u, lo, span, ca[0], ca[1], ca[2], cb[0], cb[1], cb[2])
            total += u.shape[0]
    inter = hits / total * float(np.prod(span))
    return float(inter / (vol_a + vol_b - inter))


# --------------------------------------------------- point-set distance oracles

def brute_chamfer(a_xyz, b_xyz):
    """O(n*m) Chamfer oracle mirroring the sqrt-then-square pipeline of the
    k-d-tree implementation so the comparison can demand exact equality."""
    d_ab = np.sqrt(((a_xyz[:, None, :] - b_xyz[None, :, :]) ** 2).sum(-1)).min(axis=1)
    d_ba = np.sqrt(((b_xyz[:, None, :] - a_xyz[None, :, :]) ** 2).sum(-1)).min(axis=1)
    return float(np.sum(d_ab**2) + np.sum(d_ba**2))


def brute_emd(a_xyz, b_xyz):
    """Exhaustive minimum over all perfect matchings; mean matched distance."""
    n = a_xyz.shape[0]
    assert b_xyz.shape[0] == n and n <= 8
    dist = np.sqrt(((a_xyz[:, None, :] - b_xyz[None, :, :]) ** 2).sum(-1))
    best = np.inf
    rows = np.arange(n)
    for perm in itertools.permutations(range(n)):
        total = dist[rows, list(perm)].sum()
        if total < best:
            best = total
    return float(best / n)


# --------------------------------------------------------- fixture builders ---

def surface_points_on_box(rng, center, dims, yaw, n, jitter=0.0, faces=None):
    """Uniform area-weighted sample of a box surface, in world coordinates.

    `faces` restricts sampling to a subset of face ids (0..5 meaning
    +x, -x, +y, -y, +z, -z in the box frame), modeling a partial view.
    """
    l, w, h = dims
    areas = np.array([w * h, w * h, l * h, l * h, l * w, l * w], dtype=float)
    if faces is not None:
        mask = np.zeros(6)
        mask[list(faces)] = 1.0
        areas = areas * mask
    face = rng.choice(6, size=n, p=areas / areas.sum())
    u = rng.uniform(-0.5, 0.5, size=n)
    v = rng.uniform(-0.5, 0.5, size=n)
    pts = np.empty((n, 3))
    for i, f in enumerate(face):
        if f < 2:
            pts[i] = (l / 2 * (1 if f == 0 else -1), u[i] * w, v[i] * h)
        elif f < 4:
            pts[i] = (u[i] * l, w / 2 * (1 if f == 2 else -1), v[i] * h)
        else:
            pts[i] = (u[i] * l, v[i] * w, h / 2 * (1 if f == 4 else -1))
    if jitter > 0:
        pts += rng.normal(0.0, jitter, size=pts.shape)
    return pts @ _rot_z(yaw).T + np.asarray(center, dtype=float)


def write_dataset(root, frames, name="test", split=(1.0, 0.0, 0.0)):
    """Materialize (frame_id, timestamp, xyz, label) tuples as a dataset.

    `label` may be None (no label file) or a FrameLabel.
    """
    root.mkdir(parents=True, exist_ok=True)
    (root / "clouds").mkdir(exist_ok=True)
    records = []
    for fid, ts, xyz, label in frames:
        cloud_rel = f"clouds/{fid}.bin"
        save_point_cloud(PointCloud(np.asarray(xyz, dtype=float), frame_id=fid), root / cloud_rel)
        label_rel = None
        if label is not None:
            (root / "labels").mkdir(exist_ok=True)
            label_rel = f"labels/{fid}.txt"
            save_labels(label, root / label_rel)
        records.append(FrameRecord(fid, ts, cloud_rel, label_rel))
    man = DatasetManifest(records, name=name, root=root, split=split)
    save_manifest(man, root / "manifest.json")
    return man


def straight_trajectory(vid, xy0, heading, speed, t0=0.0, t1=10.0, dt=0.2, z=0.59):
    t = np.arange(t0, t1 + dt / 2, dt)
    x = xy0[0] + speed * np.cos(heading) * (t - t0)
    y = xy0[1] + speed * np.sin(heading) * (t - t0)
    positions = np.stack([x, y, np.full_like(t, z)], axis=1)
    yaws = np.full_like(t, heading)
    return Trajectory(vid, t, positions, yaws)


def write_trajectory_dir(root, trajectories):
    root.mkdir(parents=True, exist_ok=True)
    for vid, traj in trajectories.items():
        save_trajectory(traj, root / f"{vid}.csv")
    return root


def box_label(fid, entries):
    """entries: list of (vehicle_id, cx, cy, cz, l, w, h, yaw)."""
    boxes = [
        (BoundingBox3D(np.array([cx, cy, cz]), l, w, h, yaw), vid)
        for vid, cx, cy, cz, l, w, h, yaw in entries
    ]
    return FrameLabel(fid, boxes)


ANCHOR = VehicleDims(4.88, 1.90, 1.18)
