"""Ray-triangle intersection: a median-split bounding-volume hierarchy for
production casts plus a brute-force path used as its correctness oracle.

Both paths call the same compiled intersection routine, so they agree
bit-for-bit; ties at equal hit distance resolve to the smaller triangle id
in both.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ..errors import ValidationError
from .mesh import TriangleMesh

LEAF_SIZE = 4

# Determinant threshold below which a ray counts as parallel to the triangle.
_PARALLEL_EPS = 1e-12


@njit(cache=True, nogil=True, inline="always")
def _hit_triangle(ox, oy, oz, dx, dy, dz, v0, e1, e2, i):
    """Moller-Trumbore; returns the ray parameter t or inf on miss."""
    e1x, e1y, e1z = e1[i, 0], e1[i, 1], e1[i, 2]
    e2x, e2y, e2z = e2[i, 0], e2[i, 1], e2[i, 2]
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if abs(det) < _PARALLEL_EPS:
        return np.inf
    inv_det = 1.0 / det
    sx = ox - v0[i, 0]
    sy = oy - v0[i, 1]
    sz = oz - v0[i, 2]
    u = (sx * px + sy * py + sz * pz) * inv_det
    if u < 0.0 or u > 1.0:
        return np.inf
    qx = sy * e1z - sz * e1y
    qy = sz * e1x - sx * e1z
    qz = sx * e1y - sy * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv_det
    if v < 0.0 or u + v > 1.0:
        return np.inf
    return (e2x * qx + e2y * qy + e2z * qz) * inv_det


@njit(cache=True, nogil=True)
def _brute_kernel(v0, e1, e2, origins, dirs, max_t, out_t, out_id):
    n_tri = v0.shape[0]
    for r in range(origins.shape[0]):
        ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        limit = max_t[r]
        best_t = np.inf
        best_i = -1
        for i in range(n_tri):
            t = _hit_triangle(ox, oy, oz, dx, dy, dz, v0, e1, e2, i)
            if t > 0.0 and t <= limit:
                if t < best_t or (t == best_t and i < best_i):
                    best_t = t
                    best_i = i
        out_t[r] = best_t
        out_id[r] = best_i


@njit(cache=True, nogil=True)
def _bvh_kernel(
    bmin, bmax, left, right, start, count, order, v0, e1, e2,
    origins, dirs, max_t, out_t, out_id,
):
    stack = np.empty(128, dtype=np.int64)
    for r in range(origins.shape[0]):
        ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        limit = max_t[r]
        best_t = np.inf
        best_i = -1
        top = 0
        stack[top] = 0
        top += 1
        while top > 0:
            top -= 1
            node = stack[top]
            # slab test against the live search interval (0, min(limit, best_t)]
            t_hi = limit if limit < best_t else best_t
            t_lo = 0.0
            miss = False
            for axis in range(3):
                o = origins[r, axis]
                d = dirs[r, axis]
                lo = bmin[node, axis]
                hi = bmax[node, axis]
                if d == 0.0:
                    if o < lo or o > hi:
                        miss = True
                        break
                else:
                    inv = 1.0 / d
                    t1 = (lo - o) * inv
                    t2 = (hi - o) * inv
                    if t1 > t2:
                        t1, t2 = t2, t1
                    if t1 > t_lo:
                        t_lo = t1
                    if t2 < t_hi:
                        t_hi = t2
                    if t_lo > t_hi:
                        miss = True
                        break
            if miss:
                continue
            c = count[node]
            if c > 0:
                s = start[node]
                for k in range(s, s + c):
                    i = order[k]
                    t = _hit_triangle(ox, oy, oz, dx, dy, dz, v0, e1, e2, i)
                    if t > 0.0 and t <= limit:
                        if t < best_t or (t == best_t and i < best_i):
                            best_t = t
                            best_i = i
            else:
                stack[top] = left[node]
                top += 1
                stack[top] = right[node]
                top += 1
        out_t[r] = best_t
        out_id[r] = best_i


def _as_ray_arrays(origins, dirs, max_t, n):
    origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
    if np.isscalar(max_t):
        max_t = np.full(origins.shape[0], float(max_t))
    max_t = np.ascontiguousarray(max_t, dtype=np.float64).reshape(-1)
    if not (origins.shape[0] == dirs.shape[0] == max_t.shape[0]):
        raise ValidationError("origins, directions, max_t lengths differ")
    return origins, dirs, max_t


@dataclass
class BVH:
    """Flattened hierarchy over one mesh's triangles. Immutable after build;
    safe to share across threads."""

    bmin: np.ndarray
    bmax: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    order: np.ndarray
    v0: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    n_triangles: int

    def cast(self, origins, dirs, max_t) -> tuple[np.ndarray, np.ndarray]:
        """Nearest hit per ray: (t, triangle id); misses are (inf, -1).

        Hits are accepted for ray parameter t in (0, max_t]; equal-distance
        ties go to the smaller triangle id.
        """
        origins, dirs, max_t = _as_ray_arrays(origins, dirs, max_t, None)
        out_t = np.empty(origins.shape[0])
        out_id = np.empty(origins.shape[0], dtype=np.int64)
        _bvh_kernel(
            self.bmin, self.bmax, self.left, self.right, self.start, self.count,
            self.order, self.v0, self.e1, self.e2, origins, dirs, max_t,
            out_t, out_id,
        )
        return out_t, out_id


def build_bvh(mesh: TriangleMesh, leaf_size: int = LEAF_SIZE) -> BVH:
    """Median-split BVH on triangle centroids, largest-extent axis first.

    Positional median guarantees O(log T) depth regardless of geometry.
    """
    n = mesh.n_triangles
    if n == 0:
        raise ValidationError("cannot build a BVH over an empty mesh")
    c0, c1, c2 = mesh.corners()
    tri_min = np.minimum(np.minimum(c0, c1), c2)
    tri_max = np.maximum(np.maximum(c0, c1), c2)
    centroids = (c0 + c1 + c2) / 3.0
    order = np.arange(n, dtype=np.int64)

    bmin_l: list[np.ndarray] = []
    bmax_l: list[np.ndarray] = []
    left_l: list[int] = []
    right_l: list[int] = []
    start_l: list[int] = []
    count_l: list[int] = []

    def build(lo: int, hi: int) -> int:
        slot = len(left_l)
        ids = order[lo:hi]
        bmin_l.append(tri_min[ids].min(axis=0))
        bmax_l.append(tri_max[ids].max(axis=0))
        left_l.append(-1)
        right_l.append(-1)
        start_l.append(lo)
        count_l.append(0)
        if hi - lo <= leaf_size:
            count_l[slot] = hi - lo
            return slot
        cen = centroids[ids]
        axis = int(np.argmax(cen.max(axis=0) - cen.min(axis=0)))
        order[lo:hi] = ids[np.argsort(cen[:, axis], kind="stable")]
        mid = (lo + hi) // 2
        left_l[slot] = build(lo, mid)
        right_l[slot] = build(mid, hi)
        return slot

    build(0, n)
    return BVH(
        bmin=np.ascontiguousarray(bmin_l, dtype=np.float64),
        bmax=np.ascontiguousarray(bmax_l, dtype=np.float64),
        left=np.asarray(left_l, dtype=np.int64),
        right=np.asarray(right_l, dtype=np.int64),
        start=np.asarray(start_l, dtype=np.int64),
        count=np.asarray(count_l, dtype=np.int64),
        order=order,
        v0=np.ascontiguousarray(c0),
        e1=np.ascontiguousarray(c1 - c0),
        e2=np.ascontiguousarray(c2 - c0),
        n_triangles=n,
    )


def brute_force_cast(
    mesh: TriangleMesh, origins, dirs, max_t
) -> tuple[np.ndarray, np.ndarray]:
    """Reference cast that tests every triangle; same contract as BVH.cast."""
    if mesh.n_triangles == 0:
        raise ValidationError("cannot cast against an empty mesh")
    origins, dirs, max_t = _as_ray_arrays(origins, dirs, max_t, None)
    c0, c1, c2 = mesh.corners()
    out_t = np.empty(origins.shape[0])
    out_id = np.empty(origins.shape[0], dtype=np.int64)
    _brute_kernel(
        np.ascontiguousarray(c0),
        np.ascontiguousarray(c1 - c0),
        np.ascontiguousarray(c2 - c0),
        origins, dirs, max_t, out_t, out_id,
    )
    return out_t, out_id
