"""Triangle meshes and loaders for the two formats the simulator ingests:
a triangulated ASCII OBJ subset (v/f records) and binary STL."""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import FormatError, ValidationError

# Triangles whose area falls below this are dropped at load time.
DEGENERATE_AREA = 1e-12


@dataclass
class TriangleMesh:
    """Indexed triangle soup: `vertices` (V, 3) float64 meters, `triangles`
    (T, 3) int64 vertex indices."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(
            np.asarray(self.vertices, dtype=np.float64)
        ).reshape(-1, 3)
        self.triangles = np.ascontiguousarray(
            np.asarray(self.triangles, dtype=np.int64)
        ).reshape(-1, 3)
        if not np.isfinite(self.vertices).all():
            raise ValidationError("mesh vertices must be finite")
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise ValidationError("triangle vertex index out of range")

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def corners(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-triangle corner arrays (v0, v1, v2), each (T, 3)."""
        return (
            self.vertices[self.triangles[:, 0]],
            self.vertices[self.triangles[:, 1]],
            self.vertices[self.triangles[:, 2]],
        )

    def triangle_areas(self) -> np.ndarray:
        v0, v1, v2 = self.corners()
        return 0.5 * np.linalg.norm(np.cross(v1 - v0, v2 - v0), axis=1)

    def transformed(self, rotation: np.ndarray, translation) -> "TriangleMesh":
        verts = self.vertices @ np.asarray(rotation).T + np.asarray(
            translation, dtype=np.float64
        )
        return TriangleMesh(verts, self.triangles.copy())


def clean_mesh(mesh: TriangleMesh) -> TriangleMesh:
    """Drop zero-area triangles; warns when any are removed."""
    if mesh.n_triangles == 0:
        return mesh
    keep = mesh.triangle_areas() > DEGENERATE_AREA
    dropped = int((~keep).sum())
    if dropped:
        warnings.warn(f"dropped {dropped} degenerate triangle(s)", stacklevel=2)
        return TriangleMesh(mesh.vertices, mesh.triangles[keep])
    return mesh


def load_obj(path) -> TriangleMesh:
    """Parse the v/f subset of ASCII OBJ; faces must be triangles.

    Face entries may carry texture/normal slashes (``f 1/1/1 ...``); only
    the leading vertex index is used. Indices are 1-based and positive.
    """
    path = Path(path)
    verts: list[list[float]] = []
    tris: list[list[int]] = []
    tri_lines: list[int] = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise FormatError(f"{path}:{lineno}: vertex needs 3 coordinates")
            try:
                verts.append([float(p) for p in parts[1:4]])
            except ValueError as e:
                raise FormatError(f"{path}:{lineno}: {e}") from e
        elif tag == "f":
            if len(parts) != 4:
                raise FormatError(
                    f"{path}:{lineno}: only triangulated faces supported, "
                    f"got {len(parts) - 1} vertices"
                )
            idx = []
            for p in parts[1:]:
                head = p.split("/")[0]
                try:
                    i = int(head)
                except ValueError as e:
                    raise FormatError(f"{path}:{lineno}: {e}") from e
                if i <= 0:
                    raise FormatError(
                        f"{path}:{lineno}: only positive 1-based indices supported"
                    )
                idx.append(i - 1)
            tris.append(idx)
            tri_lines.append(lineno)
        # other record types (vn, vt, o, g, s, usemtl, ...) are ignored
    if not verts or not tris:
        raise FormatError(f"{path}: no triangles found")
    for lineno, idx in zip(tri_lines, tris):
        if max(idx) >= len(verts):
            raise FormatError(
                f"{path}:{lineno}: face index {max(idx) + 1} exceeds "
                f"{len(verts)} vertices"
            )
    return clean_mesh(TriangleMesh(np.array(verts), np.array(tris)))


STL_HEADER = 80
STL_RECORD = 50  # 12 floats + uint16 attribute


def load_stl(path) -> TriangleMesh:
    """Parse binary STL; vertices are not welded (3 per triangle)."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < STL_HEADER + 4:
        raise FormatError(f"{path}: too short for a binary STL header")
    if raw[:5] == b"solid" and b"facet" in raw[:200]:
        raise FormatError(f"{path}: ASCII STL not supported, convert to binary")
    (n,) = struct.unpack_from("<I", raw, STL_HEADER)
    expected = STL_HEADER + 4 + n * STL_RECORD
    if len(raw) != expected:
        raise FormatError(
            f"{path}: length {len(raw)} != {expected} for {n} triangles",
            offset=min(len(raw), expected),
        )
    body = np.frombuffer(raw, dtype=np.uint8, count=n * STL_RECORD, offset=STL_HEADER + 4)
    rec = body.reshape(n, STL_RECORD)
    floats = rec[:, :48].copy().view("<f4").reshape(n, 12)
    corners = floats[:, 3:12].astype(np.float64).reshape(n * 3, 3)
    tris = np.arange(n * 3, dtype=np.int64).reshape(n, 3)
    return clean_mesh(TriangleMesh(corners, tris))


def save_obj(mesh: TriangleMesh, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}" for v in mesh.vertices]
    lines += [f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}" for t in mesh.triangles]
    path.write_text("".join(line + "\n" for line in lines))


def make_box_mesh(l: float, w: float, h: float, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Axis-aligned cuboid of the given dimensions centered at `center`;
    12 triangles, outward-facing. The canonical vehicle stand-in."""
    cx, cy, cz = center
    hx, hy, hz = l / 2.0, w / 2.0, h / 2.0
    corners = np.array(
        [
            [cx - hx, cy - hy, cz - hz],
            [cx + hx, cy - hy, cz - hz],
            [cx + hx, cy + hy, cz - hz],
            [cx - hx, cy + hy, cz - hz],
            [cx - hx, cy - hy, cz + hz],
            [cx + hx, cy - hy, cz + hz],
            [cx + hx, cy + hy, cz + hz],
            [cx - hx, cy + hy, cz + hz],
        ]
    )
    quads = [
        (0, 3, 2, 1),  # bottom (-z)
        (4, 5, 6, 7),  # top (+z)
        (0, 1, 5, 4),  # -y side
        (2, 3, 7, 6),  # +y side
        (1, 2, 6, 5),  # +x front
        (3, 0, 4, 7),  # -x rear
    ]
    tris = []
    for a, b, c, d in quads:
        tris.append((a, b, c))
        tris.append((a, c, d))
    return TriangleMesh(corners, np.array(tris))


def make_plane_mesh(x_range, y_range, z: float = 0.0) -> TriangleMesh:
    """Horizontal two-triangle rectangle spanning the given x/y ranges."""
    x0, x1 = x_range
    y0, y1 = y_range
    verts = np.array(
        [[x0, y0, z], [x1, y0, z], [x1, y1, z], [x0, y1, z]], dtype=np.float64
    )
    tris = np.array([[0, 1, 2], [0, 2, 3]])
    return TriangleMesh(verts, tris)


def merge_meshes(meshes: list[TriangleMesh]) -> TriangleMesh:
    verts = []
    tris = []
    base = 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + base)
        base += len(m.vertices)
    return TriangleMesh(np.vstack(verts), np.vstack(tris))
