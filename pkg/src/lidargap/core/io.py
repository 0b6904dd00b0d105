"""File formats: point cloud .bin, label/prediction text, trajectory CSV, manifests.

Point clouds use 16-byte little-endian float32 records (x, y, z, intensity).
Labels are whitespace-separated text, one box per line:

    vehicle_id cx cy cz length width height yaw [confidence]

the trailing confidence column is present only in prediction files.
Trajectories are CSV with header ``t,x,y,z,yaw,speed``. A dataset manifest is
a JSON file listing frames with timestamps and relative file paths.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import FormatError, ValidationError
from .geometry import BoundingBox3D, FrameLabel, PointCloud, Prediction, Trajectory

RECORD_BYTES = 16  # four little-endian float32 per point


def load_point_cloud(
    path, frame_id: str = "", timestamp: float | None = None
) -> PointCloud:
    """Read a .bin point cloud. Truncated files raise FormatError with the
    byte offset of the partial record; non-finite coordinates raise
    ValidationError."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) % RECORD_BYTES != 0:
        offset = (len(raw) // RECORD_BYTES) * RECORD_BYTES
        raise FormatError(
            f"{path}: truncated point record ({len(raw) - offset} of "
            f"{RECORD_BYTES} bytes)",
            offset=offset,
        )
    data = np.frombuffer(raw, dtype="<f4").reshape(-1, 4)
    xyz = data[:, :3].astype(np.float64)
    if not np.isfinite(xyz).all():
        bad = int(np.nonzero(~np.isfinite(xyz).all(axis=1))[0][0])
        raise ValidationError(f"{path}: non-finite coordinates at point {bad}")
    intensity = data[:, 3].astype(np.float64)
    if not frame_id:
        frame_id = path.stem
    return PointCloud(xyz, intensity, frame_id, timestamp)


def save_point_cloud(cloud: PointCloud, path) -> None:
    """Write a .bin point cloud; missing intensity is stored as zeros."""
    path = Path(path)
    n = len(cloud)
    rec = np.zeros((n, 4), dtype="<f4")
    rec[:, :3] = cloud.xyz.astype("<f4")
    if cloud.intensity is not None:
        rec[:, 3] = cloud.intensity.astype("<f4")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(rec.tobytes())


def _parse_box_line(path, lineno: int, parts: list[str], want: int) -> list[float]:
    if len(parts) != want:
        raise FormatError(
            f"{path}:{lineno}: expected {want} fields, got {len(parts)}"
        )
    try:
        vals = [float(p) for p in parts[1:]]
    except ValueError as e:
        raise FormatError(f"{path}:{lineno}: {e}") from e
    if not all(math.isfinite(v) for v in vals):
        raise ValidationError(f"{path}:{lineno}: non-finite value")
    return vals


def load_labels(path, frame_id: str = "") -> FrameLabel:
    """Read a ground-truth label file (8 columns, no confidence)."""
    path = Path(path)
    if not frame_id:
        frame_id = path.stem
    label = FrameLabel(frame_id)
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        v = _parse_box_line(path, lineno, parts, 8)
        box = BoundingBox3D(np.array(v[0:3]), v[3], v[4], v[5], v[6])
        label.boxes.append((box, parts[0]))
    return label


def save_labels(label: FrameLabel, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for box, vid in label.boxes:
        c = box.center
        lines.append(
            f"{vid} {c[0]:.6f} {c[1]:.6f} {c[2]:.6f} "
            f"{box.length:.6f} {box.width:.6f} {box.height:.6f} {box.yaw:.6f}"
        )
    path.write_text("".join(line + "\n" for line in lines))


def load_predictions(path, frame_id: str = "") -> list[Prediction]:
    """Read a prediction file (9 columns, confidence last)."""
    path = Path(path)
    if not frame_id:
        frame_id = path.stem
    preds = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        v = _parse_box_line(path, lineno, parts, 9)
        box = BoundingBox3D(np.array(v[0:3]), v[3], v[4], v[5], v[6])
        preds.append(Prediction(frame_id, box, v[7]))
    return preds


def save_predictions(preds: list[Prediction], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for p in preds:
        c = p.box.center
        lines.append(
            f"pred {c[0]:.6f} {c[1]:.6f} {c[2]:.6f} "
            f"{p.box.length:.6f} {p.box.width:.6f} {p.box.height:.6f} "
            f"{p.box.yaw:.6f} {p.confidence:.6f}"
        )
    path.write_text("".join(line + "\n" for line in lines))


TRAJECTORY_COLUMNS = ["t", "x", "y", "z", "yaw", "speed"]


def load_trajectory(path, vehicle_id: str = "") -> Trajectory:
    """Read a trajectory CSV (header ``t,x,y,z,yaw,speed``)."""
    path = Path(path)
    if not vehicle_id:
        vehicle_id = path.stem
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty trajectory file") from None
        if [h.strip() for h in header] != TRAJECTORY_COLUMNS:
            raise FormatError(
                f"{path}: expected header {','.join(TRAJECTORY_COLUMNS)}, "
                f"got {','.join(header)}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise FormatError(f"{path}:{lineno}: expected 6 columns, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError as e:
                raise FormatError(f"{path}:{lineno}: {e}") from e
    if len(rows) < 2:
        raise ValidationError(f"{path}: trajectory needs >= 2 samples, got {len(rows)}")
    arr = np.array(rows, dtype=np.float64)
    return Trajectory(vehicle_id, arr[:, 0], arr[:, 1:4], arr[:, 4], arr[:, 5])


def save_trajectory(traj: Trajectory, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    speeds = traj.speeds if traj.speeds is not None else np.zeros(len(traj))
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRAJECTORY_COLUMNS)
        for i in range(len(traj)):
            p = traj.positions[i]
            writer.writerow(
                [
                    f"{traj.t[i]:.6f}",
                    f"{p[0]:.6f}",
                    f"{p[1]:.6f}",
                    f"{p[2]:.6f}",
                    f"{traj.yaws[i]:.6f}",
                    f"{speeds[i]:.6f}",
                ]
            )


@dataclass
class FrameRecord:
    """One dataset frame: id, capture time, and file paths relative to the
    manifest location."""

    frame_id: str
    timestamp: float
    cloud: str
    labels: str | None = None


DEFAULT_SPLIT = (4 / 6, 1 / 6, 1 / 6)


@dataclass
class DatasetManifest:
    """Frame index of one dataset, stored as JSON next to the data files.

    Paths inside the manifest are relative to its directory so a dataset
    tree can be moved or copied wholesale. `split` holds the train/val/test
    ratios used when the dataset is divided by frame order.
    """

    frames: list[FrameRecord] = field(default_factory=list)
    name: str = ""
    root: Path | None = None
    split: tuple[float, float, float] = DEFAULT_SPLIT

    def __post_init__(self):
        seen = set()
        for fr in self.frames:
            if fr.frame_id in seen:
                raise ValidationError(f"duplicate frame id '{fr.frame_id}'")
            seen.add(fr.frame_id)
        self.split = tuple(float(r) for r in self.split)
        if len(self.split) != 3:
            raise ValidationError("split must have three ratios")
        if any(r < 0 for r in self.split) or not math.isclose(
            sum(self.split), 1.0, abs_tol=1e-9
        ):
            raise ValidationError(
                f"split ratios must be nonnegative and sum to 1, got {self.split}"
            )

    def __len__(self) -> int:
        return len(self.frames)

    def frame_ids(self) -> list[str]:
        return [fr.frame_id for fr in self.frames]

    def cloud_path(self, fr: FrameRecord) -> Path:
        base = self.root if self.root is not None else Path(".")
        return base / fr.cloud

    def labels_path(self, fr: FrameRecord) -> Path | None:
        if fr.labels is None:
            return None
        base = self.root if self.root is not None else Path(".")
        return base / fr.labels

    def load_cloud(self, fr: FrameRecord) -> PointCloud:
        return load_point_cloud(self.cloud_path(fr), fr.frame_id, fr.timestamp)

    def load_labels(self, fr: FrameRecord) -> FrameLabel:
        p = self.labels_path(fr)
        if p is None:
            return FrameLabel(fr.frame_id)
        return load_labels(p, fr.frame_id)


def load_manifest(path, check_files: bool = True) -> DatasetManifest:
    """Read a dataset manifest; validates ids are unique and, by default,
    that every referenced file exists."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: {e}") from e
    if not isinstance(doc, dict) or "frames" not in doc:
        raise FormatError(f"{path}: manifest must be an object with a 'frames' list")
    frames = []
    for i, entry in enumerate(doc["frames"]):
        try:
            frames.append(
                FrameRecord(
                    frame_id=str(entry["frame_id"]),
                    timestamp=float(entry["timestamp"]),
                    cloud=str(entry["cloud"]),
                    labels=str(entry["labels"]) if entry.get("labels") else None,
                )
            )
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"{path}: frame entry {i}: {e}") from e
    split = tuple(doc.get("split", DEFAULT_SPLIT))
    man = DatasetManifest(
        frames, name=str(doc.get("name", "")), root=path.parent, split=split
    )
    if check_files:
        for fr in man.frames:
            cp = man.cloud_path(fr)
            if not cp.is_file():
                raise ValidationError(f"{path}: missing cloud file {cp}")
            lp = man.labels_path(fr)
            if lp is not None and not lp.is_file():
                raise ValidationError(f"{path}: missing label file {lp}")
    return man


def save_manifest(man: DatasetManifest, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "name": man.name,
        "split": list(man.split),
        "frames": [
            {
                "frame_id": fr.frame_id,
                "timestamp": fr.timestamp,
                "cloud": fr.cloud,
                **({"labels": fr.labels} if fr.labels else {}),
            }
            for fr in man.frames
        ],
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")


def split_slices(n: int, ratios: tuple[float, float, float]) -> tuple[slice, slice, slice]:
    """Deterministic contiguous train/val/test slices over `n` ordered frames.

    Sizes are floor(n * ratio) for train and val; the test split takes the
    remainder, so the three always cover all frames.
    """
    if any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise ValidationError(f"split ratios must be nonnegative and sum to 1, got {ratios}")
    n_train = int(n * ratios[0])
    n_val = int(n * ratios[1])
    return (
        slice(0, n_train),
        slice(n_train, n_train + n_val),
        slice(n_train + n_val, n),
    )


def split_manifest(
    man: DatasetManifest, ratios: tuple[float, float, float] | None = None
) -> dict[str, DatasetManifest]:
    """Split a manifest into train/val/test by frame order; ratios default to
    the manifest's own."""
    if ratios is None:
        ratios = man.split
    tr, va, te = split_slices(len(man), ratios)
    out = {}
    for key, sl in (("train", tr), ("val", va), ("test", te)):
        out[key] = DatasetManifest(
            man.frames[sl], name=f"{man.name}/{key}", root=man.root, split=(1.0, 0.0, 0.0)
        )
    return out
