import numpy as np
import pytest

from lidargap.core.geometry import RangeBucket
from lidargap.errors import PairingError
from lidargap.stats import (
    bucketize_targets,
    compare_stats,
    dataset_stats,
    frames_in_split,
    location_histogram,
    pair_frames,
)

from helpers import box_label, write_dataset


def _micro(tmp_path, name="a", counts=(3, 5), label_pts=None):
    """Tiny dataset with hand-countable clouds; optional labeled frame."""
    frames = []
    for i, n in enumerate(counts):
        xyz = np.arange(n * 3, dtype=float).reshape(n, 3) * 0.1
        frames.append((f"{i:03d}", 0.1 * i, xyz, None))
    if label_pts is not None:
        xyz, label = label_pts
        frames.append(("900", 9.0, xyz, label))
    return write_dataset(tmp_path / name, frames, name=name)


def test_pair_frames_sorted_intersection(tmp_path):
    a = _micro(tmp_path, "a", counts=(3, 5, 7))
    b = _micro(tmp_path, "b", counts=(2, 2))
    pairing = pair_frames(a, b)
    assert [fid for fid, _, _ in pairing.pairs] == ["000", "001"]
    assert pairing.only_a == ["002"]
    assert pairing.only_b == []
    assert pairing.n_matched == 2


def test_pair_frames_disjoint_raises(tmp_path):
    a = write_dataset(tmp_path / "a", [("x", 0.0, np.zeros((1, 3)), None)])
    b = write_dataset(tmp_path / "b", [("y", 0.0, np.zeros((1, 3)), None)])
    with pytest.raises(PairingError) as exc:
        pair_frames(a, b)
    assert "x" in str(exc.value) and "y" in str(exc.value)


def test_frames_in_split(tmp_path):
    frames = [(f"{i:02d}", float(i), np.zeros((2, 3)), None) for i in range(6)]
    man = write_dataset(tmp_path / "ds", frames, split=(4 / 6, 1 / 6, 1 / 6))
    assert [f.frame_id for f in frames_in_split(man, "train")] == ["00", "01", "02", "03"]
    assert [f.frame_id for f in frames_in_split(man, "val")] == ["04"]
    assert [f.frame_id for f in frames_in_split(man, "test")] == ["05"]
    assert len(frames_in_split(man, None)) == 6
    with pytest.raises(ValueError):
        frames_in_split(man, "dev")


def test_dataset_stats_hand_values(tmp_path):
    xyz0 = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]])
    xyz1 = np.array([[0.0, 0.0, 0.0], [-2.0, -4.0, 1.0]])
    man = write_dataset(
        tmp_path / "ds",
        [("a", 0.0, xyz0, None), ("b", 1.0, xyz1, None)],
        name="micro",
    )
    st = dataset_stats(man, split=None)
    assert st.n_frames == 2
    assert st.points_per_cloud.mean == 2.5
    assert st.points_per_cloud.min == 2 and st.points_per_cloud.max == 3
    all_pts = np.concatenate([xyz0, xyz1])
    assert st.x.mean == pytest.approx(all_pts[:, 0].mean())
    assert st.x.min == -2.0 and st.x.max == 7.0
    assert st.y.min == -4.0 and st.y.max == 8.0
    assert st.z.min == 0.0 and st.z.max == 9.0


def test_dataset_stats_crop_horizontal(tmp_path):
    xyz = np.array(
        [
            [10.0, 0.0, 0.0],
            [101.0, 0.0, 0.0],     # beyond crop
            [80.0, 80.0, 0.0],     # hypot ~113, beyond
            [0.0, 99.0, 50.0],     # tall but inside horizontally
        ]
    )
    man = write_dataset(tmp_path / "ds", [("a", 0.0, xyz, None)])
    st = dataset_stats(man, split=None)
    assert st.points_per_cloud.mean == 2
    assert st.z.max == 50.0


def test_dataset_stats_in_box_counts(tmp_path):
    inside = np.array([[10.0, 0.0, 0.0], [10.5, 0.3, 0.2], [9.6, -0.4, -0.3]])
    outside = np.array([[30.0, 0.0, 0.0]])
    label = box_label("a", [("v1", 10.0, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0)])
    man = write_dataset(
        tmp_path / "ds",
        [("a", 0.0, np.concatenate([inside, outside]), label)],
    )
    st = dataset_stats(man, split=None)
    assert st.n_targets == 1
    assert st.points_per_target.mean == 3
    assert st.points_per_target.min == 3 and st.points_per_target.max == 3


def test_dataset_stats_empty_box_min_zero(tmp_path):
    label = box_label(
        "a",
        [
            ("v1", 10.0, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0),
            ("v2", 50.0, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0),
        ],
    )
    pts = np.array([[10.0, 0.0, 0.0], [10.1, 0.0, 0.0]])
    man = write_dataset(tmp_path / "ds", [("a", 0.0, pts, label)])
    st = dataset_stats(man, split=None)
    assert st.points_per_target.min == 0
    assert st.points_per_target.max == 2
    assert st.points_per_target.mean == 1.0


def test_dataset_stats_unreadable_frame_recorded(tmp_path):
    from lidargap.core.io import load_manifest

    man = write_dataset(
        tmp_path / "ds",
        [("a", 0.0, np.zeros((2, 3)), None), ("b", 1.0, np.ones((2, 3)), None)],
    )
    (tmp_path / "ds" / "clouds" / "b.bin").unlink()
    man = load_manifest(tmp_path / "ds" / "manifest.json", check_files=False)
    st = dataset_stats(man, split=None)
    assert st.n_frames == 1
    assert len(st.errors) == 1 and "b" in st.errors[0]


def test_compare_stats_ratio_and_text(tmp_path):
    # 219 points in a's target, 251 in b's: ratio diagnostic ~87%
    rng = np.random.default_rng(9)

    def boxed_points(n):
        pts = rng.uniform(-0.4, 0.4, (n, 3)) * np.array([4.0, 1.8, 1.4])
        return pts + np.array([10.0, 0.0, 0.0])

    label = box_label("f", [("v1", 10.0, 0.0, 0.0, 4.88, 1.9, 1.18, 0.0)])
    a = write_dataset(tmp_path / "a", [("f", 0.0, boxed_points(219), label)], name="sim")
    b = write_dataset(tmp_path / "b", [("f", 0.0, boxed_points(251), label)], name="real")
    report = compare_stats(a, b, split=None)
    assert report.a.points_per_target.mean == 219
    assert report.b.points_per_target.mean == 251
    assert report.in_box_ratio == pytest.approx(219 / 251, abs=1e-12)
    text = report.to_text()
    assert "87%" in text
    assert "sim" in text and "real" in text
    d = report.to_dict()
    assert d["in_box_ratio"] == pytest.approx(219 / 251)


def test_compare_stats_swap_symmetry(tmp_path):
    rng = np.random.default_rng(13)
    fa = [("f", 0.0, rng.uniform(-20, 20, (40, 3)), None)]
    fb = [("f", 0.0, rng.uniform(-20, 20, (60, 3)), None)]
    a = write_dataset(tmp_path / "a", fa, name="a")
    b = write_dataset(tmp_path / "b", fb, name="b")
    r1 = compare_stats(a, b, split=None)
    r2 = compare_stats(b, a, split=None)
    assert r1.a.points_per_cloud.mean == r2.b.points_per_cloud.mean
    assert r1.matched == r2.matched


def test_location_histogram_cells_and_marginals():
    label = box_label(
        "f",
        [
            ("v1", 35.0, 5.0, 0.0, 4.0, 2.0, 1.5, 0.0),
            ("v2", -30.0, -5.0, 0.0, 4.0, 2.0, 1.5, 0.0),
            ("v3", 100.0, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0),  # clamps to last cell
        ],
    )
    hist = location_histogram([label], cell_size=2.0)
    assert hist.counts.sum() == 3
    assert hist.counts.shape == (100, 100)
    assert hist.counts[(100 + 35) // 2, (100 + 5) // 2] == 1
    assert hist.counts[(100 - 30) // 2, (100 - 5) // 2] == 1
    assert hist.counts[99, 50] == 1
    assert hist.marginal_x.sum() == 3
    assert hist.marginal_y.sum() == 3
    assert hist.total == 3


def test_location_histogram_csv(tmp_path):
    label = box_label("f", [("v1", 35.0, 5.0, 0.0, 4.0, 2.0, 1.5, 0.0)])
    hist = location_histogram([label])
    hist.save_csv(tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "x_lo,y_lo,count"
    assert len(lines) == 100 * 100 + 1  # full grid export
    assert "34.000,4.000,1" in lines


def test_bucketize_targets():
    label = box_label(
        "f",
        [
            ("close", 10.0, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0),
            ("mid", 33.3, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0),
            ("long", 66.6, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0),
            ("far", 150.0, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0),
        ],
    )
    buckets, out = bucketize_targets([label])
    assert [vid for _, _, vid in buckets[RangeBucket.CLOSE]] == ["close"]
    assert [vid for _, _, vid in buckets[RangeBucket.MID]] == ["mid"]
    assert [vid for _, _, vid in buckets[RangeBucket.LONG]] == ["long"]
    assert len(out) == 1
