"""Detection evaluation: rotated 3D IoU, greedy confidence-ordered matching,
40-point interpolated average precision, and per-range-bucket reports."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core.geometry import (
    DETECTION_RANGE_M,
    BoundingBox3D,
    FrameLabel,
    Prediction,
    RangeBucket,
    bucket_of,
)
from .errors import EvaluationError

DEFAULT_THRESHOLDS = (0.5, 0.7)

N_RECALL_POINTS = 40


def bev_corners(box: BoundingBox3D) -> np.ndarray:
    """Counterclockwise footprint corners (4, 2) of the yaw-rotated box."""
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    dx = np.array([c, s]) * (box.length / 2.0)
    dy = np.array([-s, c]) * (box.width / 2.0)
    ctr = box.center[:2]
    return np.array([ctr + dx + dy, ctr - dx + dy, ctr - dx - dy, ctr + dx - dy])


def _clip_polygon(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Clip a polygon against a convex counterclockwise polygon
    (Sutherland-Hodgman); boundary points count as inside."""
    output = subject
    n_clip = clip.shape[0]
    for i in range(n_clip):
        if output.shape[0] == 0:
            break
        a = clip[i]
        b = clip[(i + 1) % n_clip]
        edge = b - a
        rel = output - a
        side = edge[0] * rel[:, 1] - edge[1] * rel[:, 0]  # >= 0 means inside
        new_pts = []
        m = output.shape[0]
        for j in range(m):
            k = (j + 1) % m
            cur_in = side[j] >= 0.0
            nxt_in = side[k] >= 0.0
            if cur_in:
                new_pts.append(output[j])
            if cur_in != nxt_in:
                denom = side[j] - side[k]
                t = side[j] / denom
                new_pts.append(output[j] + t * (output[k] - output[j]))
        output = np.array(new_pts) if new_pts else np.empty((0, 2))
    return output


def _polygon_area(poly: np.ndarray) -> float:
    """Shoelace area; assumes counterclockwise orientation."""
    if poly.shape[0] < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def iou3d(a: BoundingBox3D, b: BoundingBox3D) -> float:
    """Rotated-box IoU: exact convex footprint intersection times vertical
    overlap, over the analytic union. Symmetric, in [0, 1]."""
    za0, za1 = a.center[2] - a.height / 2.0, a.center[2] + a.height / 2.0
    zb0, zb1 = b.center[2] - b.height / 2.0, b.center[2] + b.height / 2.0
    dz = min(za1, zb1) - max(za0, zb0)
    if dz <= 0.0:
        return 0.0
    inter_poly = _clip_polygon(bev_corners(a), bev_corners(b))
    area = _polygon_area(inter_poly)
    if area <= 0.0:
        return 0.0
    inter = area * dz
    vol_a = a.length * a.width * a.height
    vol_b = b.length * b.width * b.height
    union = vol_a + vol_b - inter
    return float(min(1.0, max(0.0, inter / union)))


@dataclass
class MatchResult:
    """One frame's matching at a fixed IoU threshold: TP (pred, gt, IoU)
    triples plus leftover FP prediction and FN ground-truth indices."""

    tp: list[tuple[int, int, float]] = field(default_factory=list)
    fp: list[int] = field(default_factory=list)
    fn: list[int] = field(default_factory=list)

    def tp_pred_indices(self) -> set[int]:
        return {p for p, _, _ in self.tp}


def match_frame(
    preds: list[Prediction], gts: list[BoundingBox3D], iou_thresh: float
) -> MatchResult:
    """Greedy assignment in descending confidence: each prediction takes the
    unmatched ground truth with the highest IoU >= threshold, else counts as
    FP. Confidence ties prefer the higher best-case IoU, then input order.
    """
    n_p, n_g = len(preds), len(gts)
    ious = np.zeros((n_p, n_g))
    for i, p in enumerate(preds):
        for j, g in enumerate(gts):
            ious[i, j] = iou3d(p.box, g)
    best = ious.max(axis=1) if n_g else np.zeros(n_p)
    conf = np.array([p.confidence for p in preds])
    order = np.lexsort((np.arange(n_p), -best, -conf)) if n_p else np.array([], dtype=int)

    result = MatchResult()
    taken = np.zeros(n_g, dtype=bool)
    for i in order:
        i = int(i)
        j_best = -1
        iou_best = -1.0
        for j in range(n_g):
            if taken[j] or ious[i, j] < iou_thresh:
                continue
            if ious[i, j] > iou_best:
                iou_best = ious[i, j]
                j_best = j
        if j_best >= 0:
            taken[j_best] = True
            result.tp.append((i, j_best, float(ious[i, j_best])))
        else:
            result.fp.append(i)
    result.fn = [j for j in range(n_g) if not taken[j]]
    return result


def average_precision_40(
    preds_by_frame: dict[str, list[Prediction]],
    gts_by_frame: dict[str, list[BoundingBox3D]],
    iou_thresh: float,
) -> float:
    """40-point interpolated AP in percent over the global confidence sweep.

    AP = (1/40) * sum over recall levels k/40 of the maximum precision at
    recall >= k/40 (0 when unreached). Raises when there is no ground truth.
    """
    total_gt = sum(len(g) for g in gts_by_frame.values())
    if total_gt == 0:
        raise EvaluationError("average precision is undefined without ground truth")
    confs = []
    flags = []
    for fid in sorted(gts_by_frame):
        preds = preds_by_frame.get(fid, [])
        tp_set = match_frame(preds, gts_by_frame[fid], iou_thresh).tp_pred_indices()
        for i, p in enumerate(preds):
            confs.append(p.confidence)
            flags.append(i in tp_set)
    if not confs:
        return 0.0
    confs = np.array(confs)
    flags = np.array(flags, dtype=bool)
    order = np.argsort(-confs, kind="stable")
    tp_cum = np.cumsum(flags[order])
    fp_cum = np.cumsum(~flags[order])
    precision = tp_cum / (tp_cum + fp_cum)
    recall = tp_cum / total_gt
    # running maximum of precision over each recall suffix
    suffix_max = np.maximum.accumulate(precision[::-1])[::-1]
    total = 0.0
    for k in range(1, N_RECALL_POINTS + 1):
        idx = np.searchsorted(recall, k / N_RECALL_POINTS, side="left")
        if idx < recall.shape[0]:
            total += suffix_max[idx]
    return 100.0 * total / N_RECALL_POINTS


@dataclass
class BucketEval:
    """Metrics for one (IoU threshold, range bucket) cell."""

    ap: float
    recall: float
    n_gt: int
    n_pred: int
    tp: int
    fp: int
    fn: int


@dataclass
class EvalReport:
    """AP/recall per IoU threshold and range bucket; buckets with no ground
    truth are omitted."""

    cells: dict[tuple[float, RangeBucket], BucketEval] = field(default_factory=dict)
    out_of_range_gts: int = 0

    def to_dict(self) -> dict:
        return {
            "out_of_range_gts": self.out_of_range_gts,
            "cells": [
                {
                    "iou_threshold": th,
                    "bucket": bucket.value,
                    "ap": cell.ap,
                    "recall": cell.recall,
                    "n_gt": cell.n_gt,
                    "n_pred": cell.n_pred,
                    "tp": cell.tp,
                    "fp": cell.fp,
                    "fn": cell.fn,
                }
                for (th, bucket), cell in sorted(
                    self.cells.items(), key=lambda kv: (kv[0][0], kv[0][1].value)
                )
            ],
        }

    def save_json(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def save_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["iou_threshold", "bucket", "ap", "recall", "tp", "fp", "fn", "n_gt", "n_pred"])
            for (th, bucket), cell in sorted(
                self.cells.items(), key=lambda kv: (kv[0][0], kv[0][1].value)
            ):
                writer.writerow(
                    [th, bucket.value, f"{cell.ap:.6f}", f"{cell.recall:.6f}",
                     cell.tp, cell.fp, cell.fn, cell.n_gt, cell.n_pred]
                )


def _assign_pred_buckets(
    preds: list[Prediction], gts: list[BoundingBox3D], gt_buckets: list[RangeBucket]
) -> list[RangeBucket | None]:
    """Range bucket per prediction: its best-overlap ground truth's bucket,
    else the nearest ground truth center's, else none (Full only)."""
    out: list[RangeBucket | None] = []
    for p in preds:
        if not gts:
            out.append(None)
            continue
        ious = np.array([iou3d(p.box, g) for g in gts])
        j = int(np.argmax(ious))
        if ious[j] > 0.0:
            out.append(gt_buckets[j])
            continue
        dists = np.array([np.linalg.norm(p.box.center - g.center) for g in gts])
        out.append(gt_buckets[int(np.argmin(dists))])
    return out


def evaluate(
    preds_by_frame: dict[str, list[Prediction]],
    labels_by_frame: dict[str, FrameLabel],
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS,
) -> EvalReport:
    """Per-bucket evaluation against ground truth labels.

    Ground truths beyond the detection range are dropped (counted in the
    report). Each bucket is evaluated only over its own ground truths;
    predictions attach to the bucket of their best-overlap ground truth
    (nearest center when nothing overlaps); predictions in frames without
    any ground truth count only toward the Full bucket.
    """
    missing_labels = sorted(set(preds_by_frame) - set(labels_by_frame))
    missing_preds = sorted(set(labels_by_frame) - set(preds_by_frame))
    if missing_labels or missing_preds:
        raise EvaluationError(
            "frame mismatch between predictions and labels; "
            f"missing labels for {missing_labels or 'none'}, "
            f"missing predictions for {missing_preds or 'none'}"
        )

    report = EvalReport()
    range_buckets = (RangeBucket.CLOSE, RangeBucket.MID, RangeBucket.LONG)
    # per frame: bucket-filtered views
    per_bucket_preds: dict[RangeBucket, dict[str, list[Prediction]]] = {
        b: {} for b in (*range_buckets, RangeBucket.FULL)
    }
    per_bucket_gts: dict[RangeBucket, dict[str, list[BoundingBox3D]]] = {
        b: {} for b in (*range_buckets, RangeBucket.FULL)
    }
    for fid, label in labels_by_frame.items():
        gts = []
        for box, _ in label.boxes:
            if box.horizontal_distance() > DETECTION_RANGE_M:
                report.out_of_range_gts += 1
            else:
                gts.append(box)
        preds = preds_by_frame[fid]
        gt_buckets = [bucket_of(g) for g in gts]
        pred_buckets = _assign_pred_buckets(preds, gts, gt_buckets)
        for b in range_buckets:
            per_bucket_gts[b][fid] = [g for g, gb in zip(gts, gt_buckets) if gb is b]
            per_bucket_preds[b][fid] = [p for p, pb in zip(preds, pred_buckets) if pb is b]
        per_bucket_gts[RangeBucket.FULL][fid] = gts
        per_bucket_preds[RangeBucket.FULL][fid] = list(preds)

    for th in thresholds:
        for b, gts_map in per_bucket_gts.items():
            n_gt = sum(len(v) for v in gts_map.values())
            if n_gt == 0:
                continue
            preds_map = per_bucket_preds[b]
            tp = fp = fn = 0
            for fid in gts_map:
                m = match_frame(preds_map[fid], gts_map[fid], th)
                tp += len(m.tp)
                fp += len(m.fp)
                fn += len(m.fn)
            ap = average_precision_40(preds_map, gts_map, th)
            recall = 100.0 * tp / n_gt
            report.cells[(th, b)] = BucketEval(
                ap=ap,
                recall=recall,
                n_gt=n_gt,
                n_pred=sum(len(v) for v in preds_map.values()),
                tp=tp,
                fp=fp,
                fn=fn,
            )
    return report
