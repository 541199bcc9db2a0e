"""Every quantitative metric the system reports.

Classification accuracy comes in two forms: per-view (mean over objects of
the per-object mean over views) and per-object (one fused/selected
prediction per object). Point-level segmentation quality uses mIOU,
frequency-weighted mIOU, and mAcc over a ground-truth labeled cloud; the
mAcc here is TP/(TP+FP) exactly as the reference formulation writes it,
with the conventional recall form available behind a flag.

Label matching is case-folded exact string equality throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .cloud import UNASSIGNED, LabeledCloud

DEFAULT_TRANSFER_DIST = 0.05  # meters


@dataclass(frozen=True)
class ClassificationRecord:
    """One object's per-view predictions, fused prediction, and truth."""

    object_id: int
    view_predictions: Tuple[str, ...]
    prediction: Optional[str]          # fused/selected; None = no views
    ground_truth: str

    def __post_init__(self):
        if len(self.view_predictions) < 1 and self.prediction is not None:
            raise ValueError("a record with a prediction needs views")


def _matches(a: Optional[str], b: str) -> bool:
    return a is not None and a.casefold() == b.casefold()


def view_accuracy(records: Sequence[ClassificationRecord]) -> float:
    """Mean over objects of the per-object fraction of correct views."""
    if not records:
        raise ValueError("no records")
    per_object = []
    for rec in records:
        if not rec.view_predictions:
            per_object.append(0.0)
            continue
        hits = sum(_matches(p, rec.ground_truth) for p in rec.view_predictions)
        per_object.append(hits / len(rec.view_predictions))
    return float(np.mean(per_object))


def object_accuracy(records: Sequence[ClassificationRecord]) -> float:
    """Fraction of objects whose single prediction matches ground truth.

    Objects without a prediction (no views survived association) count as
    incorrect.
    """
    if not records:
        raise ValueError("no records")
    hits = sum(_matches(rec.prediction, rec.ground_truth) for rec in records)
    return hits / len(records)


def upper_bound_accuracy(records: Sequence[ClassificationRecord]) -> float:
    """Fraction of objects where any view already predicted the truth."""
    if not records:
        raise ValueError("no records")
    hits = sum(any(_matches(p, rec.ground_truth) for p in rec.view_predictions)
               for rec in records)
    return hits / len(records)


def transfer_labels(predicted: LabeledCloud, ground_truth: LabeledCloud,
                    max_dist: float = DEFAULT_TRANSFER_DIST) -> np.ndarray:
    """Class of the nearest predicted point for every ground-truth point.

    Ground-truth points farther than max_dist from every predicted point
    stay unlabeled (-1). max_dist may be inf.
    """
    if len(predicted) == 0 or len(ground_truth) == 0:
        raise ValueError("clouds must be non-empty")
    tree = cKDTree(predicted.positions)
    dist, idx = tree.query(ground_truth.positions,
                           distance_upper_bound=max_dist if math.isfinite(max_dist) else np.inf)
    out = np.full(len(ground_truth), UNASSIGNED, dtype=np.int32)
    found = np.isfinite(dist) & (dist <= max_dist)
    out[found] = predicted.class_ids[idx[found]]
    return out


@dataclass
class ConfusionTally:
    """Per-class TP/FP/FN plus ground-truth point counts."""

    classes: np.ndarray   # gt classes present, ascending
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    n: np.ndarray         # gt point count per class


def confusion_tally(gt_classes: np.ndarray, pred_classes: np.ndarray) -> ConfusionTally:
    """Count TP/FP/FN for every class present in the ground truth.

    Unlabeled predictions (-1) contribute FN to the ground-truth class and
    never FP anywhere; predicted classes absent from the ground truth are
    not scored on their own but do add FP pressure through mismatches.
    """
    gt = np.asarray(gt_classes, dtype=np.int64)
    pred = np.asarray(pred_classes, dtype=np.int64)
    if gt.shape != pred.shape:
        raise ValueError("label sequences must have equal length")
    classes = np.unique(gt[gt >= 0])
    if len(classes) == 0:
        raise ValueError("ground truth contains no labeled points")
    tp = np.zeros(len(classes), dtype=np.int64)
    fp = np.zeros(len(classes), dtype=np.int64)
    fn = np.zeros(len(classes), dtype=np.int64)
    n = np.zeros(len(classes), dtype=np.int64)
    for i, c in enumerate(classes):
        in_gt = gt == c
        in_pred = pred == c
        tp[i] = int(np.count_nonzero(in_gt & in_pred))
        fn[i] = int(np.count_nonzero(in_gt & ~in_pred))
        fp[i] = int(np.count_nonzero(~in_gt & in_pred & (gt >= 0)))
        n[i] = int(np.count_nonzero(in_gt))
    return ConfusionTally(classes, tp, fp, fn, n)


def segmentation_metrics(gt_classes: np.ndarray, pred_classes: np.ndarray,
                         conventional_macc: bool = False,
                         ) -> Tuple[float, float, float]:
    """(mIOU, F-mIOU, mAcc) over the classes present in the ground truth.

    mAcc defaults to the TP/(TP+FP) form; pass conventional_macc=True for
    the recall form TP/(TP+FN). Classes whose denominator is zero
    contribute 0.
    """
    t = confusion_tally(gt_classes, pred_classes)
    union = t.tp + t.fp + t.fn
    iou = np.where(union > 0, t.tp / np.maximum(union, 1), 0.0)
    miou = float(iou.mean())
    fmiou = float((t.n * iou).sum() / t.n.sum())
    denom = t.tp + (t.fn if conventional_macc else t.fp)
    acc = np.where(denom > 0, t.tp / np.maximum(denom, 1), 0.0)
    macc = float(acc.mean())
    return miou, fmiou, macc


@dataclass(frozen=True)
class TimingReport:
    """Per-stage wall-clock seconds and the resulting frame rate."""

    stages: Tuple[Tuple[str, float], ...]
    total_seconds: float
    sampled_frames: int
    fps: float

    def format_table(self) -> str:
        width = max((len(name) for name, _ in self.stages), default=5)
        lines = [f"{name:<{width}}  {seconds:10.3f} s"
                 for name, seconds in self.stages]
        lines.append(f"{'total':<{width}}  {self.total_seconds:10.3f} s")
        lines.append(f"{'frames':<{width}}  {self.sampled_frames:10d}")
        lines.append(f"{'FPS':<{width}}  {self.fps:10.3f}")
        return "\n".join(lines)


def timing_report(stage_seconds: Mapping[str, float],
                  sampled_frames: int) -> TimingReport:
    """Aggregate stage durations into a table with FPS = frames/total."""
    stages = tuple((name, float(s)) for name, s in stage_seconds.items())
    if any(s < 0 for _, s in stages):
        raise ValueError("durations must be non-negative")
    total = sum(s for _, s in stages)
    if total <= 0:
        raise ValueError("total time is zero; FPS undefined")
    return TimingReport(stages, total, sampled_frames, sampled_frames / total)
