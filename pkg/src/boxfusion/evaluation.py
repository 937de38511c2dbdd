"""Detection metrics: greedy matching, per-threshold precision, AP and mAP.

The metric is the competition variant that folds false negatives into the
precision denominator:

    precision(t) = TP(t) / (TP(t) + FP(t) + FN(t))

AP is the plain mean of precision over an IoU-threshold sweep (default
0.5 to 0.95 in steps of 0.05) and mAP the unweighted mean of AP over the
classes present in the ground truth.  Counts are aggregated per class
across all images before precision is computed, which also covers the
single-threshold mAP@0.5 style as the one-element sweep.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ParameterError
from .fusion import ScoredBox
from .geometry import Box, coords_array, iou_matrix

DEFAULT_THRESHOLDS: tuple[float, ...] = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


@dataclass(frozen=True)
class GroundTruthBox:
    """One annotated object: geometry, class label and owning image."""

    geometry: Box
    label: int
    image: str


@dataclass(frozen=True)
class MatchCounts:
    """True positives, false positives and false negatives at one threshold."""

    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "MatchCounts") -> "MatchCounts":
        return MatchCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


def precision_at(counts: MatchCounts) -> float:
    """TP / (TP + FP + FN); 0.0 when there is nothing to count."""
    denom = counts.tp + counts.fp + counts.fn
    if denom == 0:
        return 0.0
    return counts.tp / denom


def _greedy_match(ious: np.ndarray, threshold: float) -> int:
    """True-positive count for a (pred, gt) IoU matrix, preds already sorted.

    Each prediction (row) grabs the unmatched ground truth with the highest
    IoU, provided that IoU is strictly above the threshold; each ground
    truth matches at most once.
    """
    n, m = ious.shape
    open_gt = np.ones(m, dtype=bool)
    tp = 0
    for i in range(n):
        if not open_gt.any():
            break
        row = ious[i]
        candidates = np.where(open_gt, row, -1.0)
        j = int(np.argmax(candidates))
        if candidates[j] > threshold:
            open_gt[j] = False
            tp += 1
    return tp


def _sorted_pred_coords(preds: Sequence[ScoredBox]) -> np.ndarray:
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, i))
    return coords_array([preds[i].geometry for i in order])


def match_at_threshold(
    preds: Sequence[ScoredBox], gts: Sequence[GroundTruthBox], threshold: float
) -> MatchCounts:
    """Greedy one-to-one matching for one image and one label.

    Predictions are processed in decreasing score (ties by input order);
    a prediction whose best unmatched ground truth exceeds the threshold
    becomes a TP, otherwise an FP; leftover ground truths are FNs.
    """
    if not preds:
        return MatchCounts(tp=0, fp=0, fn=len(gts))
    if not gts:
        return MatchCounts(tp=0, fp=len(preds), fn=0)
    ious = iou_matrix(_sorted_pred_coords(preds), coords_array([g.geometry for g in gts]))
    tp = _greedy_match(ious, threshold)
    return MatchCounts(tp=tp, fp=len(preds) - tp, fn=len(gts) - tp)


def _check_thresholds(thresholds: Sequence[float]) -> tuple[float, ...]:
    thresholds = tuple(thresholds)
    if not thresholds:
        raise ParameterError("threshold list must not be empty")
    for t in thresholds:
        if not 0.0 < t < 1.0:
            raise ParameterError(f"IoU thresholds must be in (0, 1), got {t}")
    return thresholds


def average_precision(
    preds: Sequence[ScoredBox],
    gts: Sequence[GroundTruthBox],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> float:
    """Mean of precision over the threshold sweep, one image and one label."""
    thresholds = _check_thresholds(thresholds)
    total = 0.0
    for t in thresholds:
        total += precision_at(match_at_threshold(preds, gts, t))
    return total / len(thresholds)


@dataclass
class ClassReport:
    """Per-class evaluation detail."""

    label: int
    in_ground_truth: bool
    average_precision: float
    precision_by_threshold: dict[float, float]
    counts_by_threshold: dict[float, MatchCounts]


@dataclass
class EvalReport:
    """Per-class APs plus the aggregated mAP over ground-truth classes.

    Classes appearing only in the predictions contribute false positives
    to their own entry (``in_ground_truth`` False) and are excluded from
    the mAP mean.
    """

    thresholds: tuple[float, ...]
    classes: dict[int, ClassReport]
    mean_ap: float

    def to_dict(self) -> dict:
        return {
            "thresholds": list(self.thresholds),
            "mean_ap": self.mean_ap,
            "classes": {
                str(label): {
                    "in_ground_truth": rep.in_ground_truth,
                    "average_precision": rep.average_precision,
                    "precision_by_threshold": {
                        str(t): p for t, p in rep.precision_by_threshold.items()
                    },
                    "counts_by_threshold": {
                        str(t): {"tp": c.tp, "fp": c.fp, "fn": c.fn}
                        for t, c in rep.counts_by_threshold.items()
                    },
                }
                for label, rep in self.classes.items()
            },
        }


def mean_ap(
    predictions: Mapping[str, Sequence[ScoredBox]],
    ground_truth: Iterable[GroundTruthBox],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> EvalReport:
    """Dataset-level evaluation: counts summed per class across all images.

    ``predictions`` maps image id to that image's detections; ground-truth
    boxes carry their image id.  Images appearing only in the ground truth
    still count (their boxes become FNs).  Iteration is over sorted image
    and class ids, so input ordering never changes any reported value.
    """
    thresholds = _check_thresholds(thresholds)
    preds_by_class: dict[int, dict[str, list[ScoredBox]]] = {}
    for image in sorted(predictions):
        for box in predictions[image]:
            preds_by_class.setdefault(box.label, {}).setdefault(image, []).append(box)
    gts_by_class: dict[int, dict[str, list[GroundTruthBox]]] = {}
    for gt in ground_truth:
        gts_by_class.setdefault(gt.label, {}).setdefault(gt.image, []).append(gt)

    classes: dict[int, ClassReport] = {}
    ap_sum = 0.0
    gt_class_count = 0
    for label in sorted(set(preds_by_class) | set(gts_by_class)):
        class_preds = preds_by_class.get(label, {})
        class_gts = gts_by_class.get(label, {})
        images = sorted(set(class_preds) | set(class_gts))
        # IoU matrices are threshold-independent; build once per image.
        matrices = []
        for image in images:
            p = class_preds.get(image, [])
            g = class_gts.get(image, [])
            if p and g:
                ious = iou_matrix(
                    _sorted_pred_coords(p), coords_array([b.geometry for b in g])
                )
            else:
                ious = None
            matrices.append((len(p), len(g), ious))
        counts_by_t: dict[float, MatchCounts] = {}
        precision_by_t: dict[float, float] = {}
        for t in thresholds:
            total = MatchCounts()
            for n_pred, n_gt, ious in matrices:
                if ious is None:
                    total += MatchCounts(tp=0, fp=n_pred, fn=n_gt)
                else:
                    tp = _greedy_match(ious, t)
                    total += MatchCounts(tp=tp, fp=n_pred - tp, fn=n_gt - tp)
            counts_by_t[t] = total
            precision_by_t[t] = precision_at(total)
        ap = sum(precision_by_t[t] for t in thresholds) / len(thresholds)
        in_gt = label in gts_by_class
        classes[label] = ClassReport(
            label=label,
            in_ground_truth=in_gt,
            average_precision=ap,
            precision_by_threshold=precision_by_t,
            counts_by_threshold=counts_by_t,
        )
        if in_gt:
            ap_sum += ap
            gt_class_count += 1

    overall = ap_sum / gt_class_count if gt_class_count else 0.0
    return EvalReport(thresholds=thresholds, classes=classes, mean_ap=overall)
