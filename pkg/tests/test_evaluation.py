"""Metric unit tests: matching, precision, AP, mAP."""

from __future__ import annotations

import numpy as np
import pytest

from boxfusion import (
    DEFAULT_THRESHOLDS,
    Box2D,
    GroundTruthBox,
    MatchCounts,
    ParameterError,
    ScoredBox,
    average_precision,
    match_at_threshold,
    mean_ap,
    precision_at,
)

from oracles import map_reference


def pred(x1, y1, x2, y2, score, label=0):
    return ScoredBox(geometry=Box2D(x1, y1, x2, y2), label=label, score=score)


def gt(x1, y1, x2, y2, label=0, image="img0"):
    return GroundTruthBox(geometry=Box2D(x1, y1, x2, y2), label=label, image=image)


def test_default_sweep_has_ten_thresholds():
    assert DEFAULT_THRESHOLDS == (0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)


# --- match_at_threshold ------------------------------------------------------


def test_exact_match_is_tp():
    counts = match_at_threshold([pred(0, 0, 1, 1, 1.0)], [gt(0, 0, 1, 1)], 0.5)
    assert counts == MatchCounts(tp=1, fp=0, fn=0)


def test_missing_prediction_is_fn():
    counts = match_at_threshold([], [gt(0, 0, 1, 1)], 0.5)
    assert counts == MatchCounts(tp=0, fp=0, fn=1)


def test_double_detection_is_tp_plus_fp():
    preds = [pred(0, 0, 1, 1, 0.9), pred(0.01, 0, 1, 1, 0.8)]
    counts = match_at_threshold(preds, [gt(0, 0, 1, 1)], 0.5)
    assert counts == MatchCounts(tp=1, fp=1, fn=0)


def test_hit_requires_strictly_greater_iou():
    # IoU exactly 0.5 is not a hit
    p = pred(0, 0, 1, 0.5, 1.0)
    g = gt(0, 0, 1, 1)
    assert match_at_threshold([p], [g], 0.5) == MatchCounts(tp=0, fp=1, fn=1)
    assert match_at_threshold([p], [g], 0.45) == MatchCounts(tp=1, fp=0, fn=0)


def test_greedy_takes_best_gt_first():
    # high-score pred overlaps both gts, must take the better one
    p1 = pred(0, 0, 1, 1, 0.9)
    p2 = pred(0, 0, 1, 0.62, 0.5)
    gts = [gt(0, 0, 1, 0.95), gt(0, 0, 1, 0.6)]
    counts = match_at_threshold([p1, p2], gts, 0.5)
    assert counts == MatchCounts(tp=2, fp=0, fn=0)


# --- precision ----------------------------------------------------------------


def test_precision_values():
    assert precision_at(MatchCounts(1, 0, 0)) == 1.0
    assert precision_at(MatchCounts(1, 1, 0)) == 0.5
    assert precision_at(MatchCounts(0, 0, 0)) == 0.0
    assert precision_at(MatchCounts(2, 1, 1)) == 0.5


# --- average_precision ----------------------------------------------------------


def test_perfect_predictions_give_ap_one():
    preds = [pred(0, 0, 1, 1, 1.0), pred(0, 0, 0.5, 0.5, 1.0)]
    gts = [gt(0, 0, 1, 1), gt(0, 0, 0.5, 0.5)]
    assert average_precision(preds, gts) == 1.0


def test_iou_06_fixture_gives_ap_02():
    # hits only at t in {0.5, 0.55} over the default sweep
    counts = average_precision([pred(0, 0, 1, 0.6, 1.0)], [gt(0, 0, 1, 1)])
    assert counts == pytest.approx(0.2, abs=1e-12)


def test_single_threshold_reduces_to_precision():
    preds = [pred(0, 0, 1, 1, 0.9), pred(0.6, 0.6, 0.9, 0.9, 0.8)]
    gts = [gt(0, 0, 1, 1)]
    ap = average_precision(preds, gts, thresholds=(0.5,))
    assert ap == precision_at(match_at_threshold(preds, gts, 0.5))


def test_empty_thresholds_rejected():
    with pytest.raises(ParameterError):
        average_precision([], [], thresholds=())
    with pytest.raises(ParameterError):
        average_precision([], [], thresholds=(0.5, 1.0))


# --- mean_ap ----------------------------------------------------------------------


def test_single_class_perfect_map():
    report = mean_ap({"img0": [pred(0, 0, 1, 1, 1.0)]}, [gt(0, 0, 1, 1)])
    assert report.mean_ap == 1.0
    assert report.classes[0].average_precision == 1.0


def test_two_classes_mean():
    predictions = {
        "img0": [pred(0, 0, 1, 1, 1.0, label=0), pred(0, 0, 0.1, 0.1, 0.9, label=1)]
    }
    gts = [gt(0, 0, 1, 1, label=0), gt(0.5, 0.5, 1, 1, label=1)]
    report = mean_ap(predictions, gts)
    assert report.classes[0].average_precision == 1.0
    assert report.classes[1].average_precision == 0.0
    assert report.mean_ap == pytest.approx(0.5)


def test_prediction_only_class_reported_but_excluded():
    predictions = {
        "img0": [pred(0, 0, 1, 1, 1.0, label=0), pred(0, 0, 1, 1, 0.9, label=7)]
    }
    report = mean_ap(predictions, [gt(0, 0, 1, 1, label=0)])
    assert report.mean_ap == 1.0
    assert not report.classes[7].in_ground_truth
    assert report.classes[7].average_precision == 0.0
    assert report.classes[7].counts_by_threshold[0.5].fp == 1


def test_gt_only_image_counts_as_fn():
    predictions = {"img0": [pred(0, 0, 1, 1, 1.0)]}
    gts = [gt(0, 0, 1, 1, image="img0"), gt(0, 0, 1, 1, image="img_unseen")]
    report = mean_ap(predictions, gts, thresholds=(0.5,))
    counts = report.classes[0].counts_by_threshold[0.5]
    assert counts == MatchCounts(tp=1, fp=0, fn=1)
    assert report.mean_ap == pytest.approx(0.5)


def test_counts_aggregate_across_images_before_precision():
    predictions = {
        "a": [pred(0, 0, 1, 1, 0.9)],
        "b": [pred(0, 0, 1, 1, 0.8), pred(0, 0, 0.1, 0.1, 0.7)],
    }
    gts = [gt(0, 0, 1, 1, image="a"), gt(0, 0, 1, 1, image="b")]
    report = mean_ap(predictions, gts, thresholds=(0.5,))
    # dataset-level: TP=2, FP=1, FN=0 -> 2/3 (not mean of per-image 1.0 and 0.5)
    assert report.mean_ap == pytest.approx(2.0 / 3.0)


def test_precision_monotone_in_threshold():
    rng = np.random.default_rng(11)
    for _ in range(20):
        preds = []
        gts = []
        for _ in range(rng.integers(1, 8)):
            x1, x2 = sorted(rng.uniform(0, 1, 2))
            y1, y2 = sorted(rng.uniform(0, 1, 2))
            gts.append(gt(x1, y1, x2, y2))
        for _ in range(rng.integers(0, 8)):
            x1, x2 = sorted(rng.uniform(0, 1, 2))
            y1, y2 = sorted(rng.uniform(0, 1, 2))
            preds.append(pred(x1, y1, x2, y2, float(rng.uniform(0, 1))))
        values = [
            precision_at(match_at_threshold(preds, gts, t)) for t in DEFAULT_THRESHOLDS
        ]
        assert all(a >= b - 1e-15 for a, b in zip(values, values[1:]))


def test_image_and_class_order_do_not_matter():
    rng = np.random.default_rng(23)
    predictions = {}
    gts = []
    for img in ("x", "y", "z"):
        boxes = []
        for _ in range(5):
            x1, x2 = sorted(rng.uniform(0, 1, 2))
            y1, y2 = sorted(rng.uniform(0, 1, 2))
            label = int(rng.integers(0, 3))
            boxes.append(pred(x1, y1, x2, y2, float(rng.uniform(0, 1)), label=label))
            gts.append(gt(x1 * 0.99, y1, x2, y2, label=label, image=img))
        predictions[img] = boxes
    a = mean_ap(predictions, gts)
    shuffled = {k: predictions[k] for k in reversed(sorted(predictions))}
    b = mean_ap(shuffled, list(reversed(gts)))
    assert a.mean_ap == b.mean_ap
    for label in a.classes:
        assert (
            a.classes[label].average_precision == b.classes[label].average_precision
        )


def test_adding_fp_never_raises_precision():
    base = {"img0": [pred(0, 0, 1, 1, 0.9)]}
    extra = {"img0": [pred(0, 0, 1, 1, 0.9), pred(0.8, 0.8, 0.9, 0.9, 0.1)]}
    gts = [gt(0, 0, 1, 1)]
    a = mean_ap(base, gts)
    b = mean_ap(extra, gts)
    for t in DEFAULT_THRESHOLDS:
        assert (
            b.classes[0].precision_by_threshold[t]
            <= a.classes[0].precision_by_threshold[t]
        )


def test_matching_unmatched_gt_never_lowers_precision():
    # a perfect-match prediction for a previously missed ground truth turns
    # an FN into a TP at every threshold
    gts = [gt(0, 0, 1, 1), gt(0.6, 0.1, 0.9, 0.4)]
    base = {"img0": [pred(0, 0, 1, 1, 0.9)]}
    extra = {"img0": [pred(0, 0, 1, 1, 0.9), pred(0.6, 0.1, 0.9, 0.4, 1.0)]}
    a = mean_ap(base, gts)
    b = mean_ap(extra, gts)
    for t in DEFAULT_THRESHOLDS:
        assert (
            b.classes[0].precision_by_threshold[t]
            >= a.classes[0].precision_by_threshold[t]
        )
    assert b.mean_ap >= a.mean_ap


def test_mean_ap_with_3d_boxes():
    from boxfusion import Box3D

    cube = Box3D(0.1, 0.1, 0.1, 0.5, 0.5, 0.5)
    shifted = Box3D(0.1, 0.1, 0.1, 0.5, 0.5, 0.45)  # IoU 0.875
    predictions = {
        "img0": [ScoredBox(geometry=shifted, label=0, score=0.9)],
    }
    gts = [GroundTruthBox(geometry=cube, label=0, image="img0")]
    report = mean_ap(predictions, gts)
    # hit at t in {0.5 .. 0.85}, miss from 0.9: 8/10
    assert report.mean_ap == pytest.approx(0.8, abs=1e-12)


def test_mixed_dimensionality_rejected():
    from boxfusion import Box3D

    preds = [pred(0, 0, 1, 1, 0.9)]
    gts = [GroundTruthBox(geometry=Box3D(0, 0, 0, 1, 1, 1), label=0, image="img0")]
    with pytest.raises(ParameterError):
        match_at_threshold(preds, gts, 0.5)


def test_matches_reference_implementation_small():
    rng = np.random.default_rng(5)
    predictions = {}
    ref_preds = {}
    gts = []
    ref_gts = []
    for img in ("a", "b", "c"):
        boxes = []
        rboxes = []
        for _ in range(int(rng.integers(0, 6))):
            x1, x2 = sorted(rng.uniform(0, 1, 2))
            y1, y2 = sorted(rng.uniform(0, 1, 2))
            label = int(rng.integers(0, 2))
            score = float(rng.uniform(0, 1))
            boxes.append(pred(x1, y1, x2, y2, score, label=label))
            rboxes.append(((x1, y1, x2, y2), label, score))
        predictions[img] = boxes
        ref_preds[img] = rboxes
        for _ in range(int(rng.integers(0, 4))):
            x1, x2 = sorted(rng.uniform(0, 1, 2))
            y1, y2 = sorted(rng.uniform(0, 1, 2))
            label = int(rng.integers(0, 2))
            gts.append(gt(x1, y1, x2, y2, label=label, image=img))
            ref_gts.append(((x1, y1, x2, y2), label, img))
    report = mean_ap(predictions, gts)
    expected, _ = map_reference(ref_preds, ref_gts, DEFAULT_THRESHOLDS)
    assert report.mean_ap == pytest.approx(expected, abs=1e-12)
