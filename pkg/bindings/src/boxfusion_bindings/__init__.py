"""Array-level bindings for detection pipelines.

A thin marshaling layer over the boxfusion library: batched numpy arrays
in, numpy arrays out, no algorithm logic of its own.  Use it where
detections already live in arrays (model heads, TTA loops) and the
object-based API would be ceremony.

Calls are reentrant and keep no shared state; the heavy lifting happens
inside the core library's numpy kernels, so callers may parallelize
across images or batches.  Versioned in lockstep with the core package.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from boxfusion import (
    DEFAULT_THRESHOLDS,
    FusionParams,
    GroundTruthBox,
    PredictionSet,
    ScoredBox,
    box_from_corners,
    default_params,
    fuse,
    mean_ap,
)
from boxfusion import __version__ as _core_version

__version__ = _core_version

__all__ = ["BindingError", "fuse_arrays", "eval_arrays", "__version__"]


class BindingError(ValueError):
    """Array inputs do not line up (lengths, shapes, dimensionality)."""


def _as_box_array(boxes, where: str) -> np.ndarray:
    arr = np.asarray(boxes, dtype=np.float64)
    if arr.size == 0:
        return arr.reshape(0, 4)
    if arr.ndim != 2 or arr.shape[1] not in (4, 6):
        raise BindingError(
            f"{where}: boxes must be (n, 4) or (n, 6) corner rows, got shape {arr.shape}"
        )
    return arr


def _as_vector(values, n: int, where: str, dtype) -> np.ndarray:
    arr = np.asarray(values, dtype=dtype)
    if arr.ndim != 1 or len(arr) != n:
        raise BindingError(f"{where}: expected {n} values, got shape {arr.shape}")
    return arr


def fuse_arrays(
    boxes_list: Sequence,
    scores_list: Sequence,
    labels_list: Sequence,
    weights: Sequence[float] | None = None,
    method: str = "wbf",
    iou_threshold: float | None = None,
    skip_threshold: float = 0.0,
    rescale_variant: str = "clamped",
    score_power: float = 1.0,
    soft_sigma: float = 0.5,
    soft_score_threshold: float = 0.001,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fuse one image's per-model detection arrays.

    ``boxes_list`` holds one (T_i, 4) or (T_i, 6) corner array per model
    (normalized coordinates, mins before maxs); ``scores_list`` and
    ``labels_list`` hold the matching (T_i,) arrays.  Returns
    ``(boxes, scores, labels)`` sorted by descending score.

    Raises :class:`BindingError` when the per-model arrays disagree in
    length, shape or box dimensionality.
    """
    if not (len(boxes_list) == len(scores_list) == len(labels_list)):
        raise BindingError(
            f"got {len(boxes_list)} box arrays, {len(scores_list)} score arrays "
            f"and {len(labels_list)} label arrays"
        )
    per_model: list[list[ScoredBox]] = []
    width = None
    for m, (boxes, scores, labels) in enumerate(zip(boxes_list, scores_list, labels_list)):
        arr = _as_box_array(boxes, f"model {m}")
        n = len(arr)
        score_vec = _as_vector(scores, n, f"model {m} scores", np.float64)
        label_vec = _as_vector(labels, n, f"model {m} labels", np.int64)
        if n:
            if width is None:
                width = arr.shape[1]
            elif arr.shape[1] != width:
                raise BindingError(
                    f"model {m}: box width {arr.shape[1]} differs from earlier {width}"
                )
        per_model.append(
            [
                ScoredBox(
                    geometry=box_from_corners(arr[i]),
                    label=int(label_vec[i]),
                    score=float(score_vec[i]),
                    model=m,
                )
                for i in range(n)
            ]
        )
    width = width or 4
    if iou_threshold is None:
        iou_threshold = default_params(method).iou_threshold
    params = FusionParams(
        method=method,
        iou_threshold=iou_threshold,
        skip_threshold=skip_threshold,
        rescale_variant=rescale_variant,
        score_power=score_power,
        soft_sigma=soft_sigma,
        soft_score_threshold=soft_score_threshold,
    )
    weight_list = None if weights is None else [float(w) for w in weights]
    preds = PredictionSet(boxes_per_model=per_model, model_weights=weight_list or [])
    out = fuse(preds, params)
    boxes_out = np.empty((len(out), width), dtype=np.float64)
    scores_out = np.empty(len(out), dtype=np.float64)
    labels_out = np.empty(len(out), dtype=np.int64)
    for i, b in enumerate(out):
        boxes_out[i] = b.geometry.corners()
        scores_out[i] = b.score
        labels_out[i] = b.label
    return boxes_out, scores_out, labels_out


def eval_arrays(
    pred_boxes,
    pred_scores,
    pred_labels,
    pred_images,
    gt_boxes,
    gt_labels,
    gt_images,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> tuple[float, dict[int, float]]:
    """Score flat detection arrays against flat ground-truth arrays.

    ``*_images`` carry per-row image identifiers (converted to str for
    grouping).  Returns the mAP over ground-truth classes plus the
    per-class AP table (prediction-only classes included with AP 0).
    """
    parr = _as_box_array(pred_boxes, "predictions")
    n = len(parr)
    pscores = _as_vector(pred_scores, n, "prediction scores", np.float64)
    plabels = _as_vector(pred_labels, n, "prediction labels", np.int64)
    pimages = _as_vector(np.asarray(pred_images, dtype=object), n, "prediction images", object)
    garr = _as_box_array(gt_boxes, "ground truth")
    m = len(garr)
    glabels = _as_vector(gt_labels, m, "ground-truth labels", np.int64)
    gimages = _as_vector(np.asarray(gt_images, dtype=object), m, "ground-truth images", object)
    if n and m and parr.shape[1] != garr.shape[1]:
        raise BindingError(
            f"prediction boxes are {parr.shape[1]}-wide but ground truth is "
            f"{garr.shape[1]}-wide"
        )
    predictions: dict[str, list[ScoredBox]] = {}
    for i in range(n):
        predictions.setdefault(str(pimages[i]), []).append(
            ScoredBox(
                geometry=box_from_corners(parr[i]),
                label=int(plabels[i]),
                score=float(pscores[i]),
            )
        )
    gts = [
        GroundTruthBox(
            geometry=box_from_corners(garr[i]),
            label=int(glabels[i]),
            image=str(gimages[i]),
        )
        for i in range(m)
    ]
    report = mean_ap(predictions, gts, thresholds)
    table = {label: rep.average_precision for label, rep in report.classes.items()}
    return report.mean_ap, table
