"""Box-combination algorithms: WBF, NMS, soft-NMS and NMW.

Every method operates per image and, within an image, independently per
class label over the pooled predictions of N models.  Model weights enter
by multiplying each box's confidence by its model's weight to form the
*effective* score used for sorting, matching and averaging; the cluster
rescaling step divides by the sum of model weights, so equal weights
reduce exactly to the unweighted algorithm.

WBF keeps two parallel lists per label: clusters of member boxes and one
evolving fused box per cluster.  Each incoming box (in decreasing score
order) joins the cluster whose fused box it overlaps most, provided that
IoU exceeds the threshold; otherwise it opens a new cluster.  Fused
coordinates are confidence-weighted means, fused confidence is the plain
mean, and after the pass every fused confidence is rescaled by how many
boxes support the cluster.

NMS discards overlapping lower-scored boxes outright, soft-NMS decays
their scores instead (linearly above the IoU threshold, or by a Gaussian
of IoU unconditionally), and NMW averages boxes against the
highest-confidence seed of each cluster without touching confidences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ParameterError
from .geometry import Box, box_from_corners, iou_one_to_many

METHODS = ("wbf", "nms", "soft-nms-linear", "soft-nms-gaussian", "nmw")
RESCALE_VARIANTS = ("clamped", "unclamped")

# WBF favors a higher threshold than plain suppression does.
DEFAULT_IOU_THRESHOLD = {
    "wbf": 0.55,
    "nms": 0.5,
    "soft-nms-linear": 0.5,
    "soft-nms-gaussian": 0.5,
    "nmw": 0.5,
}


@dataclass(frozen=True)
class FusionParams:
    """Method selector plus every tunable knob of the fusion algorithms.

    ``skip_threshold`` filters effective scores before WBF clustering and
    defaults to off; ``rescale_variant`` picks between clamping the
    cluster-size factor at the total model weight ("clamped") or not
    ("unclamped"); ``score_power`` is the exponent applied to confidences
    when weighting coordinates (1.0 reproduces the plain weighted mean);
    ``soft_sigma`` and ``soft_score_threshold`` only affect soft-NMS.
    """

    method: str = "wbf"
    iou_threshold: float = 0.55
    skip_threshold: float = 0.0
    rescale_variant: str = "clamped"
    score_power: float = 1.0
    soft_sigma: float = 0.5
    soft_score_threshold: float = 0.001

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ParameterError(
                f"unknown method {self.method!r}; expected one of {', '.join(METHODS)}"
            )
        if not 0.0 < self.iou_threshold < 1.0:
            raise ParameterError(f"iou_threshold must be in (0, 1), got {self.iou_threshold}")
        if not 0.0 <= self.skip_threshold < 1.0:
            raise ParameterError(f"skip_threshold must be in [0, 1), got {self.skip_threshold}")
        if self.rescale_variant not in RESCALE_VARIANTS:
            raise ParameterError(
                f"unknown rescale_variant {self.rescale_variant!r}; "
                f"expected one of {', '.join(RESCALE_VARIANTS)}"
            )
        if self.score_power <= 0.0:
            raise ParameterError(f"score_power must be > 0, got {self.score_power}")
        if self.soft_sigma <= 0.0:
            raise ParameterError(f"soft_sigma must be > 0, got {self.soft_sigma}")
        if self.soft_score_threshold < 0.0:
            raise ParameterError(
                f"soft_score_threshold must be >= 0, got {self.soft_score_threshold}"
            )


def default_params(method: str) -> FusionParams:
    """FusionParams with the per-method default IoU threshold."""
    if method not in METHODS:
        raise ParameterError(
            f"unknown method {method!r}; expected one of {', '.join(METHODS)}"
        )
    return FusionParams(method=method, iou_threshold=DEFAULT_IOU_THRESHOLD[method])


@dataclass(frozen=True)
class ScoredBox:
    """One detection: geometry, class label, confidence and source model."""

    geometry: Box
    label: int
    score: float
    model: int = 0


@dataclass
class PredictionSet:
    """Per-model detections for one image plus the per-model weights.

    A zero weight mutes a model (its boxes carry effective score 0 and any
    positive skip threshold drops them) while the weight sum must stay
    positive.
    """

    boxes_per_model: list[list[ScoredBox]]
    model_weights: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.model_weights:
            self.model_weights = [1.0] * len(self.boxes_per_model)
        if len(self.model_weights) != len(self.boxes_per_model):
            raise ParameterError(
                f"{len(self.model_weights)} model weights for "
                f"{len(self.boxes_per_model)} models"
            )
        if any(w < 0 for w in self.model_weights):
            raise ParameterError(f"model weights must be non-negative: {self.model_weights}")
        if self.boxes_per_model and sum(self.model_weights) <= 0:
            raise ParameterError(f"model weights must sum to > 0: {self.model_weights}")

    @property
    def model_count(self) -> int:
        return len(self.boxes_per_model)


@dataclass
class Cluster:
    """Boxes judged to describe one object, plus their fused representative.

    ``members`` are the original input boxes in join order (the first one
    seeded the cluster); ``fused`` carries the final output score.
    """

    members: list[ScoredBox]
    fused: ScoredBox


def fuse_cluster(members: Sequence[ScoredBox], score_power: float = 1.0) -> ScoredBox:
    """Average a cluster of same-label boxes into one representative box.

    The returned confidence is the arithmetic mean of the member
    confidences; each returned coordinate is the mean of the member
    coordinates weighted by confidence**score_power, so higher-confidence
    boxes pull the fused box toward themselves.  A cluster whose
    confidences are all zero falls back to the unweighted mean.
    """
    if not members:
        raise ParameterError("cannot fuse an empty cluster")
    if score_power <= 0.0:
        raise ParameterError(f"score_power must be > 0, got {score_power}")
    label = members[0].label
    if any(m.label != label for m in members):
        raise ParameterError("cluster members must share one label")
    coords = np.array([m.geometry.corners() for m in members], dtype=np.float64)
    scores = np.array([m.score for m in members], dtype=np.float64)
    fused = _weighted_mean_box(coords, scores**score_power)
    return ScoredBox(
        geometry=box_from_corners(fused),
        label=label,
        score=float(scores.sum() / len(members)),
        model=members[0].model,
    )


def _weighted_mean_box(coords: np.ndarray, weights: np.ndarray) -> np.ndarray:
    total = float(weights.sum())
    if total > 0.0:
        fused = (weights[:, None] * coords).sum(axis=0) / total
    else:
        fused = coords.sum(axis=0) / len(coords)
    # Guard against float spill: the mean is inside the member envelope.
    return np.clip(fused, coords.min(axis=0), coords.max(axis=0))


def rescale_confidence(
    score: float, cluster_size: int, model_total: float, variant: str = "clamped"
) -> float:
    """Scale a fused confidence by cluster support over total model weight.

    Clusters backed by few models get their confidence cut; the clamped
    variant caps the factor at 1 while the unclamped one lets clusters
    larger than the model count push the score up (callers clamp final
    scores to [0, 1] on output).
    """
    if cluster_size < 1:
        raise ParameterError(f"cluster_size must be >= 1, got {cluster_size}")
    if model_total <= 0.0:
        raise ParameterError(f"model_total must be > 0, got {model_total}")
    if variant == "clamped":
        return score * min(cluster_size, model_total) / model_total
    if variant == "unclamped":
        return score * cluster_size / model_total
    raise ParameterError(
        f"unknown rescale_variant {variant!r}; expected one of {', '.join(RESCALE_VARIANTS)}"
    )


# --- flattening and per-label grouping -----------------------------------


@dataclass
class _FlatBoxes:
    coords: np.ndarray  # (n, 2k) corner rows, float64
    eff: np.ndarray  # (n,) score * model weight
    labels: np.ndarray  # (n,) int64
    models: np.ndarray  # (n,) int64
    pos: np.ndarray  # (n,) index within the model's input list
    boxes: list[ScoredBox]  # aligned originals
    weight_total: float


def _flatten(preds: PredictionSet) -> _FlatBoxes:
    boxes: list[ScoredBox] = []
    eff: list[float] = []
    labels: list[int] = []
    models: list[int] = []
    pos: list[int] = []
    width = None
    for model, model_boxes in enumerate(preds.boxes_per_model):
        weight = preds.model_weights[model]
        for i, b in enumerate(model_boxes):
            corners = b.geometry.corners()
            if width is None:
                width = len(corners)
            elif len(corners) != width:
                raise ParameterError("cannot mix 2D and 3D boxes in one prediction set")
            boxes.append(b)
            eff.append(b.score * weight)
            labels.append(b.label)
            models.append(model)
            pos.append(i)
    if width is None:
        width = 4
    coords = np.empty((len(boxes), width), dtype=np.float64)
    for i, b in enumerate(boxes):
        coords[i] = b.geometry.corners()
    return _FlatBoxes(
        coords=coords,
        eff=np.asarray(eff, dtype=np.float64),
        labels=np.asarray(labels, dtype=np.int64),
        models=np.asarray(models, dtype=np.int64),
        pos=np.asarray(pos, dtype=np.int64),
        boxes=boxes,
        weight_total=float(sum(preds.model_weights)),
    )


def _label_groups(flat: _FlatBoxes):
    for label in np.unique(flat.labels):
        yield int(label), np.flatnonzero(flat.labels == label)


def _sorted_order(flat: _FlatBoxes, rows: np.ndarray) -> np.ndarray:
    """Rows in decreasing effective score; ties by (model, input position)."""
    order = np.lexsort((flat.pos[rows], flat.models[rows], -flat.eff[rows]))
    return rows[order]


def _require_method(params: FusionParams, *allowed: str) -> None:
    if params.method not in allowed:
        raise ParameterError(
            f"params.method is {params.method!r}; this operation expects "
            f"{' or '.join(repr(a) for a in allowed)}"
        )


def _clamp_unit(x: float) -> float:
    return min(max(x, 0.0), 1.0)


# --- WBF ------------------------------------------------------------------


def wbf_clusters(preds: PredictionSet, params: FusionParams | None = None) -> list[Cluster]:
    """Weighted boxes fusion, returning the full clusters.

    Per label: boxes whose effective score falls below the skip threshold
    are dropped; the rest are processed in decreasing effective score.
    Each box joins the cluster whose *fused* box it overlaps most (IoU
    strictly above the threshold) and that cluster's fused box is
    recomputed from all members; non-matching boxes seed new clusters.
    Finally every fused confidence is rescaled by cluster size over total
    model weight and clamped to [0, 1].
    """
    if params is None:
        params = default_params("wbf")
    _require_method(params, "wbf")
    flat = _flatten(preds)
    out: list[Cluster] = []
    for label, rows in _label_groups(flat):
        rows = rows[flat.eff[rows] >= params.skip_threshold]
        if rows.size == 0:
            continue
        order = _sorted_order(flat, rows)
        coords = flat.coords[order]
        eff = flat.eff[order]
        cw = eff**params.score_power  # coordinate weights
        n = len(order)
        fused = np.empty_like(coords)
        members: list[list[int]] = []
        for i in range(n):
            m = len(members)
            if m:
                ious = iou_one_to_many(coords[i], fused[:m])
                j = int(np.argmax(ious))
                if float(ious[j]) > params.iou_threshold:
                    members[j].append(i)
                    sub = members[j]
                    fused[j] = _weighted_mean_box(coords[sub], cw[sub])
                    continue
            members.append([i])
            fused[m] = coords[i]
        for j, sub in enumerate(members):
            mean_eff = float(eff[sub].sum()) / len(sub)
            score = _clamp_unit(
                rescale_confidence(mean_eff, len(sub), flat.weight_total, params.rescale_variant)
            )
            seed = flat.boxes[order[sub[0]]]
            out.append(
                Cluster(
                    members=[flat.boxes[order[i]] for i in sub],
                    fused=ScoredBox(
                        geometry=box_from_corners(fused[j]),
                        label=label,
                        score=score,
                        model=seed.model,
                    ),
                )
            )
    out.sort(key=lambda c: -c.fused.score)
    return out


def wbf(preds: PredictionSet, params: FusionParams | None = None) -> list[ScoredBox]:
    """Weighted boxes fusion; see :func:`wbf_clusters` for the mechanics."""
    return [c.fused for c in wbf_clusters(preds, params)]


# --- NMS ------------------------------------------------------------------


def nms(preds: PredictionSet, params: FusionParams | None = None) -> list[ScoredBox]:
    """Greedy non-maximum suppression, per label.

    Boxes are visited in decreasing effective score; a box is kept unless
    it overlaps an already-kept box with IoU strictly above the threshold.
    """
    if params is None:
        params = default_params("nms")
    _require_method(params, "nms")
    flat = _flatten(preds)
    picked: list[tuple[float, int]] = []
    for _label, rows in _label_groups(flat):
        order = _sorted_order(flat, rows)
        coords = flat.coords[order]
        kept = np.empty_like(coords)
        k = 0
        for i in range(len(order)):
            if k:
                ious = iou_one_to_many(coords[i], kept[:k])
                if float(ious.max()) > params.iou_threshold:
                    continue
            kept[k] = coords[i]
            k += 1
            picked.append((float(flat.eff[order[i]]), order[i]))
    picked.sort(key=lambda t: -t[0])
    return [
        ScoredBox(
            geometry=flat.boxes[row].geometry,
            label=flat.boxes[row].label,
            score=_clamp_unit(eff),
            model=flat.boxes[row].model,
        )
        for eff, row in picked
    ]


# --- soft-NMS --------------------------------------------------------------


def soft_nms(preds: PredictionSet, params: FusionParams) -> list[ScoredBox]:
    """Score-decaying suppression, per label.

    Repeatedly selects the remaining box with the highest current score;
    the linear variant multiplies every remaining overlapping box's score
    by (1 - IoU) when IoU exceeds the threshold, the Gaussian variant by
    exp(-IoU**2 / sigma) unconditionally.  Boxes whose final score falls
    below ``soft_score_threshold`` are dropped from the output.
    """
    _require_method(params, "soft-nms-linear", "soft-nms-gaussian")
    linear = params.method == "soft-nms-linear"
    flat = _flatten(preds)
    picked: list[tuple[float, int]] = []
    for _label, rows in _label_groups(flat):
        order = _sorted_order(flat, rows)
        coords = flat.coords[order]
        current = flat.eff[order].copy()
        n = len(order)
        alive = np.ones(n, dtype=bool)
        for _ in range(n):
            idx = np.flatnonzero(alive)
            i = int(idx[np.argmax(current[idx])])
            alive[i] = False
            final = float(current[i])
            if final >= params.soft_score_threshold:
                picked.append((final, order[i]))
            rest = np.flatnonzero(alive)
            if rest.size == 0:
                break
            ious = iou_one_to_many(coords[i], coords[rest])
            if linear:
                decay = np.where(ious > params.iou_threshold, 1.0 - ious, 1.0)
            else:
                decay = np.exp(-(ious * ious) / params.soft_sigma)
            current[rest] *= decay
    picked.sort(key=lambda t: -t[0])
    return [
        ScoredBox(
            geometry=flat.boxes[row].geometry,
            label=flat.boxes[row].label,
            score=_clamp_unit(score),
            model=flat.boxes[row].model,
        )
        for score, row in picked
    ]


# --- NMW ------------------------------------------------------------------


def nmw_clusters(preds: PredictionSet, params: FusionParams | None = None) -> list[Cluster]:
    """Non-maximum weighted fusion, returning the full clusters.

    Clusters are seeded greedily by the highest-confidence unassigned box;
    every unassigned box overlapping the *seed* above the IoU threshold
    joins.  Fused coordinates are means weighted by confidence times IoU
    with the seed (the seed itself weighs in at IoU 1); the fused
    confidence is the seed's, unchanged.
    """
    if params is None:
        params = default_params("nmw")
    _require_method(params, "nmw")
    flat = _flatten(preds)
    out: list[Cluster] = []
    for label, rows in _label_groups(flat):
        order = _sorted_order(flat, rows)
        coords = flat.coords[order]
        eff = flat.eff[order]
        n = len(order)
        unassigned = np.ones(n, dtype=bool)
        for i in range(n):
            if not unassigned[i]:
                continue
            unassigned[i] = False
            sub = [i]
            ious_sub = [1.0]
            rest = np.flatnonzero(unassigned)
            if rest.size:
                ious = iou_one_to_many(coords[i], coords[rest])
                joining = ious > params.iou_threshold
                for r, v in zip(rest[joining], ious[joining]):
                    sub.append(int(r))
                    ious_sub.append(float(v))
                unassigned[rest[joining]] = False
            weights = eff[sub] * np.asarray(ious_sub, dtype=np.float64)
            fused = _weighted_mean_box(coords[sub], weights)
            seed = flat.boxes[order[i]]
            out.append(
                Cluster(
                    members=[flat.boxes[order[r]] for r in sub],
                    fused=ScoredBox(
                        geometry=box_from_corners(fused),
                        label=label,
                        score=_clamp_unit(float(eff[i])),
                        model=seed.model,
                    ),
                )
            )
    out.sort(key=lambda c: -c.fused.score)
    return out


def nmw(preds: PredictionSet, params: FusionParams | None = None) -> list[ScoredBox]:
    """Non-maximum weighted fusion; see :func:`nmw_clusters`."""
    return [c.fused for c in nmw_clusters(preds, params)]


# --- dispatch ---------------------------------------------------------------


def fuse(preds: PredictionSet, params: FusionParams) -> list[ScoredBox]:
    """Run the method selected by ``params.method`` on one image's predictions."""
    if params.method == "wbf":
        return wbf(preds, params)
    if params.method == "nms":
        return nms(preds, params)
    if params.method in ("soft-nms-linear", "soft-nms-gaussian"):
        return soft_nms(preds, params)
    if params.method == "nmw":
        return nmw(preds, params)
    raise ParameterError(
        f"unknown method {params.method!r}; expected one of {', '.join(METHODS)}"
    )
