"""Grid search over fusion parameters against a ground-truth file.

Every grid point is evaluated independently (fuse each image, then score
the pooled output with mAP) and the argmax is returned together with the
full (params, mAP) table.  Iteration is the sorted cartesian product of
the per-parameter value lists, so ties resolve deterministically to the
first point in that order; nothing smarter than exhaustive search is
offered on purpose.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping, Sequence

from .errors import DataError, ParameterError
from .evaluation import DEFAULT_THRESHOLDS, GroundTruthBox, mean_ap
from .fusion import FusionParams, PredictionSet, default_params, fuse

DEFAULT_GRID_CAP = 10_000


@dataclass
class ParamGrid:
    """Per-parameter candidate lists; ``weights`` holds whole vectors."""

    iou_threshold: Sequence[float] = (0.55,)
    skip_threshold: Sequence[float] = (0.0,)
    rescale_variant: Sequence[str] = ("clamped",)
    score_power: Sequence[float] = (1.0,)
    soft_sigma: Sequence[float] = (0.5,)
    soft_score_threshold: Sequence[float] = (0.001,)
    weights: Sequence[Sequence[float]] | None = None

    def __post_init__(self) -> None:
        for name in (
            "iou_threshold",
            "skip_threshold",
            "rescale_variant",
            "score_power",
            "soft_sigma",
            "soft_score_threshold",
        ):
            if not tuple(getattr(self, name)):
                raise ParameterError(f"grid axis {name!r} must not be empty")
        if self.weights is not None and not tuple(self.weights):
            raise ParameterError("grid axis 'weights' must not be empty")

    def size(self) -> int:
        n = (
            len(tuple(self.iou_threshold))
            * len(tuple(self.skip_threshold))
            * len(tuple(self.rescale_variant))
            * len(tuple(self.score_power))
            * len(tuple(self.soft_sigma))
            * len(tuple(self.soft_score_threshold))
        )
        if self.weights is not None:
            n *= len(tuple(self.weights))
        return n

    def points(self, method: str) -> Iterator["GridPoint"]:
        """Sorted cartesian product as FusionParams plus a weight vector."""
        weight_axis: list[tuple[float, ...] | None]
        if self.weights is None:
            weight_axis = [None]
        else:
            weight_axis = sorted(tuple(float(x) for x in w) for w in self.weights)
        for iou in sorted(self.iou_threshold):
            for skip in sorted(self.skip_threshold):
                for variant in sorted(self.rescale_variant):
                    for power in sorted(self.score_power):
                        for sigma in sorted(self.soft_sigma):
                            for soft_thr in sorted(self.soft_score_threshold):
                                params = FusionParams(
                                    method=method,
                                    iou_threshold=iou,
                                    skip_threshold=skip,
                                    rescale_variant=variant,
                                    score_power=power,
                                    soft_sigma=sigma,
                                    soft_score_threshold=soft_thr,
                                )
                                for w in weight_axis:
                                    yield GridPoint(params=params, weights=w)


@dataclass(frozen=True)
class GridPoint:
    """One grid-search candidate: fusion params plus optional model weights."""

    params: FusionParams
    weights: tuple[float, ...] | None = None

    def describe(self) -> dict:
        d = {
            "method": self.params.method,
            "iou_threshold": self.params.iou_threshold,
            "skip_threshold": self.params.skip_threshold,
            "rescale_variant": self.params.rescale_variant,
            "score_power": self.params.score_power,
            "soft_sigma": self.params.soft_sigma,
            "soft_score_threshold": self.params.soft_score_threshold,
        }
        if self.weights is not None:
            d["weights"] = list(self.weights)
        return d


@dataclass
class TuneResult:
    """Best grid point with its mAP, plus the full evaluation table."""

    best: GridPoint
    best_map: float
    table: list[tuple[GridPoint, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "best": self.best.describe(),
            "best_map": self.best_map,
            "table": [
                {"point": point.describe(), "map": score} for point, score in self.table
            ],
        }


_GRID_KEYS = (
    "iou_threshold",
    "skip_threshold",
    "rescale_variant",
    "score_power",
    "soft_sigma",
    "soft_score_threshold",
    "weights",
)


def load_grid(path: str) -> ParamGrid:
    """Read a grid file: a JSON object mapping parameter name to value list."""
    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise DataError(f"{path}: expected a JSON object of parameter lists")
    unknown = set(payload) - set(_GRID_KEYS)
    if unknown:
        raise DataError(
            f"{path}: unknown grid keys {sorted(unknown)}; expected {list(_GRID_KEYS)}"
        )
    kwargs = {}
    for key, value in payload.items():
        if not isinstance(value, list) or not value:
            raise DataError(f"{path}: grid key {key!r} must map to a non-empty list")
        kwargs[key] = value
    try:
        grid = ParamGrid(**kwargs)
        _validate_grid(grid)
    except ParameterError as exc:
        raise DataError(f"{path}: {exc}") from exc
    return grid


def _validate_grid(grid: ParamGrid) -> None:
    # Constructing params for each axis value surfaces range errors eagerly.
    base = default_params("wbf")
    for iou in grid.iou_threshold:
        replace(base, iou_threshold=iou)
    for skip in grid.skip_threshold:
        replace(base, skip_threshold=skip)
    for variant in grid.rescale_variant:
        replace(base, rescale_variant=variant)
    for power in grid.score_power:
        replace(base, score_power=power)
    for sigma in grid.soft_sigma:
        replace(base, soft_sigma=sigma)
    for thr in grid.soft_score_threshold:
        replace(base, soft_score_threshold=thr)
    if grid.weights is not None:
        for vector in grid.weights:
            if not vector or any(float(w) < 0 for w in vector) or sum(vector) <= 0:
                raise ParameterError(
                    f"weight vectors must be non-empty, non-negative and sum to > 0: {vector}"
                )


def evaluate_point(
    pred_sets: Mapping[str, PredictionSet],
    ground_truth: Sequence[GroundTruthBox],
    point: GridPoint,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> float:
    """Fuse every image at one grid point and return the resulting mAP."""
    fused = {}
    for image in sorted(pred_sets):
        ps = pred_sets[image]
        if point.weights is not None:
            ps = PredictionSet(
                boxes_per_model=ps.boxes_per_model, model_weights=list(point.weights)
            )
        fused[image] = fuse(ps, point.params)
    return mean_ap(fused, ground_truth, thresholds).mean_ap


def grid_search(
    pred_sets: Mapping[str, PredictionSet],
    ground_truth: Sequence[GroundTruthBox],
    method: str,
    grid: ParamGrid,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    *,
    cap: int = DEFAULT_GRID_CAP,
    workers: int | None = None,
) -> TuneResult:
    """Exhaustive search over the grid; deterministic argmax on ties.

    Grid points are evaluated independently (in parallel when ``workers``
    exceeds 1) and reduced in iteration order, so the result never depends
    on scheduling.  A grid larger than ``cap`` is refused outright.
    """
    size = grid.size()
    if size > cap:
        raise ParameterError(f"grid has {size} points, exceeding the cap of {cap}")
    _validate_grid(grid)
    points = list(grid.points(method))

    def run(point: GridPoint) -> float:
        return evaluate_point(pred_sets, ground_truth, point, thresholds)

    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(run, points))
    else:
        scores = [run(p) for p in points]

    best_index = max(range(len(points)), key=lambda i: (scores[i], -i))
    return TuneResult(
        best=points[best_index],
        best_map=scores[best_index],
        table=list(zip(points, scores)),
    )
