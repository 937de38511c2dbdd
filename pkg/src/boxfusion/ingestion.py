"""Reading and writing prediction and ground-truth files.

Two on-disk formats are supported:

* ``csv`` / ``csv-pixel``: flat CSV with header
  ``image,label,score,x1,y1,x2,y2[,z1,z2]`` holding corner coordinates,
  normalized in ``csv`` and in pixels in ``csv-pixel``.  Ground truth uses
  the same layout with the score column omitted.
* ``coco``: a JSON array of ``{"image_id", "category_id", "bbox", "score"}``
  objects with ``bbox`` as pixel ``[x, y, width, height]`` (2D only).

Pixel formats need an image-dimensions sidecar CSV with header
``image,width,height[,depth]``.  All coordinates are normalized to [0, 1]
corners on load (clipping and repairing reversed corners) and everything
is UTF-8 with LF line endings; floats are written with full round-trip
precision.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import DataError, ParameterError
from .evaluation import GroundTruthBox
from .fusion import PredictionSet, ScoredBox
from .geometry import box_from_corners, clip

FORMATS = ("csv", "csv-pixel", "coco")

ImageDims = Mapping[str, tuple[float, ...]]


@dataclass(frozen=True)
class DetectionRecord:
    """One parsed detection row, already in normalized corner coordinates."""

    image: str
    label: int
    score: float | None
    box: tuple[float, ...]


def load_dims(path: str) -> dict[str, tuple[float, ...]]:
    """Read the ``image,width,height[,depth]`` sidecar CSV."""
    dims: dict[str, tuple[float, ...]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["image", "width", "height"]:
            raise DataError(f"{path}: expected header image,width,height[,depth]")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                values = tuple(float(v) for v in row[1:])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if len(values) not in (2, 3) or any(v <= 0 for v in values):
                raise DataError(
                    f"{path}:{lineno}: dimensions must be 2 or 3 positive numbers"
                )
            dims[row[0]] = values
    return dims


def _scale_factors(image: str, dims: ImageDims | None, axes: int, path: str) -> tuple[float, ...]:
    if dims is None or image not in (dims or {}):
        raise DataError(
            f"{path}: pixel coordinates for image {image!r} but no dimensions "
            "were supplied for it; pass the image,width,height sidecar"
        )
    size = dims[image]
    if len(size) < axes:
        raise DataError(
            f"{path}: image {image!r} needs {axes} dimensions, sidecar has {len(size)}"
        )
    return size[:axes]


def _normalized_box(values: Sequence[float], where: str) -> tuple[float, ...]:
    if not all(math.isfinite(v) for v in values):
        raise DataError(f"{where}: non-finite coordinate in {list(values)}")
    try:
        return clip(box_from_corners(values)).corners()
    except ParameterError as exc:
        raise DataError(f"{where}: {exc}") from exc


def _parse_csv_header(header: list[str], path: str) -> tuple[bool, int]:
    """Return (has_score, axis_count) for a detection/ground-truth header."""
    cols = [h.strip() for h in header]
    bodies = {
        ("x1", "y1", "x2", "y2"): 2,
        ("x1", "y1", "x2", "y2", "z1", "z2"): 3,
    }
    for body, axes in bodies.items():
        if cols == ["image", "label", "score", *body]:
            return True, axes
        if cols == ["image", "label", *body]:
            return False, axes
    raise DataError(
        f"{path}: unrecognized CSV header {','.join(cols)}; expected "
        "image,label[,score],x1,y1,x2,y2[,z1,z2]"
    )


def _corner_order(values: Sequence[float], axes: int) -> tuple[float, ...]:
    # File layout is x1,y1,x2,y2[,z1,z2]; internal layout is mins-then-maxs.
    if axes == 2:
        return tuple(values)
    x1, y1, x2, y2, z1, z2 = values
    return (x1, y1, z1, x2, y2, z2)


def _file_order(corners: Sequence[float], axes: int) -> tuple[float, ...]:
    if axes == 2:
        return tuple(corners)
    x1, y1, z1, x2, y2, z2 = corners
    return (x1, y1, x2, y2, z1, z2)


def _load_csv(path: str, pixels: bool, dims: ImageDims | None) -> list[DetectionRecord]:
    records: list[DetectionRecord] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return records
        has_score, axes = _parse_csv_header(header, path)
        width = 2 + (1 if has_score else 0) + 2 * axes
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            where = f"{path}:{lineno}"
            if len(row) != width:
                raise DataError(f"{where}: expected {width} fields, got {len(row)}")
            image = row[0]
            try:
                label = int(row[1])
                rest = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise DataError(f"{where}: {exc}") from exc
            if label < 0:
                raise DataError(f"{where}: class label must be non-negative, got {label}")
            score = None
            if has_score:
                score = rest[0]
                rest = rest[1:]
                if not 0.0 <= score <= 1.0:
                    raise DataError(f"{where}: score must be in [0, 1], got {score}")
            coords = _corner_order(rest, axes)
            if pixels:
                scale = _scale_factors(image, dims, axes, path)
                coords = tuple(
                    c / scale[i % axes] for i, c in enumerate(coords)
                )
            records.append(
                DetectionRecord(
                    image=image, label=label, score=score, box=_normalized_box(coords, where)
                )
            )
    return records


def _load_coco(path: str, dims: ImageDims | None) -> list[DetectionRecord]:
    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(payload, list):
        raise DataError(f"{path}: expected a JSON array of detection objects")
    records: list[DetectionRecord] = []
    for index, entry in enumerate(payload):
        where = f"{path}: record {index}"
        if not isinstance(entry, dict):
            raise DataError(f"{where}: expected an object")
        try:
            image = str(entry["image_id"])
            label = int(entry["category_id"])
            score = float(entry["score"])
            bbox = [float(v) for v in entry["bbox"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{where}: {exc}") from exc
        if len(bbox) != 4:
            raise DataError(f"{where}: bbox must have 4 values, got {len(bbox)}")
        if label < 0:
            raise DataError(f"{where}: class label must be non-negative, got {label}")
        if not 0.0 <= score <= 1.0:
            raise DataError(f"{where}: score must be in [0, 1], got {score}")
        w, h = _scale_factors(image, dims, 2, path)
        x, y, bw, bh = bbox
        coords = (x / w, y / h, (x + bw) / w, (y + bh) / h)
        records.append(
            DetectionRecord(
                image=image, label=label, score=score, box=_normalized_box(coords, where)
            )
        )
    return records


def _check_format(fmt: str) -> None:
    if fmt not in FORMATS:
        raise ParameterError(f"unknown format {fmt!r}; expected one of {', '.join(FORMATS)}")


def load_detections(
    path: str, fmt: str = "csv", dims: ImageDims | None = None
) -> dict[str, list[DetectionRecord]]:
    """Load one model's prediction file, grouped by image id.

    Pixel formats are converted to normalized corners using ``dims``;
    the plain csv format needs no dimensions.  Rows missing a score are
    rejected here (use :func:`load_ground_truth` for annotation files).
    """
    _check_format(fmt)
    if fmt == "coco":
        records = _load_coco(path, dims)
    else:
        records = _load_csv(path, fmt == "csv-pixel", dims)
    grouped: dict[str, list[DetectionRecord]] = {}
    for rec in records:
        if rec.score is None:
            raise DataError(f"{path}: prediction rows must carry a score column")
        grouped.setdefault(rec.image, []).append(rec)
    return grouped


def load_ground_truth(
    path: str, fmt: str = "csv", dims: ImageDims | None = None
) -> list[GroundTruthBox]:
    """Load annotation boxes from a CSV file (score column optional, ignored)."""
    _check_format(fmt)
    if fmt == "coco":
        raise ParameterError("ground truth must be a CSV file (coco is prediction-only)")
    records = _load_csv(path, fmt == "csv-pixel", dims)
    return [
        GroundTruthBox(geometry=box_from_corners(rec.box), label=rec.label, image=rec.image)
        for rec in records
    ]


def records_to_boxes(records: Sequence[DetectionRecord], model: int = 0) -> list[ScoredBox]:
    """Turn parsed records into scored boxes tagged with a model index."""
    boxes = []
    for rec in records:
        if rec.score is None:
            raise DataError(f"record for image {rec.image!r} has no score")
        boxes.append(
            ScoredBox(
                geometry=box_from_corners(rec.box),
                label=rec.label,
                score=rec.score,
                model=model,
            )
        )
    return boxes


def assemble(
    model_groups: Sequence[Mapping[str, Sequence[DetectionRecord]]],
    weights: Sequence[float] | None = None,
) -> dict[str, PredictionSet]:
    """Merge N models' per-image groups into per-image prediction sets.

    Every image present in any file appears; models missing an image
    contribute an empty list for it, while their weight still counts
    toward the rescaling denominator.
    """
    n = len(model_groups)
    if weights is None:
        weights = [1.0] * n
    if len(weights) != n:
        raise ParameterError(f"{len(weights)} weights for {n} prediction files")
    images = sorted({img for group in model_groups for img in group})
    out: dict[str, PredictionSet] = {}
    for image in images:
        per_model = [
            records_to_boxes(group.get(image, ()), model=i)
            for i, group in enumerate(model_groups)
        ]
        out[image] = PredictionSet(boxes_per_model=per_model, model_weights=list(weights))
    return out


def _format_float(v: float) -> str:
    return repr(float(v))


def save_detections(
    predictions: Mapping[str, Sequence[ScoredBox]],
    path: str,
    fmt: str = "csv",
    dims: ImageDims | None = None,
) -> None:
    """Write detections with deterministic ordering (image id, score desc)."""
    _check_format(fmt)
    ordered: list[tuple[str, ScoredBox]] = []
    for image in sorted(predictions):
        boxes = sorted(
            predictions[image], key=lambda b: -b.score
        )  # stable: input order breaks ties
        ordered.extend((image, b) for b in boxes)
    try:
        if fmt == "coco":
            _save_coco(ordered, path, dims)
        else:
            _save_csv(ordered, path, fmt == "csv-pixel", dims)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


def _save_csv(
    ordered: Sequence[tuple[str, ScoredBox]], path: str, pixels: bool, dims: ImageDims | None
) -> None:
    axes = 2
    if ordered:
        axes = len(ordered[0][1].geometry.corners()) // 2
    header = ["image", "label", "score", "x1", "y1", "x2", "y2"]
    if axes == 3:
        header += ["z1", "z2"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for image, box in ordered:
            corners = box.geometry.corners()
            if len(corners) // 2 != axes:
                raise DataError(f"cannot mix 2D and 3D boxes in {path}")
            if pixels:
                scale = _scale_factors(image, dims, axes, path)
                corners = tuple(c * scale[i % axes] for i, c in enumerate(corners))
            row = [image, box.label, _format_float(box.score)]
            row += [_format_float(c) for c in _file_order(corners, axes)]
            writer.writerow(row)


def _save_coco(
    ordered: Sequence[tuple[str, ScoredBox]], path: str, dims: ImageDims | None
) -> None:
    entries = []
    for image, box in ordered:
        corners = box.geometry.corners()
        if len(corners) != 4:
            raise DataError("coco output supports 2D boxes only")
        w, h = _scale_factors(image, dims, 2, path)
        x1, y1, x2, y2 = corners
        entries.append(
            {
                "image_id": int(image) if image.isdigit() else image,
                "category_id": box.label,
                "bbox": [x1 * w, y1 * h, (x2 - x1) * w, (y2 - y1) * h],
                "score": box.score,
            }
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(entries, fh, indent=2)
        fh.write("\n")
