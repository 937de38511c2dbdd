"""Axis-aligned boxes in 2D and 3D with exact overlap arithmetic.

Coordinates are stored normalized to [0, 1] as unitless fractions of the
image extent, so boxes coming from models that saw different input
resolutions can be compared directly.  All math is float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class Box2D:
    """Axis-aligned rectangle; (x1, y1) is the min corner, (x2, y2) the max."""

    x1: float
    y1: float
    x2: float
    y2: float

    def corners(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    def area(self) -> float:
        return max(0.0, self.x2 - self.x1) * max(0.0, self.y2 - self.y1)


@dataclass(frozen=True)
class Box3D:
    """Axis-aligned cuboid; min corner (x1, y1, z1), max corner (x2, y2, z2)."""

    x1: float
    y1: float
    z1: float
    x2: float
    y2: float
    z2: float

    def corners(self) -> tuple[float, float, float, float, float, float]:
        # (mins..., maxs...) per axis, matching the 2D layout.
        return (self.x1, self.y1, self.z1, self.x2, self.y2, self.z2)

    def volume(self) -> float:
        return (
            max(0.0, self.x2 - self.x1)
            * max(0.0, self.y2 - self.y1)
            * max(0.0, self.z2 - self.z1)
        )


Box = Union[Box2D, Box3D]


def box_from_corners(values: Sequence[float]) -> Box:
    """Build a Box2D from 4 values or a Box3D from 6, mins first."""
    vals = [float(v) for v in values]
    if len(vals) == 4:
        return Box2D(*vals)
    if len(vals) == 6:
        return Box3D(*vals)
    raise ParameterError(f"expected 4 or 6 corner values, got {len(vals)}")


def _iou_corners(a: Sequence[float], b: Sequence[float], k: int) -> float:
    inter = 1.0
    for ax in range(k):
        side = min(a[ax + k], b[ax + k]) - max(a[ax], b[ax])
        if side <= 0.0:
            inter = 0.0
            break
        inter *= side
    vol_a = 1.0
    vol_b = 1.0
    for ax in range(k):
        vol_a *= max(0.0, a[ax + k] - a[ax])
        vol_b *= max(0.0, b[ax + k] - b[ax])
    union = vol_a + vol_b - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def iou2d(a: Box2D, b: Box2D) -> float:
    """Intersection area over union area; 0.0 when the union is degenerate."""
    return _iou_corners(a.corners(), b.corners(), 2)


def iou3d(a: Box3D, b: Box3D) -> float:
    """Intersection volume over union volume; 0.0 when the union is degenerate."""
    return _iou_corners(a.corners(), b.corners(), 3)


def clip(box: Box) -> Box:
    """Clamp all coordinates to [0, 1], swapping reversed corners first.

    Reversed corners (min > max on an axis) are a common artifact of
    flip-augmentation bookkeeping, so they are repaired rather than
    rejected.  Non-finite coordinates are rejected.
    """
    vals = box.corners()
    if not all(math.isfinite(v) for v in vals):
        raise ParameterError(f"non-finite box coordinates: {vals}")
    k = len(vals) // 2
    lo = [min(max(min(vals[i], vals[i + k]), 0.0), 1.0) for i in range(k)]
    hi = [min(max(max(vals[i], vals[i + k]), 0.0), 1.0) for i in range(k)]
    return type(box)(*lo, *hi)


def coords_array(boxes: Sequence[Box]) -> np.ndarray:
    """Stack box corners into an (n, 2k) float64 array, mins in the left half."""
    if not boxes:
        return np.empty((0, 4), dtype=np.float64)
    return np.array([b.corners() for b in boxes], dtype=np.float64)


def iou_one_to_many(box: np.ndarray, others: np.ndarray) -> np.ndarray:
    """IoU of one corner row (2k,) against every row of ``others`` (m, 2k)."""
    k = box.shape[0] // 2
    lo = np.maximum(box[:k], others[:, :k])
    hi = np.minimum(box[k:], others[:, k:])
    inter = np.clip(hi - lo, 0.0, None).prod(axis=1)
    vol = float(np.clip(box[k:] - box[:k], 0.0, None).prod())
    vols = np.clip(others[:, k:] - others[:, :k], 0.0, None).prod(axis=1)
    union = vol + vols - inter
    safe = np.where(union > 0.0, union, 1.0)
    return np.where(union > 0.0, inter / safe, 0.0)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between corner arrays (n, 2k) and (m, 2k) -> (n, m)."""
    if a.shape[1] != b.shape[1]:
        raise ParameterError(
            f"mixed box dimensionalities: {a.shape[1] // 2}D vs {b.shape[1] // 2}D"
        )
    k = a.shape[1] // 2
    lo = np.maximum(a[:, None, :k], b[None, :, :k])
    hi = np.minimum(a[:, None, k:], b[None, :, k:])
    inter = np.clip(hi - lo, 0.0, None).prod(axis=2)
    va = np.clip(a[:, k:] - a[:, :k], 0.0, None).prod(axis=1)
    vb = np.clip(b[:, k:] - b[:, :k], 0.0, None).prod(axis=1)
    union = va[:, None] + vb[None, :] - inter
    safe = np.where(union > 0.0, union, 1.0)
    return np.where(union > 0.0, inter / safe, 0.0)
