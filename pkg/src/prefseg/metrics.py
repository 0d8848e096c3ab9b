"""Segmentation quality metrics: Dice, IoU, and 95th-percentile Hausdorff.

Conventions, fixed here because implementations in the wild diverge:
Dice/IoU are 1.0 when both masks are empty; HD95 is undefined (None) when
either mask is empty, and is the inclusive-linear-interpolation 95th
percentile of the pooled directed Euclidean distances between boundary
pixels (a set pixel with a 4-neighbor outside the set, grid edges counting
as outside). Distances are in pixels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .core import Mask, ValidationError

HD95_PERCENTILE = 95.0


@dataclass(frozen=True)
class MetricReport:
    dice: float
    iou: float
    hd95: Optional[float]  # None when undefined (a mask was empty)


def _check_grids(a: Mask, b: Mask) -> None:
    if not a.same_grid(b):
        raise ValidationError(f"mask grids differ: {a.bits.shape} vs {b.bits.shape}")


def dice(a: Mask, b: Mask) -> float:
    """2|A∩B| / (|A|+|B|), with 64-bit integer counts; 1.0 if both empty."""
    _check_grids(a, b)
    inter = int(np.count_nonzero(a.bits & b.bits))
    total = int(np.count_nonzero(a.bits)) + int(np.count_nonzero(b.bits))
    if total == 0:
        return 1.0
    return 2.0 * inter / total


def iou(a: Mask, b: Mask) -> float:
    """|A∩B| / |A∪B|; 1.0 if both empty."""
    _check_grids(a, b)
    inter = int(np.count_nonzero(a.bits & b.bits))
    union = int(np.count_nonzero(a.bits | b.bits))
    if union == 0:
        return 1.0
    return inter / union


def boundary_pixels(bits: np.ndarray) -> np.ndarray:
    """Coordinates (K, 2) of set pixels with a 4-neighbor outside the set.

    Pixels of the set on the grid edge are always boundary.
    """
    m = bits.astype(bool)
    if not m.any():
        return np.empty((0, 2), dtype=np.int64)
    padded = np.pad(m, 1, constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return np.argwhere(m & ~interior).astype(np.int64)


def percentile_inclusive(values: np.ndarray, q: float) -> float:
    """Linear interpolation between closest ranks, h = (n-1) * q/100."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise ValidationError("percentile of empty set")
    h = (v.size - 1) * (q / 100.0)
    lo = int(np.floor(h))
    hi = int(np.ceil(h))
    return float(v[lo] + (h - lo) * (v[hi] - v[lo]))


def hd95(a: Mask, b: Mask) -> Optional[float]:
    """95th percentile of pooled directed boundary distances; None if a mask is empty."""
    _check_grids(a, b)
    if not a.bits.any() or not b.bits.any():
        return None
    ba = boundary_pixels(a.bits).astype(np.float64)
    bb = boundary_pixels(b.bits).astype(np.float64)
    d_ab, _ = cKDTree(bb).query(ba, k=1)
    d_ba, _ = cKDTree(ba).query(bb, k=1)
    pooled = np.concatenate([np.atleast_1d(d_ab), np.atleast_1d(d_ba)])
    return percentile_inclusive(pooled, HD95_PERCENTILE)


def report(a: Mask, b: Mask) -> MetricReport:
    return MetricReport(dice=dice(a, b), iou=iou(a, b), hd95=hd95(a, b))
