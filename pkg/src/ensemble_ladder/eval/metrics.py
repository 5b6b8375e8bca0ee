"""BD-BR over any number of rate-quality points, and ladder accuracy."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import NoOverlap, NonFinite, TooFewPoints
from ..interp import MonotoneCubic
from ..rq_core import DEFAULT_GRID, BitrateGrid, BitrateLadder, RQPoint, ladder_indices, same_resolutions


@dataclass(frozen=True)
class BdBrResult:
    percent: float
    overlap_low: float
    overlap_high: float


def efficient_points(points: Sequence[Sequence[float]]) -> tuple[np.ndarray, np.ndarray]:
    """Rate-sorted points with strictly increasing quality.

    A point that does not beat every cheaper point's quality is dropped.
    """
    arr = np.array([(float(r), float(q)) for r, q in points], dtype=float).reshape(-1, 2)
    if not np.isfinite(arr).all():
        raise NonFinite("BD-BR input contains non-finite values")
    arr = arr[np.lexsort((-arr[:, 1], arr[:, 0]))]
    keep = []
    best = -math.inf
    for r, q in arr:
        if q > best:
            keep.append((r, q))
            best = q
    if len(keep) < 2:
        raise TooFewPoints("BD-BR needs at least two points with distinct quality")
    out = np.array(keep)
    return out[:, 0], out[:, 1]


def bd_br(reference_points: Sequence[RQPoint], test_points: Sequence[RQPoint]) -> BdBrResult:
    """Average log2-rate gap at equal quality, as a percentage (test vs reference).

    log2 rate is interpolated as a monotone cubic function of quality and the
    gap is integrated exactly over the shared quality range.
    """
    r_ref, q_ref = efficient_points(reference_points)
    r_test, q_test = efficient_points(test_points)
    lo = max(q_ref[0], q_test[0])
    hi = min(q_ref[-1], q_test[-1])
    if not lo < hi:
        raise NoOverlap(f"quality ranges do not overlap ([{q_ref[0]:.3f}, {q_ref[-1]:.3f}] vs [{q_test[0]:.3f}, {q_test[-1]:.3f}])")
    f_ref = MonotoneCubic(q_ref, r_ref)
    f_test = MonotoneCubic(q_test, r_test)
    mean_gap = (f_test.integral(lo, hi) - f_ref.integral(lo, hi)) / (hi - lo)
    return BdBrResult((2.0**mean_gap - 1.0) * 100.0, float(lo), float(hi))


def ladder_rq_points(ladder: BitrateLadder, backend, grid: BitrateGrid = DEFAULT_GRID, chunk_ref=None) -> list[RQPoint]:
    """Encode at every grid rate with the resolution the ladder picks."""
    rates = grid.rates
    idx = ladder_indices(ladder, rates)
    return [RQPoint(float(r), backend.encode(chunk_ref, float(r), int(i))) for r, i in zip(rates, idx)]


def ladder_accuracy(predicted: BitrateLadder, gt: BitrateLadder, grid: BitrateGrid = DEFAULT_GRID) -> float:
    """Fraction of grid rates where both ladders pick the same resolution."""
    same_resolutions(predicted, gt)
    rates = grid.rates
    return float(np.mean(ladder_indices(predicted, rates) == ladder_indices(gt, rates)))
