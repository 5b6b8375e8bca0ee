from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest
from scipy.interpolate import PchipInterpolator

from ensemble_ladder.ensemble import SyntheticParams, synthetic_quality
from ensemble_ladder.rq_core import DEFAULT_GRID, RateQualitySurface, ResolutionSet, build_curve

DATA = Path(__file__).parent / "data"


def random_params(rng: np.random.Generator, n_res: int = 4) -> SyntheticParams:
    ceilings = np.sort(rng.uniform(34, 52, n_res))
    ceilings += np.arange(n_res) * 0.5  # keep them strictly increasing
    steep = rng.uniform(0.4, 1.4, n_res)
    onsets = np.cumsum(rng.uniform(0.5, 2.0, n_res)) + rng.uniform(3.0, 5.0)
    return SyntheticParams(tuple(ceilings), tuple(steep), tuple(onsets))


def random_surface(
    rng: np.random.Generator,
    grid=DEFAULT_GRID,
    resolutions: ResolutionSet | None = None,
    anchored: bool = False,
    chunk_id: str = "rand",
) -> RateQualitySurface:
    """Random saturating curves sampled at irregular rates.

    Larger resolutions start sampling at the same rate or later, like an
    encode sweep that skips hopeless low rates for big frames.  With
    ``anchored`` every curve is sampled from the grid minimum.
    """
    resolutions = resolutions or ResolutionSet.default()
    params = random_params(rng, len(resolutions))
    starts = np.sort(rng.uniform(grid.min_log2, grid.min_log2 + 3, len(resolutions)))
    curves = []
    for res, start in zip(resolutions, starts):
        n = int(rng.integers(5, 12))
        lo = grid.min_log2 if anchored else start
        rates = np.sort(rng.uniform(lo, grid.max_log2, n))
        rates[0] = lo
        q = synthetic_quality(params, res.index, rates) + rng.uniform(0, 0.01, n).cumsum()
        curves.append(build_curve(res, zip(rates, q)))
    return RateQualitySurface(resolutions, tuple(curves), chunk_id)


def brute_force_quality(curve, rates) -> np.ndarray:
    """Reference curve evaluation: scipy PCHIP, held flat past the sample range."""
    x = np.array([p.log2_rate for p in curve.points])
    y = np.array([p.quality for p in curve.points])
    f = PchipInterpolator(x, y, extrapolate=False)
    out = []
    for r in np.atleast_1d(rates):
        if r <= x[0]:
            out.append(y[0])
        elif r >= x[-1]:
            out.append(y[-1])
        else:
            out.append(float(f(r)))
    return np.array(out)


def brute_force_hull(surface, rates) -> tuple[np.ndarray, np.ndarray]:
    """Loop-based hull with the same eligibility rule as the library."""
    starts = [c.min_log2_rate for c in surface.curves]
    qs = [brute_force_quality(c, rates) for c in surface.curves]
    best_q, best_i = [], []
    for k, r in enumerate(np.atleast_1d(rates)):
        cand = [i for i, s in enumerate(starts) if r >= s]
        if not cand:
            cand = [int(np.argmin(starts))]
        top = cand[0]
        for i in cand[1:]:
            if qs[i][k] > qs[top][k]:
                top = i
        best_q.append(qs[top][k])
        best_i.append(top + 1)
    return np.array(best_q), np.array(best_i)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_REPORT: list[str] = []


@pytest.fixture
def report_line():
    """Collect a line for the end-of-run summary (and echo it to stderr)."""

    def emit(text: str) -> None:
        _REPORT.append(text)
        sys.__stderr__.write(text + "\n")

    return emit


def pytest_terminal_summary(terminalreporter):
    if _REPORT:
        terminalreporter.section("acceptance criteria")
        for line in _REPORT:
            terminalreporter.write_line(line)
