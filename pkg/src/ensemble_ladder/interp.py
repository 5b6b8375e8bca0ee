"""Monotone piecewise-cubic Hermite interpolation (Fritsch-Butland slopes).

Slopes follow the weighted-harmonic-mean scheme with a one-sided
three-point formula at the ends, so a monotone data set yields a monotone
interpolant with no overshoot.  Evaluation outside the knot range clamps
to the nearest endpoint value.
"""

from __future__ import annotations

import numpy as np


def _slopes(h: np.ndarray, delta: np.ndarray) -> np.ndarray:
    n = delta.size + 1
    d = np.zeros(n)
    if n == 2:
        d[:] = delta[0]
        return d

    # interior knots
    w1 = 2.0 * h[1:] + h[:-1]
    w2 = h[1:] + 2.0 * h[:-1]
    same_sign = (np.sign(delta[1:]) == np.sign(delta[:-1])) & (delta[1:] != 0) & (delta[:-1] != 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = (w1 / delta[:-1] + w2 / delta[1:]) / (w1 + w2)
        d[1:-1] = np.where(same_sign, 1.0 / inv, 0.0)

    d[0] = _edge_slope(h[0], h[1], delta[0], delta[1])
    d[-1] = _edge_slope(h[-1], h[-2], delta[-1], delta[-2])
    return d


def _edge_slope(h0: float, h1: float, m0: float, m1: float) -> float:
    d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1)
    if np.sign(d) != np.sign(m0):
        return 0.0
    if np.sign(m0) != np.sign(m1) and abs(d) > abs(3.0 * m0):
        return 3.0 * m0
    return d


class MonotoneCubic:
    """Piecewise cubic through ``(x, y)``; ``x`` must be strictly increasing."""

    def __init__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise ValueError("need matching 1-D arrays with at least two knots")
        h = np.diff(x)
        if np.any(h <= 0):
            raise ValueError("knots must be strictly increasing")
        delta = np.diff(y) / h
        d = _slopes(h, delta)

        self.x = x
        self.y = y
        self.slopes = d
        # p_k(t) = y_k + d_k t + c2_k t^2 + c3_k t^3, t = x - x_k
        self._c2 = (3.0 * delta - 2.0 * d[:-1] - d[1:]) / h
        self._c3 = (d[:-1] + d[1:] - 2.0 * delta) / h**2
        seg = h * (y[:-1] + h * (d[:-1] / 2 + h * (self._c2 / 3 + h * self._c3 / 4)))
        self._cumulative = np.concatenate(([0.0], np.cumsum(seg)))

    def _segment(self, xq: np.ndarray) -> np.ndarray:
        return np.clip(np.searchsorted(self.x, xq, side="right") - 1, 0, self.x.size - 2)

    def __call__(self, xq):
        xq_arr = np.asarray(xq, dtype=float)
        xc = np.clip(xq_arr, self.x[0], self.x[-1])
        k = self._segment(xc)
        t = xc - self.x[k]
        out = self.y[k] + t * (self.slopes[k] + t * (self._c2[k] + t * self._c3[k]))
        if np.ndim(xq) == 0:
            return float(out)
        return out

    def _antiderivative(self, xq: float) -> float:
        """Integral from x[0] to ``xq`` (clamped to the knot range)."""
        xc = min(max(float(xq), self.x[0]), self.x[-1])
        k = int(self._segment(np.asarray(xc)))
        t = xc - self.x[k]
        part = t * (self.y[k] + t * (self.slopes[k] / 2 + t * (self._c2[k] / 3 + t * self._c3[k] / 4)))
        return float(self._cumulative[k] + part)

    def integral(self, a: float, b: float) -> float:
        """Exact integral of the interpolant over ``[a, b]`` inside the knot range."""
        if not (self.x[0] - 1e-12 <= a <= b <= self.x[-1] + 1e-12):
            raise ValueError("integration bounds must lie inside the knot range")
        return self._antiderivative(b) - self._antiderivative(a)
