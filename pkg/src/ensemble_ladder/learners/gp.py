"""Gaussian-process regression with an isotropic RBF + white-noise kernel.

Hyperparameters are picked by exhaustive search over a logarithmic grid,
maximising the log marginal likelihood of the (centred, unit-variance)
targets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, LinAlgError

from ..errors import SingularKernel, ValidationError


@dataclass(frozen=True)
class GpKernelParams:
    signal_variance: float
    length_scale: float
    noise_variance: float

    def __post_init__(self):
        if min(self.signal_variance, self.length_scale, self.noise_variance) <= 0:
            raise ValidationError("kernel hyperparameters must be positive")


def _geom(lo, hi, n=8):
    return tuple(float(v) for v in np.geomspace(lo, hi, n))


@dataclass(frozen=True)
class GpHyper:
    length_scales: tuple[float, ...] = field(default_factory=lambda: _geom(0.1, 100.0))
    signal_variances: tuple[float, ...] = field(default_factory=lambda: _geom(0.01, 100.0))
    noise_variances: tuple[float, ...] = field(default_factory=lambda: _geom(1e-6, 1.0))
    jitter: float = 1e-10

    def candidates(self):
        for ell in self.length_scales:
            for sig in self.signal_variances:
                for noise in self.noise_variances:
                    yield GpKernelParams(sig, ell, noise)

    def to_dict(self) -> dict:
        return {
            "length_scales": list(self.length_scales),
            "signal_variances": list(self.signal_variances),
            "noise_variances": list(self.noise_variances),
            "jitter": self.jitter,
        }


def sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d, 0.0)


def rbf(sqd: np.ndarray, params: GpKernelParams) -> np.ndarray:
    return params.signal_variance * np.exp(-0.5 * sqd / params.length_scale**2)


def _factor(K: np.ndarray, jitter: float) -> np.ndarray | None:
    try:
        return cholesky(K + jitter * np.eye(K.shape[0]), lower=True, check_finite=False)
    except LinAlgError:
        return None


def log_marginal_likelihood(X: np.ndarray, y: np.ndarray, params: GpKernelParams, jitter: float = 1e-10) -> float:
    """log p(y | X, params) for a zero-mean GP; -inf when K is not PD."""
    K = rbf(sq_dists(X, X), params) + params.noise_variance * np.eye(X.shape[0])
    L = _factor(K, jitter)
    if L is None:
        return -math.inf
    alpha = cho_solve((L, True), y, check_finite=False)
    return float(-0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * y.size * math.log(2 * math.pi))


class GaussianProcess:
    """Posterior-mean predictor; targets are centred and scaled internally."""

    def __init__(self, X, params: GpKernelParams, alpha, y_offset: float, y_scale: float, lml: float):
        self.X = np.asarray(X, dtype=float)
        self.params = params
        self.alpha = np.asarray(alpha, dtype=float)
        self.y_offset = float(y_offset)
        self.y_scale = float(y_scale)
        self.lml = float(lml)

    @staticmethod
    def normalise_targets(y: np.ndarray) -> tuple[np.ndarray, float, float]:
        offset = float(np.mean(y))
        scale = float(np.std(y))
        if not scale > 1e-12:
            scale = 1.0
        return (y - offset) / scale, offset, scale

    @classmethod
    def fit(cls, X, y, hyper: GpHyper = GpHyper()) -> "GaussianProcess":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or X.shape[0] != y.size:
            raise ValidationError("X must be (n, d) with n targets")
        yn, offset, scale = cls.normalise_targets(y)
        sqd = sq_dists(X, X)
        eye = np.eye(X.shape[0])

        best = None
        for params in hyper.candidates():
            K = rbf(sqd, params) + params.noise_variance * eye
            L = _factor(K, hyper.jitter)
            if L is None:
                continue
            alpha = cho_solve((L, True), yn, check_finite=False)
            lml = float(-0.5 * yn @ alpha - np.log(np.diag(L)).sum() - 0.5 * yn.size * math.log(2 * math.pi))
            # strict '>' keeps the first candidate on exact ties
            if best is None or lml > best[0]:
                best = (lml, params, alpha)
        if best is None:
            raise SingularKernel("kernel matrix is not positive definite for any grid candidate")
        lml, params, alpha = best
        return cls(X, params, alpha, offset, scale, lml)

    def predict(self, Xq) -> np.ndarray:
        Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
        k = rbf(sq_dists(Xq, self.X), self.params)
        return self.y_offset + self.y_scale * (k @ self.alpha)

    def to_dict(self) -> dict:
        return {
            "X": self.X.tolist(),
            "kernel": {
                "signal_variance": self.params.signal_variance,
                "length_scale": self.params.length_scale,
                "noise_variance": self.params.noise_variance,
            },
            "alpha": self.alpha.tolist(),
            "y_offset": self.y_offset,
            "y_scale": self.y_scale,
            "log_marginal_likelihood": self.lml,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianProcess":
        k = d["kernel"]
        return cls(
            d["X"],
            GpKernelParams(float(k["signal_variance"]), float(k["length_scale"]), float(k["noise_variance"])),
            d["alpha"],
            d["y_offset"],
            d["y_scale"],
            d["log_marginal_likelihood"],
        )
