"""Ladder predictors built on the two learners.

The classifier maps (content features, log2 rate) to a resolution index;
the regressor predicts each cross-over log2 rate with its own GP.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import BadBoundaryIndex, DegenerateLabels, ModelFormatError, ValidationError
from ..rq_core import (
    DEFAULT_GRID,
    BitrateGrid,
    BitrateLadder,
    ResolutionSet,
    ladder_from_indices,
    ladder_indices,
)
from ..video_features import FEATURE_NAMES, FeatureVector
from .gbt import GbtHyper, GradientBoostedClassifier
from .gp import GaussianProcess, GpHyper

MODEL_VERSION = 1
N_FEATURES = len(FEATURE_NAMES)


@dataclass(frozen=True)
class TrainingSample:
    features: FeatureVector
    gt_ladder: BitrateLadder
    chunk_id: str = ""


def _check_samples(samples: Sequence[TrainingSample]) -> ResolutionSet:
    if not samples:
        raise ValidationError("no training samples")
    resolutions = samples[0].gt_ladder.resolutions
    if any(s.gt_ladder.resolutions != resolutions for s in samples):
        raise ValidationError("all training ladders must share one resolution set")
    return resolutions


def _mask_array(mask) -> np.ndarray:
    m = np.ones(N_FEATURES, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if m.shape != (N_FEATURES,) or not m.any():
        raise ValidationError(f"feature mask must have {N_FEATURES} entries with at least one set")
    return m


def feature_matrix(samples: Sequence[TrainingSample]) -> np.ndarray:
    return np.vstack([s.features.to_array() for s in samples])


# ------------------------------------------------------------------ classifier


@dataclass
class ClassifierModel:
    booster: GradientBoostedClassifier
    feature_mask: np.ndarray
    resolutions: ResolutionSet
    hyper: GbtHyper

    @property
    def class_count(self) -> int:
        return self.booster.n_classes

    @property
    def rate_column(self) -> int:
        return N_FEATURES


def expand_samples(samples: Sequence[TrainingSample], grid: BitrateGrid) -> tuple[np.ndarray, np.ndarray]:
    """One row per (sample, grid rate): features + log2 rate, label = GT index - 1."""
    rates = grid.rates
    F = feature_matrix(samples)
    X = np.hstack([np.repeat(F, rates.size, axis=0), np.tile(rates, len(samples))[:, None]])
    y = np.concatenate([ladder_indices(s.gt_ladder, rates) - 1 for s in samples])
    return X, y


def train_classifier(
    samples: Sequence[TrainingSample],
    grid: BitrateGrid = DEFAULT_GRID,
    hyper: GbtHyper = GbtHyper(),
    feature_mask=None,
) -> ClassifierModel:
    resolutions = _check_samples(samples)
    mask = _mask_array(feature_mask)
    X, y = expand_samples(samples, grid)
    if np.unique(y).size < 2:
        raise DegenerateLabels(f"every training label is resolution {int(y[0]) + 1}; need at least two classes")
    columns = np.append(np.flatnonzero(mask), N_FEATURES)
    booster = GradientBoostedClassifier.fit(X, y, len(resolutions), hyper, columns=columns)
    return ClassifierModel(booster, mask, resolutions, hyper)


def _classifier_inputs(features: FeatureVector, rates) -> np.ndarray:
    rates = np.atleast_1d(np.asarray(rates, dtype=float))
    return np.hstack([np.tile(features.to_array(), (rates.size, 1)), rates[:, None]])


def predict_classes(model: ClassifierModel, features: FeatureVector, rates) -> np.ndarray:
    return model.booster.predict(_classifier_inputs(features, rates)) + 1


def predict_class(model: ClassifierModel, features: FeatureVector, log2_rate: float) -> int:
    return int(predict_classes(model, features, [log2_rate])[0])


def classifier_ladder(model: ClassifierModel, features: FeatureVector, grid: BitrateGrid = DEFAULT_GRID) -> BitrateLadder:
    rates = grid.rates
    return ladder_from_indices(predict_classes(model, features, rates), rates, model.resolutions)


# ------------------------------------------------------------------- regressor


@dataclass
class RegressorModel:
    gps: list[GaussianProcess]
    feature_mask: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    resolutions: ResolutionSet
    rate_bounds: tuple[float, float]

    def standardize(self, F: np.ndarray) -> np.ndarray:
        return ((np.atleast_2d(F) - self.mean) / self.std)[:, self.feature_mask]


def fit_standardization(F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = F.mean(axis=0)
    std = F.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    return mean, std


def train_regressor(
    samples: Sequence[TrainingSample],
    hyper: GpHyper = GpHyper(),
    feature_mask=None,
    grid: BitrateGrid = DEFAULT_GRID,
) -> RegressorModel:
    resolutions = _check_samples(samples)
    if len(samples) < 3:
        raise ValidationError("the regressor needs at least three samples")
    mask = _mask_array(feature_mask)
    F = feature_matrix(samples)
    mean, std = fit_standardization(F)
    model = RegressorModel([], mask, mean, std, resolutions, (grid.min_log2, grid.max_log2))
    Xs = model.standardize(F)
    targets = np.array([s.gt_ladder.crossover_log2_rates for s in samples])
    model.gps = [GaussianProcess.fit(Xs, targets[:, b], hyper) for b in range(len(resolutions) - 1)]
    return model


def predict_crossover(model: RegressorModel, features: FeatureVector, boundary_index: int) -> float:
    """GP posterior mean of cross-over ``boundary_index`` (1-based)."""
    if not 1 <= boundary_index <= len(model.gps):
        raise BadBoundaryIndex(f"boundary index must be in 1..{len(model.gps)}, got {boundary_index}")
    x = model.standardize(features.to_array())
    return float(model.gps[boundary_index - 1].predict(x)[0])


def repair_crossovers(values: Sequence[float], lo: float, hi: float) -> tuple[float, ...]:
    """Clamp into [lo, hi] and sort."""
    return tuple(sorted(float(min(max(v, lo), hi)) for v in values))


def regressor_ladder(model: RegressorModel, features: FeatureVector, grid: BitrateGrid | None = None) -> BitrateLadder:
    lo, hi = (grid.min_log2, grid.max_log2) if grid is not None else model.rate_bounds
    raw = [predict_crossover(model, features, b) for b in range(1, len(model.gps) + 1)]
    return BitrateLadder(model.resolutions, repair_crossovers(raw, lo, hi))


# ------------------------------------------------------------------------- RFE


def _gbt_importance(samples, mask, grid, gbt_hyper, seed) -> np.ndarray:
    model = train_classifier(samples, grid, gbt_hyper, mask)
    return model.booster.split_gain[:N_FEATURES]


def _gp_importance(samples, mask, grid, gp_hyper, seed) -> np.ndarray:
    model = train_regressor(samples, gp_hyper, mask, grid)
    F = feature_matrix(samples)
    targets = np.array([s.gt_ladder.crossover_log2_rates for s in samples])
    Xs = model.standardize(F)

    def error(X):
        pred = np.column_stack([gp.predict(X) for gp in model.gps])
        return float(np.mean((pred - targets) ** 2))

    base = error(Xs)
    rng = np.random.default_rng(seed)
    out = np.zeros(N_FEATURES)
    for col, feat in enumerate(np.flatnonzero(mask)):
        Xp = Xs.copy()
        Xp[:, col] = Xp[rng.permutation(Xp.shape[0]), col]
        out[feat] = error(Xp) - base
    return out


def rfe_select(
    samples: Sequence[TrainingSample],
    learner_kind: str,
    target_k: int,
    grid: BitrateGrid = DEFAULT_GRID,
    gbt_hyper: GbtHyper = GbtHyper(),
    gp_hyper: GpHyper = GpHyper(),
    seed: int = 0,
) -> np.ndarray:
    """Backward elimination: retrain, score, drop the weakest feature.

    Scores are total split gain for ``"classifier"`` and the permutation
    error increase for ``"regressor"``.  On equal scores the later feature
    goes first.
    """
    if not 1 <= target_k <= N_FEATURES:
        raise ValidationError(f"target_k must be in 1..{N_FEATURES}")
    if learner_kind == "classifier":
        score = lambda m: _gbt_importance(samples, m, grid, gbt_hyper, seed)  # noqa: E731
    elif learner_kind == "regressor":
        score = lambda m: _gp_importance(samples, m, grid, gp_hyper, seed)  # noqa: E731
    else:
        raise ValidationError(f"unknown learner kind {learner_kind!r}")

    mask = np.ones(N_FEATURES, dtype=bool)
    while mask.sum() > target_k:
        imp = score(mask)
        active = np.flatnonzero(mask)
        # lexsort: primary key importance ascending, then index descending
        order = np.lexsort((-active, imp[active]))
        mask[active[order[0]]] = False
    return mask


# ----------------------------------------------------------------- persistence


def _envelope(kind: str, mask: np.ndarray, standardization, payload: dict) -> dict:
    return {
        "version": MODEL_VERSION,
        "kind": kind,
        "feature_names": list(FEATURE_NAMES),
        "feature_mask": [bool(v) for v in mask],
        "standardization": standardization,
        "payload": payload,
    }


def model_to_dict(model: ClassifierModel | RegressorModel) -> dict:
    if isinstance(model, ClassifierModel):
        payload = {
            "resolutions": model.resolutions.to_list(),
            "hyper": model.hyper.to_dict(),
            "booster": model.booster.to_dict(),
        }
        return _envelope("classifier", model.feature_mask, None, payload)
    payload = {
        "resolutions": model.resolutions.to_list(),
        "rate_bounds": list(model.rate_bounds),
        "gps": [gp.to_dict() for gp in model.gps],
    }
    std = {"mean": model.mean.tolist(), "std": model.std.tolist()}
    return _envelope("regressor", model.feature_mask, std, payload)


def model_from_dict(data: dict) -> ClassifierModel | RegressorModel:
    if data.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {data.get('version')!r} (expected {MODEL_VERSION})")
    try:
        mask = _mask_array(data["feature_mask"])
        p = data["payload"]
        resolutions = ResolutionSet.from_list(p["resolutions"])
        if data["kind"] == "classifier":
            return ClassifierModel(
                GradientBoostedClassifier.from_dict(p["booster"]),
                mask,
                resolutions,
                GbtHyper(**p["hyper"]),
            )
        if data["kind"] == "regressor":
            st = data["standardization"]
            return RegressorModel(
                [GaussianProcess.from_dict(g) for g in p["gps"]],
                mask,
                np.asarray(st["mean"], dtype=float),
                np.asarray(st["std"], dtype=float),
                resolutions,
                tuple(p["rate_bounds"]),
            )
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"malformed model file: {exc}") from None
    raise ModelFormatError(f"unknown model kind {data.get('kind')!r}")


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), sort_keys=True) + "\n")


def load_model(path) -> ClassifierModel | RegressorModel:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: invalid JSON ({exc})") from None
    return model_from_dict(data)
