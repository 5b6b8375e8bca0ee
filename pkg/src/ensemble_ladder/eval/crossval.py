"""K-fold evaluation of the four ladder predictors plus the static ladder."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..ensemble import AggregatorConfig, TableBackend, aggregate
from ..errors import DatasetTooSmall
from ..learners import (
    GbtHyper,
    GpHyper,
    TrainingSample,
    classifier_ladder,
    regressor_ladder,
    rfe_select,
    train_classifier,
    train_regressor,
)
from ..rq_core import DEFAULT_GRID, BitrateGrid, average_ladder
from ..video_features import FEATURE_NAMES
from .metrics import bd_br, ladder_accuracy, ladder_rq_points

log = logging.getLogger(__name__)

METHODS = ("classifier", "regressor", "ensemble_fast", "ensemble_full")
BASELINES = ("static",)
METRICS = ("accuracy", "bdbr_vs_gt", "bdbr_vs_static", "encodes", "disagreements")


@dataclass(frozen=True)
class CvConfig:
    grid: BitrateGrid = DEFAULT_GRID
    gbt: GbtHyper = GbtHyper()
    gp: GpHyper = field(default_factory=GpHyper)
    # None keeps every feature
    rfe_keep_classifier: int | None = 6
    rfe_keep_regressor: int | None = 6
    workers: int = 1


@dataclass
class CvReport:
    folds: int
    seed: int
    assignments: list[int]
    chunk_ids: list[str]
    fold_metrics: list[dict[str, dict[str, float]]]
    sequence_rows: list[dict]
    masks: list[dict[str, list[str]]]

    def mean(self, method: str, metric: str) -> float:
        return float(np.mean([f[method][metric] for f in self.fold_metrics]))

    def fold_values(self, method: str, metric: str) -> np.ndarray:
        return np.array([f[method][metric] for f in self.fold_metrics])

    def std_error(self, method: str, metric: str) -> float:
        v = self.fold_values(method, metric)
        return float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0

    @property
    def averages(self) -> dict[str, dict[str, float]]:
        methods = self.fold_metrics[0].keys() if self.fold_metrics else ()
        return {m: {k: self.mean(m, k) for k in METRICS} for m in methods}

    def to_dict(self) -> dict:
        return {
            "folds": self.folds,
            "seed": self.seed,
            "assignments": dict(zip(self.chunk_ids, self.assignments)),
            "per_fold": self.fold_metrics,
            "averages": self.averages,
            "feature_masks": self.masks,
        }

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "cv_report.json").write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        with open(out / "cv_report.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["fold", "method", "accuracy", "bdbr_vs_gt", "bdbr_vs_static", "encodes"])
            for k, fm in enumerate(self.fold_metrics):
                for method, vals in fm.items():
                    w.writerow([k, method, *(repr(vals[m]) for m in ("accuracy", "bdbr_vs_gt", "bdbr_vs_static", "encodes"))])
            for method, vals in self.averages.items():
                w.writerow(["mean", method, *(repr(vals[m]) for m in ("accuracy", "bdbr_vs_gt", "bdbr_vs_static", "encodes"))])
        with open(out / "per_sequence_bdbr.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            cols = ["fold", "chunk_id", "method", "accuracy", "bdbr_vs_gt", "bdbr_vs_static", "encodes"]
            w.writerow(cols)
            for row in self.sequence_rows:
                w.writerow([row[c] for c in cols])


def fold_assignments(n: int, folds: int, seed: int) -> np.ndarray:
    """Seeded partition; fold sizes differ by at most one."""
    if n < folds:
        raise DatasetTooSmall(f"{n} sequences cannot fill {folds} folds")
    perm = np.random.default_rng(seed).permutation(n)
    out = np.empty(n, dtype=int)
    for k, part in enumerate(np.array_split(perm, folds)):
        out[part] = k
    return out


def _mask_names(mask) -> list[str]:
    return [n for n, keep in zip(FEATURE_NAMES, mask) if keep]


def evaluate_fold(dataset: Sequence, train_idx, test_idx, cfg: CvConfig, fold: int, seed: int):
    train = [TrainingSample(dataset[i].features, dataset[i].gt_ladder, dataset[i].chunk_id) for i in train_idx]
    grid = cfg.grid

    mask_cl = None
    if cfg.rfe_keep_classifier is not None:
        mask_cl = rfe_select(train, "classifier", cfg.rfe_keep_classifier, grid, cfg.gbt, cfg.gp, seed)
    mask_rg = None
    if cfg.rfe_keep_regressor is not None:
        mask_rg = rfe_select(train, "regressor", cfg.rfe_keep_regressor, grid, cfg.gbt, cfg.gp, seed)
    model_cl = train_classifier(train, grid, cfg.gbt, mask_cl)
    model_rg = train_regressor(train, cfg.gp, mask_rg, grid)
    static = average_ladder([s.gt_ladder for s in train])

    rows = []
    for i in test_idx:
        seq = dataset[i]
        backend = TableBackend(seq.surface)
        gt_pts = ladder_rq_points(seq.gt_ladder, backend, grid)
        static_pts = ladder_rq_points(static, backend, grid)
        lad_cl = classifier_ladder(model_cl, seq.features, grid)
        lad_rg = regressor_ladder(model_rg, seq.features, grid)
        fast = aggregate(lad_cl, lad_rg, backend, AggregatorConfig(True, grid))
        full = aggregate(lad_cl, lad_rg, backend, AggregatorConfig(False, grid))
        ladders = {
            "classifier": (lad_cl, 0, 0),
            "regressor": (lad_rg, 0, 0),
            "ensemble_fast": (fast.ladder, fast.total_encodes, fast.disagreements),
            "ensemble_full": (full.ladder, full.total_encodes, full.disagreements),
            "static": (static, 0, 0),
        }
        for method, (ladder, encodes, disagreements) in ladders.items():
            pts = ladder_rq_points(ladder, backend, grid)
            rows.append(
                {
                    "fold": fold,
                    "chunk_id": seq.chunk_id,
                    "method": method,
                    "accuracy": ladder_accuracy(ladder, seq.gt_ladder, grid),
                    "bdbr_vs_gt": bd_br(gt_pts, pts).percent,
                    "bdbr_vs_static": bd_br(static_pts, pts).percent,
                    "encodes": encodes,
                    "disagreements": disagreements,
                }
            )
    metrics = {}
    for method in METHODS + BASELINES:
        mine = [r for r in rows if r["method"] == method]
        metrics[method] = {m: float(np.mean([r[m] for r in mine])) for m in METRICS}
    masks = {"classifier": _mask_names(model_cl.feature_mask), "regressor": _mask_names(model_rg.feature_mask)}
    log.info("fold %d: %s", fold, {m: round(v["accuracy"], 3) for m, v in metrics.items()})
    return metrics, rows, masks


def cross_validate(dataset: Sequence, folds: int = 10, seed: int = 0, cfg: CvConfig = CvConfig()) -> CvReport:
    """``dataset`` items need ``chunk_id``, ``features``, ``surface`` and ``gt_ladder``."""
    assign = fold_assignments(len(dataset), folds, seed)
    jobs = []
    for k in range(folds):
        test_idx = np.flatnonzero(assign == k)
        train_idx = np.flatnonzero(assign != k)
        jobs.append((dataset, train_idx, test_idx, cfg, k, seed))

    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(evaluate_fold, *zip(*jobs)))
    else:
        results = [evaluate_fold(*job) for job in jobs]

    return CvReport(
        folds=folds,
        seed=seed,
        assignments=assign.tolist(),
        chunk_ids=[s.chunk_id for s in dataset],
        fold_metrics=[r[0] for r in results],
        sequence_rows=[row for r in results for row in r[1]],
        masks=[r[2] for r in results],
    )
