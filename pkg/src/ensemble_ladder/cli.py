"""Command-line entry point: one binary, one subcommand per pipeline stage.

Exit codes: 0 success, 2 input or validation error, 3 encoder backend error.
Data goes to stdout or the named output files; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import AppConfig, dump_config, load_config, with_overrides
from .ensemble import (
    AggregationError,
    AggregatorConfig,
    ExternalBackend,
    SyntheticBackend,
    SyntheticParams,
    TableBackend,
    aggregate,
)
from .errors import LadderError, ValidationError
from .learners import (
    TrainingSample,
    classifier_ladder,
    load_model,
    regressor_ladder,
    rfe_select,
    save_model,
    train_classifier,
    train_regressor,
)
from .learners.models import ClassifierModel, RegressorModel
from .rq_core import (
    RQPoint,
    cross_over_bitrates,
    read_ladder_json,
    read_rq_csv,
    same_resolutions,
    surface_from_points,
    write_ladder_json,
)
from .video_features import FEATURE_NAMES, chunk_features, read_feature_csv, read_video, write_feature_csv

log = logging.getLogger("ensemble_ladder")

VIDEO_SUFFIXES = (".y4m", ".yuv")


def _fail(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def resolve_config(args) -> AppConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else AppConfig()
    return with_overrides(
        cfg,
        seed=getattr(args, "seed", None),
        fast=True if getattr(args, "fast", False) else None,
        workers=getattr(args, "workers", None),
        encoder_template=getattr(args, "encoder_template", None),
        cache_dir=getattr(args, "cache_dir", None),
        grid_min_bps=getattr(args, "min_bps", None),
        grid_max_bps=getattr(args, "max_bps", None),
        grid_points=getattr(args, "grid_points", None),
    )


# ------------------------------------------------------------ extract-features


def _video_inputs(paths) -> list[Path]:
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            out += sorted(f for f in p.iterdir() if f.suffix.lower() in VIDEO_SUFFIXES)
        else:
            out.append(p)
    return out


def _geometry(path: Path, args) -> tuple:
    sidecar = path.with_suffix(".json")
    if path.suffix.lower() != ".y4m" and sidecar.exists():
        meta = json.loads(sidecar.read_text())
        return meta.get("width"), meta.get("height"), meta.get("fps")
    return args.width, args.height, args.fps


def cmd_extract_features(args) -> int:
    cfg = resolve_config(args)
    paths = _video_inputs(args.inputs)
    if not paths:
        _fail("no video inputs found")
        return 2

    def one(path: Path):
        try:
            chunk = read_video(path, *_geometry(path, args))
            return path.stem, chunk_features(chunk, cfg.glcm), None
        except (LadderError, OSError, ValueError) as exc:
            return path.stem, None, f"{path}: {exc}"

    with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as pool:
        results = list(pool.map(one, paths))

    failures = [err for _, _, err in results if err]
    for err in failures:
        _fail(err)
    if failures and not args.keep_going:
        return 2
    rows = [(cid, fv) for cid, fv, err in results if not err]
    if args.output:
        with open(args.output, "w", newline="") as fh:
            write_feature_csv(fh, rows)
    else:
        write_feature_csv(sys.stdout, rows)
    return 2 if failures else 0


# -------------------------------------------------------------------- build-gt


def cmd_build_gt(args) -> int:
    cfg = resolve_config(args)
    resolutions = cfg.resolution_set()
    grid = cfg.bitrate_grid()
    data = read_rq_csv(args.rq_csv)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    failures = 0
    for chunk_id in sorted(data):
        try:
            surface = surface_from_points(chunk_id, data[chunk_id], resolutions)
            ladder = cross_over_bitrates(surface, grid)
        except LadderError as exc:
            _fail(str(exc))
            failures += 1
            continue
        write_ladder_json(out / f"{chunk_id}.json", ladder)
        print(chunk_id, " ".join(f"{c:.4f}" for c in ladder.crossover_log2_rates))
    return 2 if failures else 0


# ----------------------------------------------------------------------- train


def _training_samples(features_csv, ladder_dir) -> list[TrainingSample]:
    features = read_feature_csv(features_csv)
    samples, missing = [], []
    for chunk_id in sorted(features):
        path = Path(ladder_dir) / f"{chunk_id}.json"
        if not path.exists():
            missing.append(chunk_id)
            continue
        samples.append(TrainingSample(features[chunk_id], read_ladder_json(path), chunk_id))
    if missing:
        log.warning("no GT ladder for %d chunk(s): %s", len(missing), ", ".join(missing))
    if not samples:
        raise ValidationError("no chunk has both features and a GT ladder")
    return samples


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    grid = cfg.bitrate_grid()
    samples = _training_samples(args.features, args.ladders)
    gbt = cfg.gbt if args.seed is None else dataclasses.replace(cfg.gbt, seed=cfg.seed)

    mask_cl = mask_rg = None
    if args.rfe_keep_classifier is not None:
        mask_cl = rfe_select(samples, "classifier", args.rfe_keep_classifier, grid, gbt, cfg.gp, cfg.seed)
    if args.rfe_keep_regressor is not None:
        mask_rg = rfe_select(samples, "regressor", args.rfe_keep_regressor, grid, gbt, cfg.gp, cfg.seed)
    model_cl = train_classifier(samples, grid, gbt, mask_cl)
    model_rg = train_regressor(samples, cfg.gp, mask_rg, grid)

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    save_model(model_cl, out / "classifier.json")
    save_model(model_rg, out / "regressor.json")
    masks = {
        "classifier": [n for n, k in zip(FEATURE_NAMES, model_cl.feature_mask) if k],
        "regressor": [n for n, k in zip(FEATURE_NAMES, model_rg.feature_mask) if k],
    }
    _write_json(out / "rfe_mask.json", masks)

    from .eval.metrics import ladder_accuracy

    train_acc = np.mean([ladder_accuracy(classifier_ladder(model_cl, s.features, grid), s.gt_ladder, grid) for s in samples])
    print(f"samples: {len(samples)}")
    print(f"classifier features: {', '.join(masks['classifier'])}")
    print(f"regressor features: {', '.join(masks['regressor'])}")
    print(f"classifier training accuracy: {train_acc:.3f}")
    for b, gp in enumerate(model_rg.gps, start=1):
        p = gp.params
        print(f"gp boundary {b}: length={p.length_scale:.4g} signal={p.signal_variance:.4g} noise={p.noise_variance:.4g} lml={gp.lml:.3f}")
    return 0


# --------------------------------------------------------------------- predict


def cmd_predict(args) -> int:
    cfg = resolve_config(args)
    grid = cfg.bitrate_grid()
    model_dir = Path(args.models)
    model_cl = load_model(model_dir / "classifier.json")
    model_rg = load_model(model_dir / "regressor.json")
    if not isinstance(model_cl, ClassifierModel) or not isinstance(model_rg, RegressorModel):
        raise ValidationError("model directory must hold a classifier.json and a regressor.json of matching kinds")
    features = read_feature_csv(args.features)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for chunk_id in sorted(features):
        fv = features[chunk_id]
        lad_cl = classifier_ladder(model_cl, fv, grid)
        lad_rg = regressor_ladder(model_rg, fv, grid)
        write_ladder_json(out / f"{chunk_id}.classifier.json", lad_cl)
        write_ladder_json(out / f"{chunk_id}.regressor.json", lad_rg)
        print(chunk_id, "classifier", " ".join(f"{c:.4f}" for c in lad_cl.crossover_log2_rates))
        print(chunk_id, "regressor", " ".join(f"{c:.4f}" for c in lad_rg.crossover_log2_rates))
    return 0


# ------------------------------------------------------------------- aggregate


def _make_backend(args, cfg: AppConfig, resolutions):
    if args.backend == "table":
        if not args.rq_csv:
            raise ValidationError("--backend table needs --rq-csv")
        data = read_rq_csv(args.rq_csv)
        chunk = args.chunk or (next(iter(data)) if len(data) == 1 else None)
        if chunk is None or chunk not in data:
            raise ValidationError(f"--chunk must name one of: {', '.join(sorted(data))}")
        return TableBackend(surface_from_points(chunk, data[chunk], resolutions)), None
    if args.backend == "synthetic":
        params = SyntheticParams.default()
        if args.synthetic_params:
            params = SyntheticParams.from_dict(json.loads(Path(args.synthetic_params).read_text()))
        return SyntheticBackend(params, resolutions), None
    if not cfg.encoder_template:
        raise ValidationError("--backend external needs --encoder-template (or encoder_template in the config)")
    if not args.source:
        raise ValidationError("--backend external needs --source")
    source = read_video(args.source, args.width, args.height, args.fps)
    workdir = Path(args.workdir or "encodes")
    backend = ExternalBackend(
        cfg.encoder_template,
        workdir,
        (source.width, source.height),
        resolutions,
        cache_dir=cfg.cache_dir,
    )
    return backend, source


def cmd_aggregate(args) -> int:
    cfg = resolve_config(args)
    lad_cl = read_ladder_json(args.ladder_cl)
    lad_rg = read_ladder_json(args.ladder_rg)
    same_resolutions(lad_cl, lad_rg)
    backend, chunk_ref = _make_backend(args, cfg, lad_cl.resolutions)
    agg_cfg = AggregatorConfig(cfg.fast, cfg.bitrate_grid())
    try:
        report = aggregate(lad_cl, lad_rg, backend, agg_cfg, chunk_ref=chunk_ref, workers=cfg.workers)
    except AggregationError as exc:
        if args.report:
            _write_json(args.report, exc.report.to_dict())
        raise exc.cause from None
    write_ladder_json(args.output, report.ladder)
    if args.report:
        _write_json(args.report, report.to_dict())
    print(f"mode: {'fast' if cfg.fast else 'full'}")
    print(f"disagreements: {report.disagreements}")
    print(f"encodes: {report.total_encodes}")
    print("cross-overs:", " ".join(f"{c:.4f}" for c in report.ladder.crossover_log2_rates))
    return 0


# ------------------------------------------------------------------------ bdbr


def read_rq_points(path) -> list[RQPoint]:
    """``bitrate_bps`` and ``quality_db`` columns; any others are ignored."""
    pts = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"bitrate_bps", "quality_db"} - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(f"{path}: missing columns {sorted(missing)}")
        for line, row in enumerate(reader, start=2):
            try:
                bps, q = float(row["bitrate_bps"]), float(row["quality_db"])
            except ValueError as exc:
                raise ValidationError(f"{path}:{line}: {exc}") from None
            if not bps > 0:
                raise ValidationError(f"{path}:{line}: bitrate must be positive")
            pts.append(RQPoint(math.log2(bps), q))
    return pts


def cmd_bdbr(args) -> int:
    from .eval.metrics import bd_br

    result = bd_br(read_rq_points(args.ref_csv), read_rq_points(args.test_csv))
    print(f"{result.percent:.2f}")
    return 0


# -------------------------------------------------------------------- crossval


def _dataset_from_dir(path: Path, cfg: AppConfig):
    """``features.csv`` plus ``rq.csv`` with every chunk measured at every resolution."""
    from types import SimpleNamespace

    features = read_feature_csv(path / "features.csv")
    data = read_rq_csv(path / "rq.csv")
    resolutions, grid = cfg.resolution_set(), cfg.bitrate_grid()
    out = []
    for chunk_id in sorted(features):
        if chunk_id not in data:
            raise ValidationError(f"chunk {chunk_id!r} has features but no RQ points")
        surface = surface_from_points(chunk_id, data[chunk_id], resolutions)
        out.append(SimpleNamespace(chunk_id=chunk_id, features=features[chunk_id], surface=surface, gt_ladder=cross_over_bitrates(surface, grid)))
    return out


def cmd_crossval(args) -> int:
    from .eval.crossval import METHODS, BASELINES, CvConfig, cross_validate
    from .eval.synthetic import SyntheticDatasetSpec, generate_synthetic_dataset

    cfg = resolve_config(args)
    grid = cfg.bitrate_grid()
    if args.synthetic:
        spec = SyntheticDatasetSpec(sequences=args.sequences, seed=cfg.seed, grid=grid, resolutions=cfg.resolution_set())
        dataset = generate_synthetic_dataset(spec)
    elif args.dataset:
        dataset = _dataset_from_dir(Path(args.dataset), cfg)
    else:
        raise ValidationError("crossval needs --synthetic or --dataset DIR")
    cv_cfg = CvConfig(
        grid=grid,
        gbt=cfg.gbt,
        gp=cfg.gp,
        rfe_keep_classifier=None if args.rfe_keep <= 0 else args.rfe_keep,
        rfe_keep_regressor=None if args.rfe_keep <= 0 else args.rfe_keep,
        workers=cfg.workers,
    )
    report = cross_validate(dataset, args.folds, cfg.seed, cv_cfg)
    report.write(args.output)
    print(f"{'method':<15}{'accuracy':>10}{'bdbr_gt':>10}{'bdbr_st':>10}{'encodes':>10}")
    for m in METHODS + BASELINES:
        print(
            f"{m:<15}{report.mean(m, 'accuracy'):>10.4f}{report.mean(m, 'bdbr_vs_gt'):>10.3f}"
            f"{report.mean(m, 'bdbr_vs_static'):>10.3f}{report.mean(m, 'encodes'):>10.2f}"
        )
    return 0


def cmd_show_config(args) -> int:
    sys.stdout.write(dump_config(resolve_config(args)))
    return 0


# ---------------------------------------------------------------------- parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML or JSON config file; flags override its values")
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--workers", type=int, help="parallel workers (default 1)")
    p.add_argument("--min-bps", type=float, help="lowest grid bitrate in bps (default 64)")
    p.add_argument("--max-bps", type=float, help="highest grid bitrate in bps (default 131072)")
    p.add_argument("--grid-points", type=int, help="number of log-spaced grid points (default 100)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _add_geometry(p: argparse.ArgumentParser) -> None:
    p.add_argument("--width", type=int, help="frame width for raw YUV input")
    p.add_argument("--height", type=int, help="frame height for raw YUV input")
    p.add_argument("--fps", type=float, help="frame rate for raw YUV input (default 25)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ensemble-ladder", description="Per-title bitrate ladder prediction.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract-features", help="compute the nine content features per video chunk")
    p.add_argument("inputs", nargs="+", help="Y4M or raw YUV files, or directories of them")
    p.add_argument("-o", "--output", help="feature CSV path (default stdout)")
    p.add_argument("--keep-going", action="store_true", help="emit rows for readable inputs even if some fail (exit 2)")
    _add_geometry(p)
    _add_common(p)
    p.set_defaults(func=cmd_extract_features)

    p = sub.add_parser("build-gt", help="ground-truth ladder per chunk from an RQ CSV")
    p.add_argument("rq_csv", help="CSV with chunk_id,width,height,bitrate_bps,quality_db")
    p.add_argument("-o", "--output", required=True, help="directory for <chunk_id>.json ladders")
    _add_common(p)
    p.set_defaults(func=cmd_build_gt)

    p = sub.add_parser("train", help="train the classifier and regressor")
    p.add_argument("features", help="feature CSV")
    p.add_argument("ladders", help="directory of GT ladder JSONs named <chunk_id>.json")
    p.add_argument("-o", "--output", required=True, help="model directory")
    p.add_argument("--rfe-keep-classifier", type=int, help="features kept by RFE for the classifier (default all)")
    p.add_argument("--rfe-keep-regressor", type=int, help="features kept by RFE for the regressor (default all)")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="classifier and regressor ladders per chunk")
    p.add_argument("models", help="model directory written by train")
    p.add_argument("features", help="feature CSV")
    p.add_argument("-o", "--output", required=True, help="directory for <chunk_id>.{classifier,regressor}.json")
    _add_common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("aggregate", help="resolve disagreements between two ladders with trial encodes")
    p.add_argument("ladder_cl", help="classifier ladder JSON")
    p.add_argument("ladder_rg", help="regressor ladder JSON")
    p.add_argument("-o", "--output", required=True, help="final ladder JSON")
    p.add_argument("--report", help="aggregation report JSON")
    p.add_argument("--fast", action="store_true", help="encode only the two candidate resolutions (default: all)")
    p.add_argument("--backend", choices=("table", "synthetic", "external"), default="table", help="quality oracle (default table)")
    p.add_argument("--rq-csv", help="table backend: measured RQ CSV")
    p.add_argument("--chunk", help="table backend: chunk id inside --rq-csv")
    p.add_argument("--synthetic-params", help="synthetic backend: JSON with ceilings, steepness, onsets")
    p.add_argument("--encoder-template", help="external backend: shell command with {input} {width} {height} {bitrate_bps} {output}")
    p.add_argument("--source", help="external backend: native-resolution source video")
    p.add_argument("--workdir", help="external backend: scratch directory (default ./encodes)")
    p.add_argument("--cache-dir", help="external backend: result cache directory (default <workdir>/cache)")
    _add_geometry(p)
    _add_common(p)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("bdbr", help="BD-BR of test vs reference RQ points, printed as a percentage")
    p.add_argument("ref_csv", help="reference CSV with bitrate_bps,quality_db")
    p.add_argument("test_csv", help="test CSV with bitrate_bps,quality_db")
    p.set_defaults(func=cmd_bdbr)

    p = sub.add_parser("crossval", help="k-fold evaluation of all ladder predictors")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--synthetic", action="store_true", help="generate the synthetic dataset")
    src.add_argument("--dataset", help="directory holding features.csv and rq.csv")
    p.add_argument("--sequences", type=int, default=100, help="synthetic sequence count (default 100)")
    p.add_argument("--folds", type=int, default=10, help="number of folds (default 10)")
    p.add_argument("--rfe-keep", type=int, default=6, help="features kept by RFE per learner; 0 disables RFE (default 6)")
    p.add_argument("-o", "--output", required=True, help="report directory")
    _add_common(p)
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("show-config", help="print the resolved configuration as YAML")
    _add_common(p)
    p.set_defaults(func=cmd_show_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except LadderError as exc:
        _fail(str(exc))
        return exc.exit_code
    except OSError as exc:
        _fail(str(exc))
        return 2


if __name__ == "__main__":
    sys.exit(main())
