"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

from __future__ import annotations

import json
import math
import time

import numpy as np
import pytest
from scipy.interpolate import PchipInterpolator

from conftest import DATA, brute_force_hull, brute_force_quality, random_surface
from ensemble_ladder import cli
from ensemble_ladder.ensemble import AggregatorConfig, TableBackend, aggregate
from ensemble_ladder.eval.metrics import bd_br
from ensemble_ladder.eval.resample import PSNR_CAP_DB, lanczos_resize, scaled_psnr
from ensemble_ladder.learners import GaussianProcess, GbtHyper, GpHyper, GradientBoostedClassifier
from ensemble_ladder.rq_core import (
    DEFAULT_GRID,
    BitrateLadder,
    RQPoint,
    ResolutionSet,
    cross_over_bitrates,
    hull_quality,
    ladder_indices,
    ladder_lookup,
    read_ladder_json,
)
from ensemble_ladder.video_features import (
    Frame,
    VideoChunk,
    glcm_descriptors,
    si_ti,
    temporal_complexity,
)


class Gate:
    def __init__(self, number: int, title: str, budget_s: float, emit):
        self.number, self.title, self.budget, self.emit = number, title, budget_s, emit
        self.failures: list[str] = []

    def check(self, ok: bool, what: str) -> None:
        if not ok:
            self.failures.append(what)

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        if exc_type is None:
            self.check(elapsed < self.budget, f"runtime {elapsed:.1f}s over {self.budget:.0f}s budget")
        status = "PASS" if exc_type is None and not self.failures else "FAIL"
        detail = "; ".join(self.failures[:3]) if self.failures else (repr(exc) if exc else "")
        self.emit(f"criterion {self.number} [{status}] {self.title} ({elapsed:.1f}s){': ' + detail if detail else ''}")
        if exc_type is None:
            assert not self.failures, self.failures
        return False


# ------------------------------------------------------------------ 1. BD-BR


def _random_rq(rng, n):
    rates = np.sort(rng.uniform(6, 16, n))
    q = np.sort(rng.uniform(28, 48, n))
    return [RQPoint(float(r), float(v)) for r, v in zip(rates, q)]


def _bd_br_reference(ref, test, n=100_000):
    """scipy PCHIP of log2 rate over quality, trapezoid on 1e5 subintervals."""
    fr = PchipInterpolator([p.quality for p in ref], [p.log2_rate for p in ref])
    ft = PchipInterpolator([p.quality for p in test], [p.log2_rate for p in test])
    lo = max(ref[0].quality, test[0].quality)
    hi = min(ref[-1].quality, test[-1].quality)
    q = np.linspace(lo, hi, n + 1)
    gap = np.trapezoid(ft(q) - fr(q), q) / (hi - lo)
    return (2.0**gap - 1.0) * 100.0


def test_criterion_1_bdbr_oracles(report_line):
    rng = np.random.default_rng(1)
    with Gate(1, "BD-BR oracle suite", 10, report_line) as g:
        for _ in range(20):
            pts = _random_rq(rng, int(rng.integers(4, 10)))
            g.check(abs(bd_br(pts, pts).percent) <= 1e-9, "identity not 0")
            doubled = [RQPoint(p.log2_rate + 1.0, p.quality) for p in pts]
            g.check(abs(bd_br(pts, doubled).percent - 100.0) <= 0.1, "2x offset not +100%")
        worst = 0.0
        for _ in range(50):
            while True:
                ref = _random_rq(rng, int(rng.integers(4, 10)))
                test = _random_rq(rng, int(rng.integers(4, 10)))
                if max(ref[0].quality, test[0].quality) < min(ref[-1].quality, test[-1].quality):
                    break
            worst = max(worst, abs(bd_br(ref, test).percent - _bd_br_reference(ref, test)))
        g.check(worst <= 0.01, f"numeric-integration gap {worst:.4g}")


# ------------------------------------------------------- 2. hull / cross-over


def _transition_scan(surface, rates):
    """Walk the rates upward and record, per boundary, the last rate whose
    brute-force hull winner is at or below that boundary."""
    _, idx = brute_force_hull(surface, rates)
    n = len(surface.resolutions)
    out = [float(rates[0])] * (n - 1)
    for r, i in zip(rates, idx):
        for b in range(1, n):
            if i <= b:
                out[b - 1] = float(r)
    return out


def test_criterion_2_hull_and_crossovers(report_line):
    rng = np.random.default_rng(2)
    grid = DEFAULT_GRID
    rates = grid.rates
    fine = np.linspace(grid.min_log2, grid.max_log2, 1 + 10 * (grid.points - 1))
    with Gate(2, "hull / cross-over oracle", 30, report_line) as g:
        worst_q = worst_c = 0.0
        for k in range(200):
            surface = random_surface(rng, grid, chunk_id=f"s{k}")
            ref_q, ref_i = brute_force_hull(surface, rates)
            for r, q0, i0 in zip(rates, ref_q, ref_i):
                q, i = hull_quality(surface, float(r))
                worst_q = max(worst_q, abs(q - q0))
                g.check(i == i0, f"surface {k}: hull index at {r:.3f} is {i}, brute force {i0}")
            got = cross_over_bitrates(surface, grid).crossover_log2_rates
            scan = _transition_scan(surface, fine)
            worst_c = max(worst_c, max(abs(a - b) for a, b in zip(got, scan)))
        g.check(worst_q <= 1e-9, f"hull quality differs by {worst_q:.3g}")
        g.check(worst_c <= grid.step + 1e-9, f"cross-over off by {worst_c:.4f} > step {grid.step:.4f}")


# ---------------------------------------------------------- 3. aggregator


def test_criterion_3_aggregator_invariants(report_line):
    rng = np.random.default_rng(3)
    grid = DEFAULT_GRID
    rates = grid.rates
    res = ResolutionSet.default()
    n_res = len(res)
    with Gate(3, "aggregator invariants", 30, report_line) as g:
        disagreeing = 0
        for k in range(100):
            surface = random_surface(rng, grid, anchored=True, chunk_id=f"a{k}")
            cl = BitrateLadder(res, tuple(np.sort(rng.uniform(grid.min_log2, grid.max_log2, n_res - 1))))
            rg = BitrateLadder(res, tuple(np.sort(rng.uniform(grid.min_log2, grid.max_log2, n_res - 1))))
            fast_be, full_be = TableBackend(surface), TableBackend(surface)
            fast = aggregate(cl, rg, fast_be, AggregatorConfig(True, grid))
            full = aggregate(cl, rg, full_be, AggregatorConfig(False, grid))
            _, hull_idx = brute_force_hull(surface, rates)
            for pf, pa, r, h in zip(fast.points, full.points, rates, hull_idx):
                if pf.agree:
                    g.check(pf.encodes == 0 and pa.encodes == 0, "encode at an agreement point")
                    continue
                disagreeing += 1
                g.check(pf.encodes == 2, f"fast used {pf.encodes} encodes")
                g.check(pa.encodes == n_res, f"full used {pa.encodes} encodes")
                q = lambda i: float(surface.curve(i).quality(r))  # noqa: E731
                q_full, q_fast = q(pa.chosen), q(pf.chosen)
                g.check(q_full >= q_fast >= max(q(pf.index_cl), q(pf.index_rg)), f"quality order broken at {r:.3f}")
                g.check(pa.chosen == h, f"full chose {pa.chosen}, hull argmax {h} at {r:.3f}")
            g.check(fast_be.measurements == fast.total_encodes, "fast backend count mismatch")
            g.check(full_be.measurements == full.total_encodes, "full backend count mismatch")
        g.check(disagreeing > 0, "no disagreement points were exercised")


# ------------------------------------------------------------- 4. features


def _glcm_reference(luma, levels=8):
    h, w = luma.shape
    q = [[int(luma[y][x]) * levels // 256 for x in range(w)] for y in range(h)]
    P = [[0.0] * levels for _ in range(levels)]
    for dy, dx in ((0, 1), (-1, 1), (-1, 0), (-1, -1)):
        for y in range(h):
            for x in range(w):
                yy, xx = y + dy, x + dx
                if 0 <= yy < h and 0 <= xx < w:
                    a, b = q[y][x], q[yy][xx]
                    P[a][b] += 1
                    P[b][a] += 1
    total = sum(map(sum, P))
    P = [[v / total for v in row] for row in P]
    rng_ = range(levels)
    mu_i = sum(i * P[i][j] for i in rng_ for j in rng_)
    mu_j = sum(j * P[i][j] for i in rng_ for j in rng_)
    sd_i = math.sqrt(sum((i - mu_i) ** 2 * P[i][j] for i in rng_ for j in rng_))
    sd_j = math.sqrt(sum((j - mu_j) ** 2 * P[i][j] for i in rng_ for j in rng_))
    contrast = sum((i - j) ** 2 * P[i][j] for i in rng_ for j in rng_)
    cov = sum((i - mu_i) * (j - mu_j) * P[i][j] for i in rng_ for j in rng_)
    corr = cov / (sd_i * sd_j) if sd_i * sd_j > 0 else 0.0
    energy = sum(P[i][j] ** 2 for i in rng_ for j in rng_)
    homog = sum(P[i][j] / (1 + abs(i - j)) for i in rng_ for j in rng_)
    ent = -sum(P[i][j] * math.log(P[i][j]) for i in rng_ for j in rng_ if P[i][j] > 0)
    return contrast, corr, energy, homog, ent


def _si_reference(luma):
    h, w = luma.shape
    y = luma.astype(float)
    mags = []
    for r in range(1, h - 1):
        for c in range(1, w - 1):
            gx = gy = 0.0
            for dr, dc, kx, ky in (
                (-1, -1, -1, -1), (-1, 0, 0, -2), (-1, 1, 1, -1),
                (0, -1, -2, 0), (0, 1, 2, 0),
                (1, -1, -1, 1), (1, 0, 0, 2), (1, 1, 1, 1),
            ):
                gx += kx * y[r + dr, c + dc]
                gy += ky * y[r + dr, c + dc]
            mags.append(math.hypot(gx, gy))
    m = sum(mags) / len(mags)
    return math.sqrt(sum((v - m) ** 2 for v in mags) / len(mags))


def _std_reference(values):
    m = sum(values) / len(values)
    return math.sqrt(sum((v - m) ** 2 for v in values) / len(values))


def test_criterion_4_feature_oracles(report_line):
    rng = np.random.default_rng(4)
    with Gate(4, "feature oracles", 60, report_line) as g:
        worst = 0.0
        for _ in range(50):
            h, w = (int(v) for v in rng.integers(4, 40, 2))
            luma = rng.integers(0, 256, (h, w), dtype=np.uint8)
            got = glcm_descriptors(Frame(luma))
            ref = _glcm_reference(luma)
            worst = max(worst, max(abs(a - b) for a, b in zip(got, ref)))
        g.check(worst <= 1e-12, f"GLCM differs by {worst:.3g}")
        for v in (0, 77, 255):
            got = glcm_descriptors(Frame(np.full((16, 24), v, np.uint8)))
            g.check(got == (0.0, 0.0, 1.0, 1.0, 0.0), f"constant frame {v}: {got}")

        # moving-gradient clip plus noise
        h, w, n = 24, 32, 6
        base = np.add.outer(np.arange(h) * 3, np.arange(w) * 5)
        frames = [
            Frame(np.clip(base + 7 * t + rng.integers(-9, 10, (h, w)), 0, 255).astype(np.uint8))
            for t in range(n)
        ]
        chunk = VideoChunk(w, h, 25.0, tuple(frames))
        tc_err = 0.0
        for a, b in zip(frames, frames[1:]):
            ref = sum(abs(int(x) - int(y)) for x, y in zip(a.luma.ravel(), b.luma.ravel())) / (h * w)
            tc_err = max(tc_err, abs(temporal_complexity(a, b) - ref))
        g.check(tc_err <= 1e-9, f"TC differs by {tc_err:.3g}")
        si, ti = si_ti(chunk)
        si_ref = max(_si_reference(f.luma) for f in frames)
        ti_ref = max(
            _std_reference([float(x) - float(y) for x, y in zip(b.luma.ravel(), a.luma.ravel())])
            for a, b in zip(frames, frames[1:])
        )
        g.check(abs(si - si_ref) <= 1e-9, f"SI differs by {abs(si - si_ref):.3g}")
        g.check(abs(ti - ti_ref) <= 1e-9, f"TI differs by {abs(ti - ti_ref):.3g}")


# ------------------------------------------------------------- 5. learners


def _lml_reference(X, y, params, jitter):
    from scipy.stats import multivariate_normal

    d2 = ((X[:, None, :] - X[None, :, :]) ** 2).sum(-1)
    K = params.signal_variance * np.exp(-0.5 * d2 / params.length_scale**2)
    K += (params.noise_variance + jitter) * np.eye(len(y))
    try:
        return multivariate_normal(mean=np.zeros(len(y)), cov=K).logpdf(y)
    except (np.linalg.LinAlgError, ValueError):
        return -math.inf


def test_criterion_5_learners(report_line):
    rng = np.random.default_rng(5)
    with Gate(5, "learner checks", 120, report_line) as g:
        X = rng.uniform(-2, 2, (30, 2))
        y = np.sin(X[:, 0]) + 0.5 * np.cos(1.5 * X[:, 1]) + 3.0
        hyper = GpHyper()
        gp = GaussianProcess.fit(X, y, hyper)
        err = float(np.max(np.abs(gp.predict(X) - y)))
        g.check(err <= 1e-3, f"GP training residual {err:.3g}")

        yn = (y - y.mean()) / y.std()
        scores = [(_lml_reference(X, yn, p, hyper.jitter), p) for p in hyper.candidates()]
        best = max(s for s, _ in scores)
        g.check(abs(gp.lml - best) <= 1e-6 * max(1.0, abs(best)), f"selected LML {gp.lml:.6f} vs grid max {best:.6f}")
        winners = [p for s, p in scores if s >= best - 1e-6 * max(1.0, abs(best))]
        g.check(gp.params in winners, f"selected {gp.params} is not a grid maximiser")

        Xc = rng.uniform(0, 1, (600, 4))
        yc = (Xc[:, 0] > 0.3).astype(int) + (Xc[:, 1] > 0.6).astype(int)
        gh = GbtHyper(rounds=40)
        m1 = GradientBoostedClassifier.fit(Xc, yc, 3, gh)
        acc = float(np.mean(m1.predict(Xc) == yc))
        g.check(acc >= 0.99, f"GBT training accuracy {acc:.3f}")
        m2 = GradientBoostedClassifier.fit(Xc, yc, 3, gh)
        g.check(json.dumps(m1.to_dict()) == json.dumps(m2.to_dict()), "GBT refit is not bit-identical")
        gp2 = GaussianProcess.fit(X, y, hyper)
        g.check(json.dumps(gp.to_dict()) == json.dumps(gp2.to_dict()), "GP refit is not bit-identical")
        sub = GbtHyper(rounds=20, subsample=0.7, seed=11)
        s1 = GradientBoostedClassifier.fit(Xc, yc, 3, sub).to_dict()
        s2 = GradientBoostedClassifier.fit(Xc, yc, 3, sub).to_dict()
        g.check(json.dumps(s1) == json.dumps(s2), "seeded subsampled GBT is not bit-identical")


# ------------------------------------------------------ 6. synthetic study


def _paired_gap(report, a, b, metric):
    """Mean and standard error of (a - b) over folds."""
    d = np.array([f[a][metric] - f[b][metric] for f in report["per_fold"]])
    return float(d.mean()), float(d.std(ddof=1) / math.sqrt(d.size))


def test_criterion_6_synthetic_study(report_line, tmp_path, capsys):
    with Gate(6, "synthetic end-to-end study", 300, report_line) as g:
        code = cli.main(["crossval", "--synthetic", "--sequences", "100", "--folds", "10", "--seed", "0", "-o", str(tmp_path)])
        g.check(code == 0, f"crossval exited {code}")
        rep = json.loads((tmp_path / "cv_report.json").read_text())
        avg = rep["averages"]
        for m in ("classifier", "regressor", "ensemble_fast", "ensemble_full", "static"):
            report_line(
                f"    {m:<14} accuracy {avg[m]['accuracy']:.4f}  bdbr_vs_gt {avg[m]['bdbr_vs_gt']:.3f}%"
                f"  bdbr_vs_static {avg[m]['bdbr_vs_static']:.3f}%  encodes {avg[m]['encodes']:.2f}"
            )
        best_constituent = max(("classifier", "regressor"), key=lambda m: avg[m]["accuracy"])
        for hi, lo in (("ensemble_full", "ensemble_fast"), ("ensemble_fast", best_constituent)):
            gap, se = _paired_gap(rep, hi, lo, "accuracy")
            g.check(gap >= -se, f"accuracy {hi} - {lo} = {gap:.4f} (SE {se:.4f})")
        best_bd = min(("classifier", "regressor"), key=lambda m: avg[m]["bdbr_vs_gt"])
        for lo, hi in (("ensemble_full", "ensemble_fast"), ("ensemble_fast", best_bd)):
            gap, se = _paired_gap(rep, hi, lo, "bdbr_vs_gt")
            g.check(gap >= -se, f"BD-BR {hi} - {lo} = {gap:.4f} (SE {se:.4f})")
        for f in rep["per_fold"]:
            fast = f["ensemble_fast"]
            g.check(fast["encodes"] <= 2 * fast["disagreements"] + 1e-12, "fast encodes exceed 2x disagreements")
        g.check(avg["ensemble_fast"]["encodes"] < avg["ensemble_full"]["encodes"], "fast does not encode less than full")
        for name in ("cv_report.csv", "per_sequence_bdbr.csv"):
            g.check((tmp_path / name).exists(), f"{name} missing")


# ------------------------------------------------------ 7. operating-point fixture


def test_criterion_7_fig2_fixture(report_line, tmp_path, capsys):
    with Gate(7, "operating-point regression fixture", 30, report_line) as g:
        code = cli.main(["build-gt", str(DATA / "fig2_operating_points.csv"), "-o", str(tmp_path)])
        g.check(code == 0, f"build-gt exited {code}")
        ladder = read_ladder_json(tmp_path / "fig2.json")
        step = DEFAULT_GRID.step
        for got, want in zip(ladder.crossover_log2_rates, (7.64, 8.66, 10.30)):
            g.check(abs(got - want) <= step, f"cross-over {got:.4f} vs {want} (step {step:.4f})")
        steps = {6.5: 1, 7.2: 1, 8.0: 2, 8.5: 2, 9.3: 3, 10.0: 3, 10.6: 4, 12.0: 4, 16.0: 4}
        for r, want in steps.items():
            g.check(ladder_lookup(ladder, r) == want, f"lookup({r}) = {ladder_lookup(ladder, r)}, expected {want}")
        idx = ladder_indices(ladder, DEFAULT_GRID.rates)
        g.check(bool(np.all(np.diff(idx) >= 0)) and set(idx.tolist()) == {1, 2, 3, 4}, "step ladder is not a 1-2-3-4 staircase")


# ----------------------------------------------------------- 8. scaled PSNR


def test_criterion_8_scaled_psnr(report_line):
    rng = np.random.default_rng(8)
    with Gate(8, "scaled-PSNR analytic checks", 30, report_line) as g:
        luma = rng.integers(0, 255, (32, 48), dtype=np.uint8)
        a = VideoChunk(48, 32, 25.0, (Frame(luma), Frame(luma)))
        b = VideoChunk(48, 32, 25.0, (Frame(luma + 1), Frame(luma + 1)))
        psnr = scaled_psnr(a, b)
        g.check(abs(psnr - 48.13) <= 0.01, f"off-by-one PSNR {psnr:.4f}")
        g.check(abs(psnr - 20 * math.log10(255)) <= 1e-9, "off-by-one PSNR is not 20 log10 255")
        g.check(scaled_psnr(a, a) == PSNR_CAP_DB, "identity is not capped")
        for v in (0, 1, 128, 254, 255):
            flat = Frame(np.full((36, 64), v, np.uint8), np.full((18, 32), v, np.uint8), np.full((18, 32), v, np.uint8))
            for w, h in ((16, 10), (64, 36), (128, 72), (30, 50)):
                out = lanczos_resize(flat, w, h)
                ok = all(np.all(p == v) for p in (out.luma, out.cb, out.cr))
                g.check(ok, f"constant {v} not preserved at {w}x{h}")
