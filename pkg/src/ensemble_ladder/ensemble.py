"""Conditional ensemble aggregation of two predicted ladders.

Where the classifier and regressor ladders pick the same resolution for a
rate, that resolution is kept with no encoding.  Where they disagree the
encoder backend is queried, either for the two proposed resolutions
(fast mode) or for every resolution (full mode), and the best quality
wins.  The per-rate choices are then repaired into a monotone ladder.
"""

from __future__ import annotations

import abc
import hashlib
import json
import logging
import math
import os
import shlex
import string
import subprocess
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    BadParams,
    CacheCorruption,
    EncoderFailure,
    LadderError,
    NonFinite,
    RateOutOfRange,
    UnsupportedResolution,
    ValidationError,
)
from .rq_core import (
    DEFAULT_GRID,
    BitrateGrid,
    BitrateLadder,
    RateQualitySurface,
    Resolution,
    ResolutionSet,
    interp_quality,
    ladder_from_indices,
    ladder_indices,
    same_resolutions,
)

log = logging.getLogger(__name__)


class EncoderBackend(abc.ABC):
    """q = E(chunk, log2_rate, resolution), memoised per key.

    ``queries`` counts every call, ``measurements`` only the ones that
    reached the underlying encoder or model.
    """

    def __init__(self, resolutions: ResolutionSet, rate_range: tuple[float, float] = (-math.inf, math.inf)):
        self.resolutions = resolutions
        self.rate_range = rate_range
        self._memo: dict[tuple, float] = {}
        self._lock = threading.Lock()
        self.queries = 0
        self.measurements = 0

    def _index(self, resolution: int | Resolution) -> int:
        if isinstance(resolution, Resolution):
            found = self.resolutions.find(resolution.width, resolution.height)
            if found is None:
                raise UnsupportedResolution(f"{resolution.width}x{resolution.height} is not offered by this backend")
            return found.index
        idx = int(resolution)
        if not 1 <= idx <= len(self.resolutions):
            raise UnsupportedResolution(f"resolution index {idx} outside 1..{len(self.resolutions)}")
        return idx

    def chunk_key(self, chunk_ref) -> str:
        return "" if chunk_ref is None else str(chunk_ref)

    def encode(self, chunk_ref, log2_rate: float, resolution: int | Resolution) -> float:
        idx = self._index(resolution)
        x = float(log2_rate)
        lo, hi = self.rate_range
        if not math.isfinite(x) or not lo <= x <= hi:
            raise RateOutOfRange(f"log2 rate {x} outside [{lo}, {hi}]")
        key = (self.chunk_key(chunk_ref), x, idx)
        with self._lock:
            self.queries += 1
            if key in self._memo:
                return self._memo[key]
        q = float(self._measure(chunk_ref, x, idx))
        if not math.isfinite(q):
            raise NonFinite(f"backend returned non-finite quality for {key}")
        with self._lock:
            # values are deterministic, so a concurrent duplicate is harmless
            if key not in self._memo:
                self._memo[key] = q
                self.measurements += 1
        return q

    @abc.abstractmethod
    def _measure(self, chunk_ref, log2_rate: float, index: int) -> float:
        ...


def encode_quality(backend: EncoderBackend, chunk_ref, log2_rate: float, resolution) -> float:
    return backend.encode(chunk_ref, log2_rate, resolution)


class TableBackend(EncoderBackend):
    """Interpolates a measured rate-quality surface."""

    def __init__(self, surface: RateQualitySurface, rate_range=(-math.inf, math.inf)):
        super().__init__(surface.resolutions, rate_range)
        self.surface = surface

    def chunk_key(self, chunk_ref) -> str:
        return self.surface.chunk_id if chunk_ref is None else str(chunk_ref)

    def _measure(self, chunk_ref, log2_rate, index):
        return interp_quality(self.surface.curve(index), log2_rate)


@dataclass(frozen=True)
class SyntheticParams:
    """Per resolution: quality ceiling (dB), steepness, onset (log2 rate)."""

    ceilings: tuple[float, ...]
    steepness: tuple[float, ...]
    onsets: tuple[float, ...]

    def __post_init__(self):
        c, k, o = (tuple(float(v) for v in seq) for seq in (self.ceilings, self.steepness, self.onsets))
        object.__setattr__(self, "ceilings", c)
        object.__setattr__(self, "steepness", k)
        object.__setattr__(self, "onsets", o)
        if not (len(c) == len(k) == len(o) >= 2):
            raise BadParams("ceilings, steepness and onsets need one entry per resolution (at least two)")
        if not all(map(math.isfinite, c + k + o)):
            raise BadParams("synthetic parameters must be finite")
        if any(b <= a for a, b in zip(c, c[1:])):
            raise BadParams("ceilings must strictly increase with resolution")
        if any(b <= a for a, b in zip(o, o[1:])):
            raise BadParams("onsets must strictly increase with resolution")
        if any(v <= 0 for v in k):
            raise BadParams("steepness must be positive")

    @classmethod
    def default(cls) -> "SyntheticParams":
        return cls((38.0, 42.0, 46.0, 50.0), (1.2, 1.0, 0.8, 0.6), (5.0, 6.0, 7.0, 8.0))

    def to_dict(self) -> dict:
        return {"ceilings": list(self.ceilings), "steepness": list(self.steepness), "onsets": list(self.onsets)}

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticParams":
        return cls(tuple(d["ceilings"]), tuple(d["steepness"]), tuple(d["onsets"]))


def synthetic_quality(params: SyntheticParams, index: int, log2_rate):
    """U_s * (1 - exp(-k_s * max(0, x - o_s))) for 1-based resolution ``index``."""
    u, k, o = params.ceilings[index - 1], params.steepness[index - 1], params.onsets[index - 1]
    x = np.maximum(0.0, np.asarray(log2_rate, dtype=float) - o)
    q = u * -np.expm1(-k * x)
    return float(q) if np.ndim(q) == 0 else q


class SyntheticBackend(EncoderBackend):
    """Closed-form saturating curves; content-independent per instance."""

    def __init__(self, params: SyntheticParams, resolutions: ResolutionSet | None = None, rate_range=(-math.inf, math.inf)):
        resolutions = resolutions or ResolutionSet.default()
        if len(resolutions) != len(params.ceilings):
            raise BadParams("parameter count does not match the resolution set")
        super().__init__(resolutions, rate_range)
        self.params = params

    def _measure(self, chunk_ref, log2_rate, index):
        return synthetic_quality(self.params, index, log2_rate)


def make_synthetic_backend(params: SyntheticParams, resolutions: ResolutionSet | None = None) -> SyntheticBackend:
    return SyntheticBackend(params, resolutions)


REQUIRED_PLACEHOLDERS = frozenset({"input", "width", "height", "bitrate_bps", "output"})


class ExternalBackend(EncoderBackend):
    """Runs an encoder command per query and scores the reconstruction.

    ``chunk_ref`` is a :class:`VideoChunk` or a path to a Y4M file at native
    resolution.  The command template is run through the shell with the
    placeholders substituted (paths shell-quoted).  It must leave the
    decoded reconstruction, raw 4:2:0 or Y4M at the target size, at
    ``{output}``.  Results are cached on disk as one JSON record per key.
    """

    def __init__(
        self,
        command_template: str,
        workdir,
        native_resolution: tuple[int, int],
        resolutions: ResolutionSet | None = None,
        cache_dir=None,
        timeout: float | None = None,
    ):
        names = {f for _, f, _, _ in string.Formatter().parse(command_template) if f}
        missing = REQUIRED_PLACEHOLDERS - names
        if missing:
            raise ValidationError(f"encoder template lacks placeholder(s) {', '.join('{' + m + '}' for m in sorted(missing))}")
        unknown = names - REQUIRED_PLACEHOLDERS
        if unknown:
            raise ValidationError(f"encoder template has unknown placeholder(s) {sorted(unknown)}")
        super().__init__(resolutions or ResolutionSet.default())
        self.template = command_template
        self.workdir = Path(workdir)
        self.workdir.mkdir(parents=True, exist_ok=True)
        self.cache_dir = Path(cache_dir) if cache_dir is not None else self.workdir / "cache"
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.native = tuple(native_resolution)
        self.timeout = timeout
        self.launches = 0
        self.cache_hits = 0
        self._hashes: dict[int, str] = {}

    def _load(self, chunk_ref):
        from .video_features import VideoChunk, read_video

        chunk = chunk_ref if isinstance(chunk_ref, VideoChunk) else read_video(chunk_ref)
        if (chunk.width, chunk.height) != self.native:
            raise ValidationError(f"source is {chunk.width}x{chunk.height}, backend expects native {self.native[0]}x{self.native[1]}")
        return chunk

    def chunk_key(self, chunk_ref) -> str:
        from .video_features import write_raw_yuv

        ident = id(chunk_ref)
        if ident not in self._hashes:
            chunk = self._load(chunk_ref)
            self._hashes[ident] = hashlib.sha256(write_raw_yuv(chunk)).hexdigest()
        return self._hashes[ident]

    def _record_path(self, key: str) -> Path:
        return self.cache_dir / f"{key}.json"

    def _measure(self, chunk_ref, log2_rate, index):
        from .eval.resample import resize_chunk, scaled_psnr
        from .video_features import read_raw_yuv, read_y4m, write_raw_yuv

        res = self.resolutions[index]
        bps = int(round(2.0**log2_rate))
        content = self.chunk_key(chunk_ref)
        key = hashlib.sha256(f"{content}|{bps}|{res.width}x{res.height}".encode()).hexdigest()
        record = self._record_path(key)
        if record.exists():
            try:
                data = json.loads(record.read_text())
                q = float(data["quality_db"])
                if data["key"] != key:
                    raise KeyError("key")
            except (ValueError, KeyError, TypeError) as exc:
                raise CacheCorruption(f"{record}: {exc}") from None
            self.cache_hits += 1
            return q

        native = self._load(chunk_ref)
        src = native if (res.width, res.height) == self.native else resize_chunk(native, res.width, res.height)
        in_path = self.workdir / f"{key}.in.yuv"
        out_path = self.workdir / f"{key}.out.yuv"
        log_path = self.workdir / f"{key}.log"
        in_path.write_bytes(write_raw_yuv(src))
        cmd = self.template.format(
            input=shlex.quote(str(in_path)),
            output=shlex.quote(str(out_path)),
            width=res.width,
            height=res.height,
            bitrate_bps=bps,
        )
        self.launches += 1
        log.info("encode %s at %d bps: %s", res.label, bps, cmd)
        proc = subprocess.run(cmd, shell=True, capture_output=True, text=True, timeout=self.timeout)
        log_path.write_text(f"$ {cmd}\n--- stdout\n{proc.stdout}\n--- stderr\n{proc.stderr}\n")
        if proc.returncode != 0:
            raise EncoderFailure(f"encoder exited with status {proc.returncode}: {cmd}", proc.stdout + proc.stderr)
        if not out_path.exists():
            raise EncoderFailure(f"encoder produced no reconstruction at {out_path}", proc.stdout + proc.stderr)
        data = out_path.read_bytes()
        try:
            if data.startswith(b"YUV4MPEG2"):
                recon = read_y4m(data)
            else:
                recon = read_raw_yuv(data, res.width, res.height, native.fps)
        except LadderError as exc:
            raise EncoderFailure(f"unreadable reconstruction: {exc}", proc.stdout + proc.stderr) from None
        if recon.frame_count != native.frame_count:
            raise EncoderFailure(f"reconstruction has {recon.frame_count} frames, source has {native.frame_count}")
        up = resize_chunk(recon, *self.native)
        q = scaled_psnr(native, up)
        tmp = record.with_suffix(f".{os.getpid()}.{threading.get_ident()}.tmp")
        tmp.write_text(json.dumps({"key": key, "quality_db": q, "encoder_log_path": str(log_path)}))
        os.replace(tmp, record)
        in_path.unlink(missing_ok=True)
        out_path.unlink(missing_ok=True)
        return q


def make_external_backend(command_template: str, workdir, native_resolution, **kwargs) -> ExternalBackend:
    return ExternalBackend(command_template, workdir, native_resolution, **kwargs)


# ------------------------------------------------------------------ aggregator


@dataclass(frozen=True)
class AggregatorConfig:
    is_fast: bool = False
    grid: BitrateGrid = DEFAULT_GRID


@dataclass
class PointRecord:
    log2_rate: float
    index_cl: int
    index_rg: int
    agree: bool
    encodes: int
    chosen: int
    qualities: dict[int, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "log2_rate": self.log2_rate,
            "index_cl": self.index_cl,
            "index_rg": self.index_rg,
            "agree": self.agree,
            "encodes": self.encodes,
            "chosen": self.chosen,
            "qualities": {str(k): v for k, v in self.qualities.items()},
        }


@dataclass
class AggregationReport:
    ladder: BitrateLadder | None
    points: list[PointRecord]
    is_fast: bool

    @property
    def total_encodes(self) -> int:
        return sum(p.encodes for p in self.points)

    @property
    def disagreements(self) -> int:
        return sum(not p.agree for p in self.points)

    @property
    def chosen_indices(self) -> np.ndarray:
        return np.array([p.chosen for p in self.points])

    def to_dict(self) -> dict:
        return {
            "mode": "fast" if self.is_fast else "full",
            "ladder": self.ladder.to_dict() if self.ladder else None,
            "total_encodes": self.total_encodes,
            "disagreements": self.disagreements,
            "points": [p.to_dict() for p in self.points],
        }


class AggregationError(LadderError):
    def __init__(self, cause: LadderError, report: AggregationReport):
        super().__init__(str(cause))
        self.cause = cause
        self.report = report
        self.exit_code = cause.exit_code


def _resolve(backend, chunk_ref, rate, candidates: Sequence[int]) -> tuple[int, dict[int, float]]:
    qualities = {i: backend.encode(chunk_ref, rate, i) for i in candidates}
    # candidates ascend, so max() keeps the lower index on ties
    best = max(candidates, key=lambda i: (qualities[i], -i))
    return best, qualities


def aggregate(
    ladder_cl: BitrateLadder,
    ladder_rg: BitrateLadder,
    backend: EncoderBackend,
    cfg: AggregatorConfig = AggregatorConfig(),
    chunk_ref=None,
    workers: int = 1,
) -> AggregationReport:
    same_resolutions(ladder_cl, ladder_rg)
    resolutions = ladder_cl.resolutions
    rates = cfg.grid.rates
    icl = ladder_indices(ladder_cl, rates)
    irg = ladder_indices(ladder_rg, rates)
    all_idx = list(range(1, len(resolutions) + 1))

    points = [
        PointRecord(float(r), int(a), int(b), bool(a == b), 0, int(a))
        for r, a, b in zip(rates, icl, irg)
    ]
    todo = [p for p in points if not p.agree]

    def work(p: PointRecord):
        cands = sorted({p.index_cl, p.index_rg}) if cfg.is_fast else all_idx
        return _resolve(backend, chunk_ref, p.log2_rate, cands)

    def settle(p: PointRecord, result) -> None:
        p.chosen, p.qualities = result
        p.encodes = len(p.qualities)

    report = AggregationReport(None, points, cfg.is_fast)
    try:
        if workers > 1 and len(todo) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(work, p) for p in todo]
                errors = []
                for p, fut in zip(todo, futures):
                    try:
                        settle(p, fut.result())
                    except LadderError as exc:
                        errors.append(exc)
                if errors:
                    raise errors[0]
        else:
            for p in todo:
                settle(p, work(p))
    except LadderError as exc:
        raise AggregationError(exc, report) from exc

    report.ladder = ladder_from_indices(report.chosen_indices, rates, resolutions)
    return report
