"""Rate-quality curves, convex hull, cross-over bitrates and ladders.

All rates are log2 of bits per second.  Linear bps only shows up in the
CSV readers and writers at the bottom of this module.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import (
    BadResolutionSet,
    MixedResolutionSets,
    NonFinite,
    TooFewPoints,
    ValidationError,
)
from .interp import MonotoneCubic


@dataclass(frozen=True)
class Resolution:
    index: int
    width: int
    height: int
    label: str = ""

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0 or self.width % 2 or self.height % 2:
            raise BadResolutionSet(f"resolution {self.width}x{self.height} must be positive and even")
        if not self.label:
            object.__setattr__(self, "label", f"{self.height}p")

    def to_dict(self) -> dict:
        return {"index": self.index, "width": self.width, "height": self.height, "label": self.label}


@dataclass(frozen=True)
class ResolutionSet:
    """Ordered resolutions, index 1 is the smallest."""

    items: tuple[Resolution, ...]

    def __post_init__(self):
        items = tuple(self.items)
        object.__setattr__(self, "items", items)
        if len(items) < 2:
            raise BadResolutionSet("a resolution set needs at least two entries")
        for pos, res in enumerate(items, start=1):
            if res.index != pos:
                raise BadResolutionSet("resolution indices must be contiguous from 1")
        heights = [r.height for r in items]
        if any(b <= a for a, b in zip(heights, heights[1:])):
            raise BadResolutionSet("resolution heights must be strictly ascending")

    @classmethod
    def from_dims(cls, dims: Iterable[tuple[int, int]]) -> "ResolutionSet":
        ordered = sorted(dims, key=lambda wh: wh[1])
        return cls(tuple(Resolution(i, w, h) for i, (w, h) in enumerate(ordered, start=1)))

    @classmethod
    def default(cls) -> "ResolutionSet":
        return cls.from_dims([(960, 540), (1280, 720), (1920, 1080), (3840, 2160)])

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __getitem__(self, index: int) -> Resolution:
        """1-based lookup."""
        if not 1 <= index <= len(self.items):
            raise IndexError(index)
        return self.items[index - 1]

    def find(self, width: int, height: int) -> Resolution | None:
        for res in self.items:
            if res.width == width and res.height == height:
                return res
        return None

    def to_list(self) -> list[dict]:
        return [r.to_dict() for r in self.items]

    @classmethod
    def from_list(cls, rows: Sequence[dict]) -> "ResolutionSet":
        return cls(tuple(Resolution(int(r["index"]), int(r["width"]), int(r["height"]), r.get("label", "")) for r in rows))


@dataclass(frozen=True)
class BitrateGrid:
    """Evenly spaced log2-rate grid between MinRate and MaxRate (inclusive)."""

    min_log2: float
    max_log2: float
    points: int = 100

    def __post_init__(self):
        if not (math.isfinite(self.min_log2) and math.isfinite(self.max_log2)):
            raise NonFinite("grid bounds must be finite")
        if self.min_log2 >= self.max_log2:
            raise ValidationError("grid MinRate must be below MaxRate")
        if self.points < 2:
            raise ValidationError("grid needs at least two points")

    @classmethod
    def from_bps(cls, min_bps: float, max_bps: float, points: int = 100) -> "BitrateGrid":
        if min_bps <= 0 or max_bps <= 0:
            raise ValidationError("bitrates must be positive")
        return cls(math.log2(min_bps), math.log2(max_bps), int(points))

    @property
    def rates(self) -> np.ndarray:
        return np.linspace(self.min_log2, self.max_log2, self.points)

    @property
    def step(self) -> float:
        return (self.max_log2 - self.min_log2) / (self.points - 1)


DEFAULT_GRID = BitrateGrid(6.0, 17.0, 100)


class RQPoint(NamedTuple):
    log2_rate: float
    quality: float


@dataclass(frozen=True)
class RQCurve:
    resolution: Resolution
    points: tuple[RQPoint, ...]
    _interp: MonotoneCubic = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        x = np.array([p.log2_rate for p in self.points])
        y = np.array([p.quality for p in self.points])
        object.__setattr__(self, "_interp", MonotoneCubic(x, y))

    @property
    def min_log2_rate(self) -> float:
        return self.points[0].log2_rate

    def quality(self, log2_rate):
        return self._interp(log2_rate)


def build_curve(resolution: Resolution, raw_points: Iterable[Sequence[float]]) -> RQCurve:
    """Sort, de-duplicate and Pareto-prune raw encodes into a monotone curve.

    A point is dropped when some lower-rate point already reached a higher
    quality.  Two encodes at the same rate keep the better quality.
    """
    pts = [RQPoint(float(r), float(q)) for r, q in raw_points]
    if any(not (math.isfinite(p.log2_rate) and math.isfinite(p.quality)) for p in pts):
        raise NonFinite(f"non-finite rate-quality point for {resolution.label}")
    pts.sort(key=lambda p: (p.log2_rate, -p.quality))

    kept: list[RQPoint] = []
    best = -math.inf
    for p in pts:
        if kept and p.log2_rate == kept[-1].log2_rate:
            continue
        if p.quality < best:
            continue
        kept.append(p)
        best = p.quality
    if len(kept) < 2:
        raise TooFewPoints(f"{resolution.label}: need at least two points after pruning, got {len(kept)}")
    return RQCurve(resolution, tuple(kept))


def interp_quality(curve: RQCurve, log2_rate):
    """Monotone cubic between samples, flat beyond either end."""
    return curve.quality(log2_rate)


@dataclass(frozen=True)
class RateQualitySurface:
    resolutions: ResolutionSet
    curves: tuple[RQCurve, ...]
    chunk_id: str = ""

    def __post_init__(self):
        curves = tuple(self.curves)
        object.__setattr__(self, "curves", curves)
        if len(curves) != len(self.resolutions):
            raise ValidationError("exactly one curve per resolution is required")
        for res, curve in zip(self.resolutions, curves):
            if curve.resolution != res:
                raise ValidationError(f"curve for {curve.resolution.label} is out of order")

    def curve(self, index: int) -> RQCurve:
        return self.curves[index - 1]


def _hull_matrix(surface: RateQualitySurface, rates: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Quality of every curve at every rate, and which curves are eligible.

    A curve is eligible at rates at or above its lowest measured rate.  Where
    no curve is eligible, the curve whose measurements start lowest stands in.
    """
    q = np.vstack([c.quality(rates) for c in surface.curves])
    starts = np.array([c.min_log2_rate for c in surface.curves])
    eligible = rates[None, :] >= starts[:, None]
    orphan = ~eligible.any(axis=0)
    if orphan.any():
        eligible[int(np.argmin(starts)), orphan] = True
    return q, eligible


def hull_indices(surface: RateQualitySurface, rates) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised hull: (quality, 1-based resolution index) for each rate."""
    rates = np.atleast_1d(np.asarray(rates, dtype=float))
    q, eligible = _hull_matrix(surface, rates)
    masked = np.where(eligible, q, -np.inf)
    # argmax returns the first maximum, i.e. the lower resolution on ties
    idx = np.argmax(masked, axis=0)
    return masked[idx, np.arange(rates.size)], idx + 1


def hull_quality(surface: RateQualitySurface, log2_rate: float) -> tuple[float, int]:
    q, idx = hull_indices(surface, [log2_rate])
    return float(q[0]), int(idx[0])


@dataclass(frozen=True)
class BitrateLadder:
    resolutions: ResolutionSet
    crossover_log2_rates: tuple[float, ...]

    def __post_init__(self):
        c = tuple(float(v) for v in self.crossover_log2_rates)
        object.__setattr__(self, "crossover_log2_rates", c)
        if len(c) != len(self.resolutions) - 1:
            raise ValidationError(f"ladder needs {len(self.resolutions) - 1} cross-overs, got {len(c)}")
        if any(not math.isfinite(v) for v in c):
            raise NonFinite("ladder cross-overs must be finite")
        if any(b < a for a, b in zip(c, c[1:])):
            raise ValidationError(f"ladder cross-overs must be non-decreasing: {c}")

    def to_dict(self) -> dict:
        return {"resolutions": self.resolutions.to_list(), "crossover_log2_bps": list(self.crossover_log2_rates)}

    @classmethod
    def from_dict(cls, data: dict) -> "BitrateLadder":
        return cls(ResolutionSet.from_list(data["resolutions"]), tuple(data["crossover_log2_bps"]))


def ladder_from_indices(indices: Sequence[int], rates: Sequence[float], resolutions: ResolutionSet) -> BitrateLadder:
    """Monotone repair of a per-rate resolution sequence into a ladder.

    Boundary i sits at the last rate whose index is <= i; when there is none
    it falls to the first rate.
    """
    idx = np.asarray(indices)
    rates = np.asarray(rates, dtype=float)
    cross = []
    for i in range(1, len(resolutions)):
        hits = np.flatnonzero(idx <= i)
        cross.append(float(rates[hits[-1]]) if hits.size else float(rates[0]))
    return BitrateLadder(resolutions, tuple(cross))


def cross_over_bitrates(surface: RateQualitySurface, grid: BitrateGrid = DEFAULT_GRID) -> BitrateLadder:
    rates = grid.rates
    _, idx = hull_indices(surface, rates)
    return ladder_from_indices(idx, rates, surface.resolutions)


def ladder_indices(ladder: BitrateLadder, rates) -> np.ndarray:
    """Vectorised :func:`ladder_lookup`."""
    c = np.asarray(ladder.crossover_log2_rates)
    return np.searchsorted(c, np.asarray(rates, dtype=float), side="left") + 1


def ladder_lookup(ladder: BitrateLadder, log2_rate: float) -> int:
    """Smallest i with log2_rate <= cross-over i, else the top resolution."""
    return int(ladder_indices(ladder, [log2_rate])[0])


def average_ladder(ladders: Sequence[BitrateLadder]) -> BitrateLadder:
    """Static ladder: per-boundary mean in the log domain."""
    if not ladders:
        raise ValidationError("need at least one ladder to average")
    resolutions = ladders[0].resolutions
    for ladder in ladders[1:]:
        if ladder.resolutions != resolutions:
            raise MixedResolutionSets("cannot average ladders over different resolution sets")
    mean = np.mean([lad.crossover_log2_rates for lad in ladders], axis=0)
    return BitrateLadder(resolutions, tuple(sorted(float(v) for v in mean)))


def same_resolutions(a: BitrateLadder, b: BitrateLadder) -> None:
    if a.resolutions != b.resolutions:
        raise MixedResolutionSets("ladders use different resolution sets")


# ---------------------------------------------------------------- file formats

RQ_CSV_FIELDS = ("chunk_id", "width", "height", "bitrate_bps", "quality_db")


def read_rq_csv(path) -> dict[str, dict[tuple[int, int], list[tuple[float, float]]]]:
    """``chunk_id -> (width, height) -> [(log2_rate, quality)]`` in file order."""
    out: dict[str, dict[tuple[int, int], list[tuple[float, float]]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(RQ_CSV_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(f"{path}: missing columns {sorted(missing)}")
        for line, row in enumerate(reader, start=2):
            try:
                bps = float(row["bitrate_bps"])
                key = (int(row["width"]), int(row["height"]))
                q = float(row["quality_db"])
            except ValueError as exc:
                raise ValidationError(f"{path}:{line}: {exc}") from None
            if bps <= 0:
                raise ValidationError(f"{path}:{line}: bitrate must be positive")
            out.setdefault(row["chunk_id"], {}).setdefault(key, []).append((math.log2(bps), q))
    return out


def write_rq_csv(path, rows: Iterable[tuple[str, int, int, float, float]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RQ_CSV_FIELDS)
        for chunk_id, w, h, log2_rate, q in rows:
            writer.writerow([chunk_id, w, h, repr(2.0**log2_rate), repr(float(q))])


def surface_from_points(
    chunk_id: str,
    points: dict[tuple[int, int], list[tuple[float, float]]],
    resolutions: ResolutionSet,
) -> RateQualitySurface:
    missing = [r.label for r in resolutions if (r.width, r.height) not in points]
    if missing:
        raise ValidationError(f"chunk {chunk_id!r} is missing resolution(s) {', '.join(missing)}")
    curves = tuple(build_curve(r, points[(r.width, r.height)]) for r in resolutions)
    return RateQualitySurface(resolutions, curves, chunk_id)


def surface_points(surface: RateQualitySurface) -> list[tuple[str, int, int, float, float]]:
    return [
        (surface.chunk_id, c.resolution.width, c.resolution.height, p.log2_rate, p.quality)
        for c in surface.curves
        for p in c.points
    ]


def write_ladder_json(path, ladder: BitrateLadder) -> None:
    Path(path).write_text(json.dumps(ladder.to_dict(), indent=2) + "\n")


def read_ladder_json(path) -> BitrateLadder:
    try:
        return BitrateLadder.from_dict(json.loads(Path(path).read_text()))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"{path}: not a ladder file ({exc})") from None
