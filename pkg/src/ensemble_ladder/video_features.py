"""Video chunk I/O (Y4M, raw 4:2:0) and content descriptors.

Descriptors: five GLCM statistics, temporal complexity (mean absolute
luma difference between consecutive frames) and ITU-style SI/TI.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import astuple, dataclass, fields
from fractions import Fraction
from typing import BinaryIO, Iterable, Sequence

import numpy as np

from .errors import (
    BadMagic,
    DimensionMismatch,
    FrameTooSmall,
    SizeMismatch,
    TooFewFrames,
    TruncatedFrame,
    UnsupportedFormat,
    ValidationError,
)

Y4M_MAGIC = b"YUV4MPEG2"
_420_TAGS = {"420", "420jpeg", "420paldv", "420mpeg2"}


def _frozen(plane) -> np.ndarray:
    arr = np.array(plane, dtype=np.uint8, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Frame:
    luma: np.ndarray
    cb: np.ndarray | None = None
    cr: np.ndarray | None = None

    def __post_init__(self):
        luma = np.asarray(self.luma)
        if luma.ndim != 2:
            raise ValidationError("luma plane must be 2-D")
        if luma.dtype != np.uint8:
            if luma.size and (luma.min() < 0 or luma.max() > 255):
                raise ValidationError("sample values must lie in [0, 255]")
        object.__setattr__(self, "luma", _frozen(luma))
        if (self.cb is None) != (self.cr is None):
            raise ValidationError("chroma planes come in pairs")
        if self.cb is not None:
            h, w = luma.shape
            for name in ("cb", "cr"):
                plane = _frozen(getattr(self, name))
                if plane.shape != ((h + 1) // 2, (w + 1) // 2):
                    raise DimensionMismatch(f"{name} plane {plane.shape} does not match 4:2:0 of {luma.shape}")
                object.__setattr__(self, name, plane)

    @property
    def height(self) -> int:
        return self.luma.shape[0]

    @property
    def width(self) -> int:
        return self.luma.shape[1]

    def with_neutral_chroma(self) -> "Frame":
        if self.cb is not None:
            return self
        shape = ((self.height + 1) // 2, (self.width + 1) // 2)
        return Frame(self.luma, np.full(shape, 128, np.uint8), np.full(shape, 128, np.uint8))

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        planes = lambda f: (f.luma, f.cb, f.cr)  # noqa: E731
        for a, b in zip(planes(self), planes(other)):
            if (a is None) != (b is None):
                return False
            if a is not None and not np.array_equal(a, b):
                return False
        return True


@dataclass(frozen=True, eq=False)
class VideoChunk:
    width: int
    height: int
    fps: float
    frames: tuple[Frame, ...]

    def __post_init__(self):
        frames = tuple(self.frames)
        object.__setattr__(self, "frames", frames)
        for f in frames:
            if f.luma.shape != (self.height, self.width):
                raise DimensionMismatch(f"frame {f.luma.shape} in a {self.width}x{self.height} chunk")

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    def __eq__(self, other):
        if not isinstance(other, VideoChunk):
            return NotImplemented
        return (
            (self.width, self.height, self.fps) == (other.width, other.height, other.fps)
            and self.frames == other.frames
        )


# ------------------------------------------------------------------ Y4M / YUV


def _read_all(stream) -> bytes:
    if isinstance(stream, (bytes, bytearray, memoryview)):
        return bytes(stream)
    return stream.read()


def read_y4m(stream: BinaryIO | bytes) -> VideoChunk:
    """Parse an 8-bit 4:2:0 YUV4MPEG2 stream."""
    data = _read_all(stream)
    if not data.startswith(Y4M_MAGIC):
        raise BadMagic("stream does not start with YUV4MPEG2")
    eol = data.find(b"\n")
    if eol < 0:
        raise TruncatedFrame("unterminated Y4M header")
    tokens = data[len(Y4M_MAGIC):eol].decode("ascii", "replace").split()

    width = height = None
    fps = Fraction(25)
    chroma = "420"
    for tok in tokens:
        tag, val = tok[0], tok[1:]
        if tag == "W":
            width = int(val)
        elif tag == "H":
            height = int(val)
        elif tag == "F":
            num, _, den = val.partition(":")
            fps = Fraction(int(num), int(den or 1))
        elif tag == "C":
            chroma = val
    if width is None or height is None:
        raise UnsupportedFormat("Y4M header lacks W or H")
    if chroma not in _420_TAGS:
        raise UnsupportedFormat(f"only 8-bit 4:2:0 is supported, got C{chroma}")

    cw, ch = (width + 1) // 2, (height + 1) // 2
    ysize, csize = width * height, cw * ch
    frames = []
    pos = eol + 1
    while pos < len(data):
        if not data.startswith(b"FRAME", pos):
            raise TruncatedFrame(f"expected FRAME marker at byte {pos}")
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise TruncatedFrame("unterminated FRAME header")
        start = nl + 1
        end = start + ysize + 2 * csize
        if end > len(data):
            raise TruncatedFrame(f"frame {len(frames)} is truncated")
        buf = np.frombuffer(data, np.uint8, end - start, start)
        frames.append(
            Frame(
                buf[:ysize].reshape(height, width),
                buf[ysize:ysize + csize].reshape(ch, cw),
                buf[ysize + csize:].reshape(ch, cw),
            )
        )
        pos = end
    return VideoChunk(width, height, float(fps), tuple(frames))


def write_y4m(chunk: VideoChunk, stream: BinaryIO | None = None) -> bytes | None:
    fps = Fraction(chunk.fps).limit_denominator(1001)
    out = io.BytesIO()
    out.write(f"YUV4MPEG2 W{chunk.width} H{chunk.height} F{fps.numerator}:{fps.denominator} Ip A1:1 C420jpeg\n".encode())
    for frame in chunk.frames:
        f = frame.with_neutral_chroma()
        out.write(b"FRAME\n")
        out.write(f.luma.tobytes())
        out.write(f.cb.tobytes())
        out.write(f.cr.tobytes())
    if stream is None:
        return out.getvalue()
    stream.write(out.getvalue())
    return None


def read_raw_yuv(stream: BinaryIO | bytes, width: int, height: int, fps: float) -> VideoChunk:
    data = _read_all(stream)
    cw, ch = (width + 1) // 2, (height + 1) // 2
    ysize, csize = width * height, cw * ch
    fsize = ysize + 2 * csize
    if fsize == 0 or len(data) % fsize:
        raise SizeMismatch(f"{len(data)} bytes is not a whole number of {width}x{height} 4:2:0 frames")
    buf = np.frombuffer(data, np.uint8)
    frames = []
    for start in range(0, len(data), fsize):
        frames.append(
            Frame(
                buf[start:start + ysize].reshape(height, width),
                buf[start + ysize:start + ysize + csize].reshape(ch, cw),
                buf[start + ysize + csize:start + fsize].reshape(ch, cw),
            )
        )
    return VideoChunk(width, height, float(fps), tuple(frames))


def write_raw_yuv(chunk: VideoChunk) -> bytes:
    parts = []
    for frame in chunk.frames:
        f = frame.with_neutral_chroma()
        parts += [f.luma.tobytes(), f.cb.tobytes(), f.cr.tobytes()]
    return b"".join(parts)


def read_video(path, width=None, height=None, fps=None) -> VideoChunk:
    """Y4M by magic, otherwise raw YUV with explicit geometry."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data.startswith(Y4M_MAGIC):
        return read_y4m(data)
    if width is None or height is None:
        raise ValidationError(f"{path}: raw YUV needs width and height")
    return read_raw_yuv(data, int(width), int(height), float(fps or 25))


# ------------------------------------------------------------------------ GLCM


@dataclass(frozen=True)
class GlcmConfig:
    gray_levels: int = 8
    distance: int = 1
    directions: tuple[float, ...] = (0.0, 45.0, 90.0, 135.0)
    symmetric: bool = True

    def __post_init__(self):
        if self.gray_levels < 2:
            raise ValidationError("gray_levels must be at least 2")
        if self.distance < 1:
            raise ValidationError("distance must be at least 1")
        if not self.directions:
            raise ValidationError("at least one direction is required")

    def offsets(self) -> list[tuple[int, int]]:
        """(row, col) displacement per direction; 0 deg points right, 90 deg up."""
        out = []
        for deg in self.directions:
            rad = math.radians(deg)
            out.append((int(round(-self.distance * math.sin(rad))), int(round(self.distance * math.cos(rad)))))
        return out


def quantize(luma: np.ndarray, levels: int) -> np.ndarray:
    return (luma.astype(np.int64) * levels) >> 8


def glcm_matrix(frame: Frame | np.ndarray, config: GlcmConfig = GlcmConfig()) -> np.ndarray:
    """Normalised co-occurrence probabilities summed over all directions."""
    luma = frame.luma if isinstance(frame, Frame) else np.asarray(frame)
    h, w = luma.shape
    if h < 2 or w < 2:
        raise FrameTooSmall(f"GLCM needs at least 2x2 pixels, got {w}x{h}")
    L = config.gray_levels
    q = quantize(luma, L)
    counts = np.zeros(L * L, dtype=np.int64)
    for dy, dx in config.offsets():
        r0, r1 = max(0, -dy), h - max(0, dy)
        c0, c1 = max(0, -dx), w - max(0, dx)
        if r1 <= r0 or c1 <= c0:
            continue
        ref = q[r0:r1, c0:c1]
        nbr = q[r0 + dy:r1 + dy, c0 + dx:c1 + dx]
        counts += np.bincount((ref * L + nbr).ravel(), minlength=L * L)
    m = counts.reshape(L, L)
    if config.symmetric:
        m = m + m.T
    total = m.sum()
    if total == 0:
        raise FrameTooSmall(f"no pixel pairs at distance {config.distance} in a {w}x{h} frame")
    return m / total


def glcm_descriptors(frame: Frame | np.ndarray, config: GlcmConfig = GlcmConfig()) -> tuple[float, float, float, float, float]:
    """(contrast, correlation, energy, homogeneity, entropy) of one frame."""
    P = glcm_matrix(frame, config)
    L = P.shape[0]
    i, j = np.indices((L, L), dtype=float)
    contrast = float(np.sum(P * (i - j) ** 2))
    mu_r = float(np.sum(i * P))
    mu_c = float(np.sum(j * P))
    sd_r = math.sqrt(float(np.sum(P * (i - mu_r) ** 2)))
    sd_c = math.sqrt(float(np.sum(P * (j - mu_c) ** 2)))
    if sd_r * sd_c > 0:
        correlation = float(np.sum(P * (i - mu_r) * (j - mu_c))) / (sd_r * sd_c)
    else:
        correlation = 0.0
    energy = float(np.sum(P * P))
    homogeneity = float(np.sum(P / (1.0 + np.abs(i - j))))
    nz = P[P > 0]
    entropy = float(-np.sum(nz * np.log(nz)))
    return contrast, correlation, energy, homogeneity, entropy


# ---------------------------------------------------------- temporal / SI-TI


def _luma(frame) -> np.ndarray:
    return frame.luma if isinstance(frame, Frame) else np.asarray(frame)


def temporal_complexity(prev: Frame, nxt: Frame) -> float:
    """Mean absolute luma difference per pixel."""
    a, b = _luma(prev), _luma(nxt)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a.astype(np.int32) - b.astype(np.int32))))


def sobel_magnitude(luma: np.ndarray) -> np.ndarray:
    """3x3 Sobel gradient magnitude on interior pixels only."""
    y = luma.astype(float)
    gx = (y[:-2, 2:] + 2 * y[1:-1, 2:] + y[2:, 2:]) - (y[:-2, :-2] + 2 * y[1:-1, :-2] + y[2:, :-2])
    gy = (y[2:, :-2] + 2 * y[2:, 1:-1] + y[2:, 2:]) - (y[:-2, :-2] + 2 * y[:-2, 1:-1] + y[:-2, 2:])
    return np.hypot(gx, gy)


def spatial_information(frame: Frame) -> float:
    luma = _luma(frame)
    if luma.shape[0] < 3 or luma.shape[1] < 3:
        raise FrameTooSmall("SI needs at least 3x3 pixels")
    return float(np.std(sobel_magnitude(luma)))


def si_ti(chunk: VideoChunk) -> tuple[float, float]:
    if chunk.frame_count < 2:
        raise TooFewFrames("SI/TI needs at least two frames")
    si = max(spatial_information(f) for f in chunk.frames)
    ti = max(
        float(np.std(b.luma.astype(float) - a.luma.astype(float)))
        for a, b in zip(chunk.frames, chunk.frames[1:])
    )
    return si, ti


# ---------------------------------------------------------------- aggregation


@dataclass(frozen=True)
class FeatureVector:
    glcm_contrast: float
    glcm_correlation: float
    glcm_energy: float
    glcm_homogeneity: float
    glcm_entropy: float
    tc_mean: float
    tc_std: float
    si: float
    ti: float

    def __post_init__(self):
        for f in fields(self):
            v = float(getattr(self, f.name))
            if not math.isfinite(v):
                raise ValidationError(f"feature {f.name} is not finite")
            object.__setattr__(self, f.name, v)

    def to_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "FeatureVector":
        return cls(*(float(v) for v in values))


FEATURE_NAMES: tuple[str, ...] = tuple(f.name for f in fields(FeatureVector))


def chunk_features(chunk: VideoChunk, config: GlcmConfig = GlcmConfig(), workers: int = 1) -> FeatureVector:
    """Per-frame GLCM averaged in frame order, TC over consecutive pairs, SI/TI."""
    if chunk.frame_count < 2:
        raise TooFewFrames("feature extraction needs at least two frames")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_frame = list(pool.map(lambda f: glcm_descriptors(f, config), chunk.frames))
    else:
        per_frame = [glcm_descriptors(f, config) for f in chunk.frames]
    glcm = np.mean(np.array(per_frame), axis=0)
    tcs = np.array([temporal_complexity(a, b) for a, b in zip(chunk.frames, chunk.frames[1:])])
    si, ti = si_ti(chunk)
    return FeatureVector(*glcm, float(tcs.mean()), float(tcs.std()), si, ti)


def detect_scene_change(frames: Sequence[Frame] | VideoChunk, window: int = 16, threshold: float = 8.0) -> list[int]:
    """Frame indices t where TC(t-1, t) spikes above ``threshold`` times the
    median TC of the preceding ``window`` pairs."""
    if isinstance(frames, VideoChunk):
        frames = frames.frames
    if len(frames) < 2:
        raise TooFewFrames("scene-change detection needs at least two frames")
    tcs = [temporal_complexity(a, b) for a, b in zip(frames, frames[1:])]
    cuts = []
    for k in range(1, len(tcs)):
        history = tcs[max(0, k - window):k]
        if tcs[k] > float(np.median(history)) * threshold:
            cuts.append(k + 1)
    return cuts


FEATURE_CSV_FIELDS = ("chunk_id",) + FEATURE_NAMES


def write_feature_csv(stream, rows: Iterable[tuple[str, FeatureVector]]) -> None:
    writer = csv.writer(stream)
    writer.writerow(FEATURE_CSV_FIELDS)
    for chunk_id, fv in rows:
        writer.writerow([chunk_id, *(repr(v) for v in astuple(fv))])


def read_feature_csv(path) -> dict[str, FeatureVector]:
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(FEATURE_CSV_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            out[row["chunk_id"]] = FeatureVector(*(float(row[n]) for n in FEATURE_NAMES))
    return out
