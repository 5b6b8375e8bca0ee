"""Lanczos-3 resampling and scaled PSNR."""

from __future__ import annotations

import math

import numpy as np

from ..errors import BadTarget, DimensionMismatch
from ..video_features import Frame, VideoChunk

LANCZOS_A = 3
PSNR_CAP_DB = 100.0


def lanczos_kernel(x: np.ndarray, a: int = LANCZOS_A) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) < a, np.sinc(x) * np.sinc(x / a), 0.0)


def lanczos_weights(n_in: int, n_out: int, a: int = LANCZOS_A) -> np.ndarray:
    """(n_out, n_in) matrix; rows sum to one, taps beyond the edge clamp.

    Downscaling widens the kernel by the scale factor so it also acts as
    the anti-alias filter.
    """
    scale = n_in / n_out
    support = max(scale, 1.0)
    W = np.zeros((n_out, n_in))
    for o in range(n_out):
        center = (o + 0.5) * scale - 0.5
        lo = math.floor(center - a * support) + 1
        hi = math.ceil(center + a * support) - 1
        taps = np.arange(lo, hi + 1)
        w = lanczos_kernel((taps - center) / support, a)
        np.add.at(W[o], np.clip(taps, 0, n_in - 1), w)
        W[o] /= W[o].sum()
    return W


def resize_plane(plane: np.ndarray, width: int, height: int) -> np.ndarray:
    h, w = plane.shape
    if (w, h) == (width, height):
        return np.array(plane, dtype=np.uint8)
    rows = lanczos_weights(h, height)
    cols = lanczos_weights(w, width)
    out = rows @ plane.astype(float) @ cols.T
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def lanczos_resize(frame: Frame, target_w: int, target_h: int) -> Frame:
    if target_w <= 0 or target_h <= 0 or target_w % 2 or target_h % 2:
        raise BadTarget(f"target {target_w}x{target_h} must be positive and even")
    luma = resize_plane(frame.luma, target_w, target_h)
    if frame.cb is None:
        return Frame(luma)
    cw, ch = target_w // 2, target_h // 2
    return Frame(luma, resize_plane(frame.cb, cw, ch), resize_plane(frame.cr, cw, ch))


def resize_chunk(chunk: VideoChunk, width: int, height: int) -> VideoChunk:
    return VideoChunk(width, height, chunk.fps, tuple(lanczos_resize(f, width, height) for f in chunk.frames))


def scaled_psnr(native: VideoChunk, reconstructed: VideoChunk) -> float:
    """Luma PSNR over all frames; the reconstruction must already be at native size."""
    if (native.width, native.height) != (reconstructed.width, reconstructed.height):
        raise DimensionMismatch("reconstruction must be upsampled to native resolution first")
    if native.frame_count != reconstructed.frame_count or native.frame_count == 0:
        raise DimensionMismatch("frame counts differ")
    sse = 0.0
    for a, b in zip(native.frames, reconstructed.frames):
        d = a.luma.astype(np.int64) - b.luma.astype(np.int64)
        sse += float(np.sum(d * d))
    mse = sse / (native.frame_count * native.width * native.height)
    if mse < 255.0**2 * 1e-10:
        return PSNR_CAP_DB
    return 10.0 * math.log10(255.0**2 / mse)
