"""Synthetic per-title dataset.

Each sequence draws two latents in [0, 1]: spatial and temporal
complexity.  Fixed affine maps turn them into a feature vector (plus
bounded noise) and into saturating rate-quality curves, which are then
tabulated on the grid to give the surface and its ground-truth ladder.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..ensemble import SyntheticParams, synthetic_quality
from ..rq_core import (
    DEFAULT_GRID,
    BitrateGrid,
    BitrateLadder,
    RateQualitySurface,
    ResolutionSet,
    build_curve,
    cross_over_bitrates,
)
from ..video_features import FEATURE_NAMES, FeatureVector

# feature = bias + w_spatial * z1 + w_temporal * z2; tc_std is deliberately uninformative
_FEATURE_MAP = {
    "glcm_contrast": (0.3, 4.0, 0.0),
    "glcm_correlation": (0.95, -0.5, 0.0),
    "glcm_energy": (0.55, -0.45, 0.0),
    "glcm_homogeneity": (0.95, -0.45, 0.0),
    "glcm_entropy": (1.2, 2.2, 0.0),
    "tc_mean": (0.5, 0.0, 18.0),
    "tc_std": (1.5, 0.0, 0.0),
    "si": (15.0, 90.0, 0.0),
    "ti": (3.0, 0.0, 45.0),
}

_FEATURE_FLOOR = {
    "glcm_contrast": 0.0,
    "glcm_energy": 1e-3,
    "glcm_homogeneity": 1e-3,
    "glcm_entropy": 0.0,
    "tc_mean": 0.0,
    "tc_std": 0.0,
    "si": 0.0,
    "ti": 0.0,
}
_FEATURE_CEIL = {"glcm_correlation": 1.0, "glcm_energy": 1.0, "glcm_homogeneity": 1.0}


@dataclass(frozen=True)
class SyntheticDatasetSpec:
    sequences: int = 100
    seed: int = 0
    latent_low: float = 0.0
    latent_high: float = 1.0
    # bounded uniform noise, as a fraction of each feature's latent span
    feature_noise: float = 0.25
    # per-resolution curve parameters at zero latent
    ceilings: tuple[float, ...] = (38.0, 42.0, 46.0, 50.0)
    steepness: tuple[float, ...] = (1.2, 1.0, 0.8, 0.6)
    onsets: tuple[float, ...] = (5.0, 6.0, 7.0, 8.0)
    # onset shift per unit latent, per resolution
    onset_gain_spatial: tuple[float, ...] = (0.0, 0.7, 1.4, 2.1)
    onset_gain_temporal: tuple[float, ...] = (0.0, 0.5, 1.0, 1.5)
    # relative steepness loss per unit temporal latent
    steepness_temporal: float = 0.2
    # quality-independent curve jitter (log2 units) not visible in features
    onset_jitter: float = 0.3
    grid: BitrateGrid = DEFAULT_GRID
    resolutions: ResolutionSet = field(default_factory=ResolutionSet.default)

    def params_for(self, z1: float, z2: float, jitter=None) -> SyntheticParams:
        jitter = np.zeros(len(self.onsets)) if jitter is None else np.asarray(jitter)
        onsets = [
            o + gs * z1 + gt * z2 + j
            for o, gs, gt, j in zip(self.onsets, self.onset_gain_spatial, self.onset_gain_temporal, jitter)
        ]
        k = [v * (1.0 - self.steepness_temporal * z2) for v in self.steepness]
        return SyntheticParams(self.ceilings, tuple(k), tuple(onsets))

    def features_for(self, z1: float, z2: float, noise=None) -> FeatureVector:
        noise = np.zeros(len(FEATURE_NAMES)) if noise is None else np.asarray(noise)
        span = self.latent_high - self.latent_low
        values = []
        for name, u in zip(FEATURE_NAMES, noise):
            bias, ws, wt = _FEATURE_MAP[name]
            scale = max(abs(ws), abs(wt), abs(bias) * 0.2) * span
            v = bias + ws * z1 + wt * z2 + self.feature_noise * scale * u
            v = max(v, _FEATURE_FLOOR.get(name, -np.inf))
            v = min(v, _FEATURE_CEIL.get(name, np.inf))
            values.append(v)
        return FeatureVector(*values)


@dataclass(frozen=True)
class SyntheticSequence:
    chunk_id: str
    features: FeatureVector
    surface: RateQualitySurface
    gt_ladder: BitrateLadder
    params: SyntheticParams
    latents: tuple[float, float]


def tabulate_surface(params: SyntheticParams, grid: BitrateGrid, resolutions: ResolutionSet, chunk_id: str = "") -> RateQualitySurface:
    rates = grid.rates
    curves = tuple(
        build_curve(res, zip(rates, synthetic_quality(params, res.index, rates))) for res in resolutions
    )
    return RateQualitySurface(resolutions, curves, chunk_id)


def make_sequence(spec: SyntheticDatasetSpec, chunk_id: str, z1: float, z2: float, noise=None, jitter=None) -> SyntheticSequence:
    params = spec.params_for(z1, z2, jitter)
    surface = tabulate_surface(params, spec.grid, spec.resolutions, chunk_id)
    ladder = cross_over_bitrates(surface, spec.grid)
    return SyntheticSequence(chunk_id, spec.features_for(z1, z2, noise), surface, ladder, params, (z1, z2))


def generate_synthetic_dataset(spec: SyntheticDatasetSpec = SyntheticDatasetSpec()) -> list[SyntheticSequence]:
    rng = np.random.default_rng(spec.seed)
    n_res = len(spec.resolutions)
    out = []
    for i in range(spec.sequences):
        z1, z2 = rng.uniform(spec.latent_low, spec.latent_high, size=2)
        noise = rng.uniform(-1.0, 1.0, size=len(FEATURE_NAMES))
        jitter = rng.uniform(-spec.onset_jitter, spec.onset_jitter, size=n_res)
        # keep resolution 1 as the anchor so onsets stay strictly increasing
        jitter[0] = 0.0
        out.append(make_sequence(spec, f"syn{i:04d}", float(z1), float(z2), noise, jitter))
    return out
