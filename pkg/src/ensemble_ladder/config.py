"""Application configuration: one YAML (or JSON) tree with a schema version.

Every field has a default, so an empty file is valid.  The CLI loads the
file first and then applies its flags on top.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import ValidationError
from .learners import GbtHyper, GpHyper
from .rq_core import BitrateGrid, ResolutionSet
from .video_features import GlcmConfig

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class GridConfig:
    min_bps: float = 64.0
    max_bps: float = 131072.0
    points: int = 100

    def grid(self) -> BitrateGrid:
        return BitrateGrid.from_bps(self.min_bps, self.max_bps, self.points)


@dataclass(frozen=True)
class AppConfig:
    resolutions: tuple[tuple[int, int], ...] = ((960, 540), (1280, 720), (1920, 1080), (3840, 2160))
    grid: GridConfig = GridConfig()
    glcm: GlcmConfig = GlcmConfig()
    gbt: GbtHyper = GbtHyper()
    gp: GpHyper = field(default_factory=GpHyper)
    fast: bool = False
    encoder_template: str | None = None
    cache_dir: str | None = None
    seed: int = 0
    workers: int = 1
    schema_version: int = SCHEMA_VERSION

    def resolution_set(self) -> ResolutionSet:
        return ResolutionSet.from_dims(self.resolutions)

    def bitrate_grid(self) -> BitrateGrid:
        return self.grid.grid()

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "resolutions": [list(r) for r in self.resolutions],
            "grid": dataclasses.asdict(self.grid),
            "glcm": {
                "gray_levels": self.glcm.gray_levels,
                "distance": self.glcm.distance,
                "directions": list(self.glcm.directions),
                "symmetric": self.glcm.symmetric,
            },
            "gbt": self.gbt.to_dict(),
            "gp": self.gp.to_dict(),
            "fast": self.fast,
            "encoder_template": self.encoder_template,
            "cache_dir": self.cache_dir,
            "seed": self.seed,
            "workers": self.workers,
        }


def _section(cls, data: Any, name: str, tuples=()):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ValidationError(f"config section {name!r} must be a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValidationError(f"config section {name!r} has unknown key(s) {sorted(unknown)}")
    kwargs = {k: (tuple(float(x) for x in v) if k in tuples else v) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ValidationError(f"config section {name!r}: {exc}") from None


def config_from_dict(data: dict | None) -> AppConfig:
    data = dict(data or {})
    version = data.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ValidationError(f"config schema_version {version!r} is not supported (expected {SCHEMA_VERSION})")
    known = {f.name for f in dataclasses.fields(AppConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValidationError(f"unknown config key(s) {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    if "resolutions" in data:
        try:
            kwargs["resolutions"] = tuple((int(w), int(h)) for w, h in data["resolutions"])
        except (TypeError, ValueError):
            raise ValidationError("resolutions must be a list of [width, height] pairs") from None
    if "grid" in data:
        kwargs["grid"] = _section(GridConfig, data["grid"], "grid")
    if "glcm" in data:
        kwargs["glcm"] = _section(GlcmConfig, data["glcm"], "glcm", tuples=("directions",))
    if "gbt" in data:
        kwargs["gbt"] = _section(GbtHyper, data["gbt"], "gbt")
    if "gp" in data:
        kwargs["gp"] = _section(GpHyper, data["gp"], "gp", tuples=("length_scales", "signal_variances", "noise_variances"))
    for key in ("fast", "encoder_template", "cache_dir", "seed", "workers"):
        if key in data:
            kwargs[key] = data[key]
    cfg = AppConfig(**kwargs)
    cfg.resolution_set()  # validates dimensions early
    return cfg


def load_config(path) -> AppConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ValidationError(f"{path}: cannot parse config ({exc})") from None
    if data is not None and not isinstance(data, dict):
        raise ValidationError(f"{path}: config root must be a mapping")
    return config_from_dict(data)


def dump_config(cfg: AppConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)


def with_overrides(cfg: AppConfig, **changes) -> AppConfig:
    """Apply flag values; ``None`` means the flag was not given."""
    grid_changes = {k[5:]: v for k, v in changes.items() if k.startswith("grid_") and v is not None}
    top = {k: v for k, v in changes.items() if not k.startswith("grid_") and v is not None}
    if grid_changes:
        top["grid"] = dataclasses.replace(cfg.grid, **grid_changes)
    return dataclasses.replace(cfg, **top)
