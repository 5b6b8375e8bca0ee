import json

import pytest

from ensemble_ladder.config import AppConfig, config_from_dict, dump_config, load_config, with_overrides
from ensemble_ladder.errors import ValidationError
from ensemble_ladder.rq_core import DEFAULT_GRID, ResolutionSet


def test_defaults():
    cfg = AppConfig()
    assert cfg.bitrate_grid() == DEFAULT_GRID
    assert cfg.resolution_set() == ResolutionSet.default()
    assert cfg.fast is False and cfg.seed == 0 and cfg.workers == 1
    assert config_from_dict(None) == cfg


def test_yaml_and_json_load(tmp_path):
    y = tmp_path / "c.yaml"
    y.write_text("schema_version: 1\nseed: 7\nfast: true\ngrid: {points: 50}\ngbt: {rounds: 12}\n"
                 "gp: {length_scales: [1, 2]}\nglcm: {gray_levels: 16, directions: [0]}\n")
    cfg = load_config(y)
    assert cfg.seed == 7 and cfg.fast and cfg.grid.points == 50 and cfg.gbt.rounds == 12
    assert cfg.gp.length_scales == (1.0, 2.0) and cfg.glcm.gray_levels == 16 and cfg.glcm.directions == (0.0,)
    j = tmp_path / "c.json"
    j.write_text(json.dumps(cfg.to_dict()))
    assert load_config(j) == cfg
    # the dumped YAML loads back to the same configuration
    y.write_text(dump_config(cfg))
    assert load_config(y) == cfg
    (tmp_path / "empty.yaml").write_text("")
    assert load_config(tmp_path / "empty.yaml") == AppConfig()


@pytest.mark.parametrize(
    "text, match",
    [
        ("bogus: 1\n", "unknown"),
        ("gbt: {depth: 3}\n", "unknown"),
        ("schema_version: 2\n", "schema_version"),
        ("grid: 5\n", "mapping"),
        ("- 1\n- 2\n", "mapping"),
        ("resolutions: [[960, 541], [1280, 720]]\n", "even"),
        ("seed: [\n", "parse"),
    ],
)
def test_bad_configs(tmp_path, text, match):
    p = tmp_path / "bad.yaml"
    p.write_text(text)
    with pytest.raises(ValidationError, match=match):
        load_config(p)


def test_overrides_only_apply_given_values():
    cfg = AppConfig(seed=3, workers=2)
    same = with_overrides(cfg, seed=None, workers=None, grid_points=None)
    assert same == cfg
    new = with_overrides(cfg, seed=9, grid_min_bps=128.0, grid_points=40)
    assert new.seed == 9 and new.workers == 2
    assert new.grid.min_bps == 128.0 and new.grid.points == 40 and new.grid.max_bps == cfg.grid.max_bps
