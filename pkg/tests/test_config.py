from pathlib import Path

import pytest
import yaml

from roadnet.config import CONFIG_ENV, ConfigError, apply_override, default_dict, load_config, validate_paths


def test_shipped_defaults():
    d = default_dict()
    assert d["qa"]["var_lap_max"] == 10000
    assert d["qa"]["mean_int_max"] == 0.45
    assert d["morph"]["kernel_size"] == 11
    assert d["morph"]["refine_min_len"] == 500
    assert d["sampling"]["sample_interval"] == 0.01
    assert d["sampling"]["max_match_dist"] == 0.1
    assert d["sampling"]["k"] == 3
    assert d["zoom"] == 17 and d["tile_size"] == 256


def test_load_defaults_builds_params(monkeypatch):
    monkeypatch.delenv(CONFIG_ENV, raising=False)
    cfg = load_config()
    assert cfg.qa.var_lap_max == 10000.0
    assert cfg.morph.kernel_size == 11
    assert cfg.sampling.k == 3
    assert cfg.stats.did_metrics == ["ARL", "RRL", "RRPC"]


def test_file_paths_relative_to_config(tmp_path, monkeypatch):
    monkeypatch.chdir("/")
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump({"tile_root": "imgs", "morph": {"kernel_size": 9}}))
    cfg = load_config(p)
    assert cfg.tile_root == tmp_path / "imgs"
    assert cfg.morph.kernel_size == 9
    assert cfg.morph.refine_min_len == 500


def test_env_variable_and_overrides(tmp_path, monkeypatch):
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump({"zoom": 16}))
    monkeypatch.setenv(CONFIG_ENV, str(p))
    cfg = load_config(overrides=["morph.kernel_size=7", "years=[2015, 2019]"])
    assert cfg.zoom == 16
    assert cfg.morph.kernel_size == 7
    assert cfg.years == [2015, 2019]
    assert cfg.snapshot()["morph"]["kernel_size"] == 7


def test_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "b.yaml"
    bad.write_text(yaml.safe_dump({"colour": "blue"}))
    with pytest.raises(ConfigError, match="colour"):
        load_config(bad)
    with pytest.raises(ConfigError):
        load_config(overrides=["morph.kernel_size=8"])
    with pytest.raises(ConfigError):
        load_config(overrides=["morph.nope=1"])
    with pytest.raises(ConfigError):
        apply_override(default_dict(), "no_equals_sign")


def test_validate_paths(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump({"tile_root": "t"}))
    cfg = load_config(p)
    with pytest.raises(ConfigError):
        validate_paths(cfg, ("tile_root",))
    (tmp_path / "t").mkdir()
    validate_paths(cfg, ("tile_root",))
    with pytest.raises(ConfigError):
        validate_paths(cfg, ("panel_csv",))
    assert isinstance(cfg.output_dir, Path)
