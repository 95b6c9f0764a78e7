import json
from pathlib import Path

import pytest

from bifire.config import RunConfig, load_config
from bifire.errors import ConfigError

from conftest import tiny_config_1d

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_shipped_configs_validate():
    for name in ("desk_1d", "desk_2d"):
        cfg = load_config(CONFIGS / f"{name}.json")
        assert cfg.m <= cfg.M
    c2 = load_config(CONFIGS / "desk_2d.json")
    assert c2.dim == 2 and c2.box.names == ("u_wx", "u_wy", "S_e0", "alpha")
    assert not c2.lf_params.radiation_enabled and c2.hf_params.radiation_enabled


def test_defaults_and_overrides(monkeypatch):
    cfg = RunConfig.from_dict(tiny_config_1d())
    assert cfg.beta == 1.0 and cfg.lam == 1e-6
    assert cfg.normalization.S_e_scale == 0.16
    assert cfg.indicator["omega"] == 0.85
    monkeypatch.setenv("BIFIRE_WORKERS", "3")
    monkeypatch.setenv("BIFIRE_OUTPUT_DIR", "/tmp/x")
    assert cfg.workers == 3 and str(cfg.output_dir) == "/tmp/x"


@pytest.mark.parametrize("change,match", [
    ({"m": 20}, "must not exceed"),
    ({"M": 0}, "minimum"),
    ({"bogus": 1}, "Additional properties"),
    ({"case": "3d"}, "case"),
    ({"box": [{"name": "u_w", "lower": 1, "upper": 2}]}, "box for case"),
    ({"hf_grid": {"lx": 900, "dx": 5, "dt": 0.1, "t_final": 900}}, "same domain"),
    ({"hf_grid": {"lx": 1000, "dx": 5, "dt": 0.1, "t_final": 800}}, "t_final"),
    ({"physics": {"D_b": -1}}, "non-negative"),
    ({"normalization": {"T_scale": 100}}, "T_scale"),
])
def test_invalid_configs(change, match):
    with pytest.raises(ConfigError, match=match):
        RunConfig.from_dict(tiny_config_1d(**change))


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")
    p = tmp_path / "bad.json"
    p.write_text('{\n "case": "1d",\n oops\n}')
    with pytest.raises(ConfigError, match=":3:"):
        load_config(p)
    p.write_text(json.dumps(tiny_config_1d()))
    assert load_config(p).M == 12
