import math

import pytest

from nfirs.config import ScenarioConfig, load_config
from nfirs.errors import ConfigError


def test_defaults(desk):
    assert desk.n_r == 64
    assert desk.d == pytest.approx(desk.wavelength / 2)
    assert desk.tensor_shape == (16, 16, 16)
    assert desk.uniqueness_holds()


def test_paper_preset():
    cfg = ScenarioConfig.paper()
    assert (cfg.n_y, cfg.n_z, cfg.n_r, cfg.n_t, cfg.n_b) == (64, 8, 512, 64, 64)
    assert (cfg.g_z, cfg.g_y, cfg.g_u) == (300, 300, 2000)
    assert cfg.theta_range == (0.0, 2 * math.pi)


@pytest.mark.parametrize("changes", [
    dict(n_y=0), dict(d=-1.0), dict(f_s=200e9), dict(p=300), dict(dist_range=(3.0, 2.0)),
    dict(dist_range=(1.0, 1000.0)), dict(tau_bs=-1e-9),
])
def test_invalid(changes):
    with pytest.raises(ConfigError):
        ScenarioConfig(**changes)


def test_uniqueness_condition():
    cfg = ScenarioConfig(q=3, n_paths=4)
    assert not cfg.uniqueness_holds()
    assert cfg.uniqueness_holds(3)


def test_dict_roundtrip_and_digest():
    cfg = ScenarioConfig(alpha_bs=0.5 - 0.25j, n_paths=3)
    again = ScenarioConfig.from_dict(cfg.to_dict())
    assert again == cfg
    assert again.digest() == cfg.digest()
    assert cfg.digest() != ScenarioConfig().digest()


def test_unknown_key():
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict({"bogus": 1})


def test_load_toml(tmp_path):
    f = tmp_path / "s.toml"
    f.write_text('preset = "paper"\nn_paths = 2\ndist_range = [15.0, 20.0]\n')
    cfg = load_config(f, seed=7)
    assert cfg.n_r == 512 and cfg.n_paths == 2 and cfg.dist_range == (15.0, 20.0) and cfg.seed == 7
    assert cfg.d == pytest.approx(cfg.wavelength / 2)


def test_load_toml_frequency_resets_spacing(tmp_path):
    f = tmp_path / "s.toml"
    f.write_text("f_c = 50e9\n")
    cfg = load_config(f)
    assert cfg.d == pytest.approx(cfg.wavelength / 2)


def test_load_toml_bad_preset(tmp_path):
    f = tmp_path / "s.toml"
    f.write_text('preset = "huge"\n')
    with pytest.raises(ConfigError):
        load_config(f)
