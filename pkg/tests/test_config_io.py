from hypothesis import given, settings, strategies as st
import pytest
from pytest import approx

from engine.config_io import (
    ConfigError,
    SystemConfig,
    config_digest,
    dump_config_text,
    load_config,
    parse_config_text,
    parse_number,
    save_config,
    save_overlay,
)
from engine.model import Basis, ChannelPlan, LinkParams, NoiseProfile

MINIMAL = """
[channels.1]
symbol_rate_hz = 10e6
if_freq_hz = 64e6
mod_variance_snu = 5.8
"""


def test_bundled_config_loads(config_path):
    cfg = load_config(config_path)
    assert len(cfg.plan.channels) == 8
    assert cfg.plan.spacing_hz == 40e6
    assert [c.basis for c in cfg.plan.channels] == [Basis.AMPLITUDE] * 4 + [Basis.PHASE] * 4
    assert cfg.link.eta_det == 0.83
    assert cfg.finite.n_key == 8_750_000
    assert cfg.xi_factor(4) == approx(1.8093)
    assert dict(cfg.calibration_targets)["reach_finite"] == 45.6
    assert cfg.noise.nu_det(64e6) == approx(NoiseProfile.synthetic_default().nu_det(64e6))


def test_minimal_config_takes_defaults():
    cfg = parse_config_text([MINIMAL])
    assert cfg.plan.channels[0].basis is Basis.AMPLITUDE
    assert cfg.link == LinkParams()
    assert cfg.plan.sample_rate_hz == 1.28e9
    assert cfg.excess_noise(1) == approx(0.05)
    assert cfg.excess_noise(2) == approx(0.05 * 1.63)


def test_xi_factor_falls_back_to_largest_defined():
    cfg = parse_config_text([MINIMAL + "\n[scaling]\nchannels_1 = 1\nchannels_2 = 1.5\n"])
    assert cfg.xi_factor(2) == 1.5
    assert cfg.xi_factor(7) == approx(1.8093)


def test_unknown_key_names_key_and_line():
    text = MINIMAL + "\n[link]\neta_det = 0.8\nbogus = 1\n"
    with pytest.raises(ConfigError) as err:
        parse_config_text([text])
    assert err.value.key == "bogus"
    assert err.value.line == text.splitlines().index("bogus = 1") + 1
    assert "bogus" in str(err.value)


def test_unknown_section():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config_text([MINIMAL + "\n[laser]\npower = 1\n"])


def test_bad_number_names_key():
    with pytest.raises(ConfigError) as err:
        parse_config_text([MINIMAL + "\n[link]\neta_det = 0x10\n"])
    assert err.value.key == "link.eta_det"


@pytest.mark.parametrize("text", ["1", "-2.5", "+3e6", ".5", "1.e-3"])
def test_parse_number_accepts_decimals(text):
    assert parse_number(text) == float(text)


@pytest.mark.parametrize("text", ["nan", "inf", "1/2", "0x10", "", "1,5"])
def test_parse_number_rejects(text):
    with pytest.raises(ConfigError):
        parse_number(text)


def test_invalid_values_become_config_errors():
    with pytest.raises(ConfigError):
        parse_config_text([MINIMAL + "\n[link]\neta_det = 1.5\n"])
    with pytest.raises(ConfigError):
        parse_config_text([MINIMAL.replace("amplitude", "") + "basis = diagonal\n"])
    with pytest.raises(ConfigError):
        parse_config_text(["[link]\neta_det = 0.8\n"])


def test_missing_file_is_file_not_found(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "nope.ini")


def test_overlay_replaces_single_keys(tmp_path, config_path):
    overlay = tmp_path / "cal.ini"
    save_overlay(overlay, {"noise": {"excess_noise_floor_snu": 0.012, "detector_scale": 6.2}}, comment="fit\nmore")
    base = load_config(config_path)
    cfg = load_config(config_path, [overlay])
    assert cfg.noise.excess_noise_floor_snu == 0.012
    assert cfg.noise.detector_scale == 6.2
    assert cfg.noise.detector_ratio == base.noise.detector_ratio
    assert cfg.plan == base.plan
    assert config_digest(cfg) != config_digest(base)


def test_save_load_is_bit_exact(tmp_path, config_path):
    cfg = load_config(config_path)
    out = tmp_path / "copy.ini"
    save_config(out, cfg)
    again = load_config(out)
    assert again == cfg
    assert dump_config_text(again) == dump_config_text(cfg)
    assert config_digest(again) == config_digest(cfg)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 1.0), st.floats(0.1, 50.0), st.floats(0.0, 0.5), st.integers(0, 300))
def test_text_round_trip_keeps_floats(eta, v_mod, floor, length):
    cfg = SystemConfig(plan=ChannelPlan.uniform(2, mod_variance_snu=v_mod),
                       link=LinkParams(fiber_length_km=float(length), eta_det=eta),
                       noise=NoiseProfile.synthetic_default().calibrated(floor, 1.0))
    again = parse_config_text([dump_config_text(cfg)])
    assert again == cfg


def test_digest_is_stable(config_path):
    assert config_digest(load_config(config_path)) == config_digest(load_config(config_path))
    assert len(config_digest(load_config(config_path))) == 64


def test_calibration_keys_validated():
    with pytest.raises(ConfigError):
        parse_config_text([MINIMAL + "\n[calibration]\nreach = 10\n"])
    cfg = parse_config_text([MINIMAL + "\n[calibration]\nreach_finite_4ch = 42.5\n"])
    assert cfg.calibration_targets == (("reach_finite_4ch", 42.5),)
