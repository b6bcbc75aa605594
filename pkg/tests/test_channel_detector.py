import math

import numpy as np
import pytest
from pytest import approx

from engine.channel_detector import (
    DetectionConfig,
    NoiseShaper,
    apply_channel,
    calibrate_shot_noise,
    homodyne_detect,
    integer_samples_per_symbol,
    shaping_gain,
    simulate_both_bases,
    simulate_link,
)
from engine.dsp_chain import SampleRateError, Waveform, derive_rng, design_bessel_lpf
from engine.estimation import estimate_channel
from engine.model import (
    Basis,
    ChannelPlan,
    ChannelSpec,
    LinkParams,
    NoiseProfile,
    PiecewiseLinear,
    PilotTone,
)

FS = 1.28e9
NOISELESS = dict(shot_noise_on=False, electronic_noise_on=False, carrier_noise_on=False, excess_noise_on=False)


def _slope(rs):
    return float(np.dot(rs.alice, rs.bob) / np.dot(rs.alice, rs.alice))


# ====== channel and detector ======

def test_apply_channel():
    w = Waveform(np.array([1.0, -2.0, 4.0]), FS)
    assert np.array_equal(apply_channel(w, 1.0).samples, w.samples)
    assert list(apply_channel(w, 0.25).samples) == [0.5, -1.0, 2.0]
    with pytest.raises(ValueError):
        apply_channel(w, 0.0)
    with pytest.raises(ValueError):
        apply_channel(w, 1.5)


def test_channel_scales_variance():
    x = np.random.default_rng(1).normal(0, math.sqrt(5.8), 200_000)
    out = apply_channel(Waveform(x, FS), 0.3).samples
    assert np.var(out) == approx(0.3 * np.var(x), rel=1e-12)


def test_detector_without_noise_is_efficiency_scaling():
    w = Waveform(np.random.default_rng(2).standard_normal(5000), FS)
    cfg = DetectionConfig(shot_noise_on=False, electronic_noise_on=False, carrier_noise_on=False,
                          noise=NoiseProfile.synthetic_default())
    out = homodyne_detect(w, cfg, 0.5, 0.83)
    assert np.array_equal(out.samples, math.sqrt(0.83) * w.samples)


def test_shot_noise_calibration_is_cached_and_positive():
    rx = design_bessel_lpf(4, 10e6)
    sigma = calibrate_shot_noise(FS, rx)
    assert sigma > 0
    assert calibrate_shot_noise(FS, rx) == sigma
    assert calibrate_shot_noise(FS, rx, design_bessel_lpf(4, 17.58e6)) != sigma


def test_shaping_gain_combines_electronic_and_carrier_terms():
    noise = NoiseProfile(detector_ratio=PiecewiseLinear.constant(0.02),
                         carrier_noise=PiecewiseLinear(((0.0, 4.0), (20e6, 4.0), (22e6, 0.0))))
    f = np.array([10e6, 100e6])
    gain = shaping_gain(noise, f, 0.5, 0.8)
    assert gain ** 2 == approx([0.02 / 0.5 + 4.0 * 0.8 * 0.5, 0.02 / 0.5])
    assert shaping_gain(noise, f, 0.5, 0.8, electronic_noise_on=False)[1] == 0.0


def test_noise_shaper_streams_like_one_pass():
    def flat(f):
        return np.full_like(f, 0.3)

    one = NoiseShaper(flat, FS, derive_rng(3, 0), numtaps=257).draw(5000)
    split = NoiseShaper(flat, FS, derive_rng(3, 0), numtaps=257)
    parts = np.concatenate([split.draw(100), split.draw(4900)])
    assert parts == approx(one, abs=1e-12)
    assert np.var(one) == approx(0.09, rel=0.1)


# ====== full link ======

def test_noiseless_slope_is_sqrt_eta(single_plan):
    rs = simulate_link(single_plan, LinkParams(), NoiseProfile(), 10_000, seed=1, **NOISELESS)[1]
    assert _slope(rs) == approx(math.sqrt(0.83), rel=0.02)


def test_noiseless_slope_follows_transmittance(single_plan):
    rs = simulate_link(single_plan, LinkParams(transmittance=0.5), NoiseProfile(), 10_000, seed=1, **NOISELESS)[1]
    assert _slope(rs) == approx(math.sqrt(0.5 * 0.83), rel=0.02)


def test_pilot_tone_at_channel_if_adds_offset():
    plan = ChannelPlan((ChannelSpec(1, 10e6, 100e6, 5.8),), pilot_tones=(PilotTone(100e6, 0.1),))
    rs = simulate_link(plan, LinkParams(eta_det=1.0), NoiseProfile(), 10_000, seed=2, **NOISELESS)[1]
    offset = np.mean(rs.bob - rs.alice)
    assert offset == approx(0.1 * math.sqrt(5.8), rel=0.02)


def test_same_seed_same_records(single_plan):
    noise = NoiseProfile.synthetic_default()
    a = simulate_link(single_plan, LinkParams(), noise, 10_000, seed=7)[1]
    b = simulate_link(single_plan, LinkParams(), noise, 10_000, seed=7)[1]
    c = simulate_link(single_plan, LinkParams(), noise, 10_000, seed=8)[1]
    assert np.array_equal(a.bob, b.bob) and np.array_equal(a.alice, b.alice)
    assert not np.array_equal(a.bob, c.bob)


def test_block_size_does_not_change_result(single_plan):
    noise = NoiseProfile.synthetic_default()
    a = simulate_link(single_plan, LinkParams(), noise, 10_000, seed=3, block_symbols=10_000)[1]
    b = simulate_link(single_plan, LinkParams(), noise, 10_000, seed=3, block_symbols=777)[1]
    assert b.bob == approx(a.bob, abs=1e-9)
    assert np.array_equal(a.alice, b.alice) or b.alice == approx(a.alice, abs=1e-12)


def test_simulate_link_preconditions(single_plan):
    with pytest.raises(ValueError):
        simulate_link(single_plan, LinkParams(), NoiseProfile(), 9_999, seed=1)
    with pytest.raises(ValueError):
        simulate_link(single_plan, LinkParams(), NoiseProfile(), 10_000, seed=1, basis=Basis.PHASE)
    mixed = ChannelPlan((ChannelSpec(1, 10e6, 64e6, 5.8), ChannelSpec(2, 20e6, 150e6, 5.8)))
    with pytest.raises(ValueError):
        simulate_link(mixed, LinkParams(), NoiseProfile(), 10_000, seed=1)
    with pytest.raises(ValueError):
        simulate_link(single_plan, LinkParams(), NoiseProfile(), 10_000, seed=1, receive=[5])


def test_integer_samples_per_symbol():
    assert integer_samples_per_symbol(FS, 10e6) == 128
    with pytest.raises(SampleRateError):
        integer_samples_per_symbol(FS, 15e6)
    with pytest.raises(SampleRateError):
        integer_samples_per_symbol(70e6, 10e6)


def test_receive_subset_and_both_bases():
    plan = ChannelPlan.uniform(2)
    out = simulate_both_bases(plan, LinkParams(), NoiseProfile(), 10_000, seed=1, receive=None, **NOISELESS)
    assert set(out) == {Basis.AMPLITUDE, Basis.PHASE}
    assert set(out[Basis.PHASE]) == {3, 4}
    only = simulate_link(plan, LinkParams(), NoiseProfile(), 10_000, seed=1, receive=[2], **NOISELESS)
    assert set(only) == {2}
    assert only[2].basis is Basis.AMPLITUDE


@pytest.mark.parametrize("basis", [Basis.AMPLITUDE, Basis.PHASE])
def test_vacuum_is_one_snu(basis):
    plan = ChannelPlan.uniform(2)
    records = simulate_link(plan, LinkParams(), NoiseProfile(), 100_000, seed=4, basis=basis, vacuum=True,
                            electronic_noise_on=False, carrier_noise_on=False, excess_noise_on=False)
    for rs in records.values():
        assert np.var(rs.bob) == approx(1.0, rel=0.05)


def test_vacuum_with_flat_detector_noise():
    noise = NoiseProfile(detector_ratio=PiecewiseLinear.constant(0.5))
    rs = simulate_link(ChannelPlan.uniform(1, bases=("amplitude",)), LinkParams(), noise, 100_000, seed=5,
                       vacuum=True, excess_noise_on=False)[1]
    assert np.var(rs.bob) == approx(1.5, rel=0.05)


@pytest.mark.slow
@pytest.mark.parametrize("basis", [Basis.AMPLITUDE, Basis.PHASE])
def test_vacuum_is_one_snu_at_full_length(basis):
    records = simulate_link(ChannelPlan.uniform(4), LinkParams(), NoiseProfile(), 10 ** 6, seed=6, basis=basis,
                            vacuum=True, electronic_noise_on=False, carrier_noise_on=False, excess_noise_on=False)
    for rs in records.values():
        assert np.var(rs.bob) == approx(1.0, rel=0.01)


@pytest.mark.slow
def test_recovers_known_channel():
    noise = NoiseProfile(excess_noise_floor_snu=0.05)
    plan = ChannelPlan.uniform(1, first_if_hz=100e6, bases=("amplitude",))
    t_hits = xi_hits = 0
    for seed in range(100):
        rs = simulate_link(plan, LinkParams(transmittance=0.5), noise, 20_000, seed=seed,
                           electronic_noise_on=False, carrier_noise_on=False)[1]
        est = estimate_channel(rs, 5.8, 0.83, 0.0, 20_000, seed=seed)
        t_hits += abs(est.t_hat - 0.5) <= 3 * est.sigma_t
        xi_hits += abs(est.xi_hat_snu - 0.05) <= 3 * est.sigma_xi
    assert t_hits >= 95
    assert xi_hits >= 95


@pytest.mark.slow
def test_neighbours_add_excess_noise():
    noise = NoiseProfile()
    single = ChannelPlan.uniform(1, bases=("amplitude",))
    four = ChannelPlan.uniform(4, bases=("amplitude",))
    kwargs = dict(electronic_noise_on=False, carrier_noise_on=False)
    alone = simulate_link(single, LinkParams(), noise, 50_000, seed=9, **kwargs)[1]
    crowded = simulate_link(four, LinkParams(), noise, 50_000, seed=9, **kwargs)[1]
    xi_alone = estimate_channel(alone, 5.8, 0.83, 0.0, 50_000).xi_hat_snu
    xi_crowded = estimate_channel(crowded, 5.8, 0.83, 0.0, 50_000).xi_hat_snu
    assert xi_crowded > xi_alone
