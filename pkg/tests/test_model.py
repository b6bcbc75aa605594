from fractions import Fraction
import math

from hypothesis import given, strategies as st
import pytest
from pytest import approx

from engine.model import (
    Basis,
    ChannelPlan,
    ChannelRate,
    ChannelSpec,
    FiniteSizeParams,
    LinkParams,
    NoiseProfile,
    NumericalDomainError,
    PiecewiseLinear,
    RateReport,
    channel_noise,
    check_plan_design_rules,
    fiber_transmittance,
    total_noise,
)


# ====== fiber and total noise ======

def test_fiber_transmittance_examples():
    assert fiber_transmittance(0, 0.2) == 1.0
    assert fiber_transmittance(20, 0.2) == approx(0.398107, abs=1e-6)
    assert fiber_transmittance(50, 0.2) == approx(0.1, rel=1e-12)


def test_fiber_transmittance_rejects_negative():
    with pytest.raises(ValueError):
        fiber_transmittance(-1.0)
    with pytest.raises(ValueError):
        fiber_transmittance(1.0, -0.2)


@given(st.floats(0, 200), st.floats(0, 200))
def test_fiber_transmittance_multiplicative(l1, l2):
    assert fiber_transmittance(l1 + l2) == approx(fiber_transmittance(l1) * fiber_transmittance(l2), rel=1e-12)


def test_total_noise_identity():
    assert total_noise(LinkParams(eta_det=1.0), 0.0, 0.0) == 0.0


def test_total_noise_half_transmittance():
    link = LinkParams(eta_det=1.0, transmittance=0.5)
    assert total_noise(link, 0.0, 0.0) == approx(1.0, abs=1e-15)


def test_total_noise_matches_exact_arithmetic():
    t, eps, eta, nu = 0.3981, 0.05, 0.83, 0.01
    T, E, H, N = (Fraction(v) for v in (t, eps, eta, nu))
    exact = (1 - T) / T + E + (1 / T) * ((1 - H) / H + (N / T) / H)
    link = LinkParams(eta_det=eta, transmittance=t)
    assert total_noise(link, eps, nu) == approx(float(exact), rel=1e-14)


@given(st.floats(0.01, 0.98), st.floats(0.001, 0.019), st.floats(0, 0.2), st.floats(0.1, 1), st.floats(0, 0.5))
def test_total_noise_decreasing_in_t(t, dt, eps, eta, nu):
    assert channel_noise(t + dt, eta, eps, nu) < channel_noise(t, eta, eps, nu)


def test_channel_noise_domain_errors():
    with pytest.raises(NumericalDomainError):
        channel_noise(0.0, 0.8, 0.0, 0.0)
    with pytest.raises(NumericalDomainError):
        channel_noise(0.5, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        channel_noise(0.5, 0.8, -0.1, 0.0)


def test_link_distance_and_override():
    link = LinkParams(fiber_length_km=50)
    assert link.t_ch == approx(0.1)
    assert LinkParams(transmittance=0.3).t_ch == 0.3
    assert link.at_distance(20).t_ch == approx(0.398107, abs=1e-6)
    with pytest.raises(ValueError):
        LinkParams(eta_det=0.0)
    with pytest.raises(ValueError):
        LinkParams(beta=1.5)


def test_finite_size_counts():
    fin = FiniteSizeParams()
    assert fin.n_key == 8_750_000
    assert fin.m_pe + fin.n_key == fin.n_total
    with pytest.raises(ValueError):
        FiniteSizeParams(n_total=100, m_pe=100)
    with pytest.raises(ValueError):
        FiniteSizeParams(eps_bar=0.0)


# ====== profiles ======

def test_piecewise_linear_interpolates_and_holds():
    p = PiecewiseLinear(((0.0, 1.0), (10.0, 3.0)))
    assert p(5.0) == approx(2.0)
    assert p(-5.0) == approx(2.0)
    assert p(100.0) == 3.0
    assert list(p([0.0, 10.0])) == [1.0, 3.0]


@pytest.mark.parametrize("points", [(), ((0.0, -1.0),), ((10.0, 1.0), (5.0, 1.0)), ((-1.0, 1.0),)])
def test_piecewise_linear_rejects(points):
    with pytest.raises(ValueError):
        PiecewiseLinear(points)


def test_noise_profile_default_and_calibrated():
    noise = NoiseProfile.synthetic_default()
    assert noise.nu_det(64e6) == approx(0.010 + 0.002 * 64 / 100)
    assert noise.nu_det(640e6) == approx(1.0)
    cal = noise.calibrated(0.012, 2.0)
    assert cal.nu_det(64e6) == approx(2.0 * noise.nu_det(64e6))
    assert cal.excess_noise_floor_snu == 0.012
    assert noise.carrier_noise(10e6) > 0 and noise.carrier_noise(64e6) == 0


# ====== channel plans ======

def test_uniform_plan_layout(plan4):
    assert len(plan4.channels) == 8
    amp = plan4.for_basis(Basis.AMPLITUDE)
    pha = plan4.for_basis(Basis.PHASE)
    assert [c.if_freq_hz for c in amp] == [64e6, 104e6, 144e6, 184e6]
    assert [c.index for c in pha] == [5, 6, 7, 8]
    assert [c.if_freq_hz for c in pha] == [c.if_freq_hz for c in amp]
    assert plan4.spacing_hz == 40e6
    assert plan4.bases == (Basis.AMPLITUDE, Basis.PHASE)


def test_truncated_keeps_lowest_ifs(plan4):
    two = plan4.truncated(2)
    assert [c.index for c in two.channels] == [1, 2, 5, 6]
    assert two.spacing_hz == 40e6


def test_spacing_derived_only_when_uniform():
    chans = (ChannelSpec(1, 10e6, 64e6, 5.8), ChannelSpec(2, 10e6, 104e6, 5.8), ChannelSpec(3, 10e6, 154e6, 5.8))
    assert ChannelPlan(chans).spacing_hz is None


@pytest.mark.parametrize("chans", [
    (),
    (ChannelSpec(1, 10e6, 64e6, 5.8), ChannelSpec(1, 10e6, 104e6, 5.8)),
    (ChannelSpec(1, 10e6, 104e6, 5.8), ChannelSpec(2, 10e6, 64e6, 5.8)),
    (ChannelSpec(1, 0.0, 64e6, 5.8),),
    (ChannelSpec(1, 10e6, 64e6, 0.0),),
])
def test_invalid_plans(chans):
    with pytest.raises(ValueError):
        ChannelPlan(chans)


def test_design_rules_flag_low_if_and_tight_spacing():
    plan = ChannelPlan((ChannelSpec(1, 10e6, 50e6, 5.8), ChannelSpec(2, 10e6, 80e6, 5.8)))
    findings = check_plan_design_rules(plan)
    assert any("channel 1" in f for f in findings)
    assert any("sidelobes" in f for f in findings)
    assert check_plan_design_rules(ChannelPlan.uniform(4)) == []


def test_channel_lookup(plan4):
    assert plan4.channel(6).if_freq_hz == 104e6
    with pytest.raises(KeyError):
        plan4.channel(9)


# ====== reports ======

def _row(k, basis, fin, asy):
    return ChannelRate(k, basis, 0.5, 0.01, 0.49, 0.02, 1.0, 0.5, 0.01, fin, asy)


def test_rate_report_totals_are_sums():
    rows = [_row(1, Basis.AMPLITUDE, 1e6, 2e6), _row(2, Basis.AMPLITUDE, 0.5e6, 1e6), _row(5, Basis.PHASE, 9e6, 9e6)]
    rep = RateReport.from_channels(Basis.AMPLITUDE, rows)
    assert len(rep.per_channel) == 2
    assert rep.total_finite_bits_per_s == approx(1.5e6)
    assert rep.total_asympt_bits_per_s == approx(3e6)
    assert math.isclose(rep.worst_basis_total_bits_per_s, rep.total_finite_bits_per_s)
