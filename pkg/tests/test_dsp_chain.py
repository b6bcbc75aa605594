import math

from hypothesis import given, settings, strategies as st
import numpy as np
import pytest
from pytest import approx
from scipy import signal

from engine.dsp_chain import (
    DemuxPath,
    DiscreteFilter,
    SampleRateError,
    SymbolRecordSet,
    Waveform,
    apply_filter,
    crosstalk_ratio,
    derive_rng,
    design_bessel_lpf,
    downconvert,
    fdm_demux,
    fdm_mux,
    filter_magnitude,
    generate_gaussian_symbols,
    min_if_for_rate,
    nrz_waveform,
    sample_symbols,
    symbol_response,
    upconvert,
)
from engine.model import Basis, Quadrature

FS = 1.28e9
SPS = 128
LPF = design_bessel_lpf(4, 10e6)


def _db(x):
    return 10 * math.log10(x)


# ====== symbols ======

def test_gaussian_symbols_variance_and_mean():
    x = generate_gaussian_symbols(10 ** 6, 5.8, 1)
    sigma = math.sqrt(2 / x.size)
    assert 5.8 * (1 - 4 * sigma) <= np.var(x) <= 5.8 * (1 + 4 * sigma)
    y = generate_gaussian_symbols(10 ** 6, 1.0, 2)
    assert abs(np.mean(y)) <= 4 / math.sqrt(y.size)


def test_gaussian_symbols_deterministic():
    assert np.array_equal(generate_gaussian_symbols(1000, 2.0, 7), generate_gaussian_symbols(1000, 2.0, 7))
    with pytest.raises(ValueError):
        generate_gaussian_symbols(0, 1.0, 1)
    with pytest.raises(ValueError):
        generate_gaussian_symbols(10, 0.0, 1)


def test_derived_streams_are_independent_of_creation_order():
    a = derive_rng(5, 0, 1, 2).standard_normal(10)
    derive_rng(5, 0, 2, 2).standard_normal(10)
    assert np.array_equal(derive_rng(5, 0, 1, 2).standard_normal(10), a)
    assert not np.array_equal(derive_rng(5, 0, 2, 2).standard_normal(10), a)


def test_waveform_is_read_only():
    w = Waveform(np.ones(4), FS)
    with pytest.raises(ValueError):
        w.samples[0] = 2.0
    with pytest.raises(ValueError):
        Waveform(np.zeros(0), FS)


# ====== filters ======

def test_bessel_three_db_point_and_dc():
    assert filter_magnitude(LPF, 10e6) ** 2 == approx(0.5, abs=1e-6)
    assert filter_magnitude(LPF, 0.0) == approx(1.0, abs=1e-12)


def test_bessel_matches_polynomial():
    # reverse Bessel polynomial of order 4, 3-dB normalization 2.1139
    theta = np.poly1d([1, 10, 45, 105, 105])
    w = 2.113917674904 * 40e6 / 10e6
    expected = abs(theta(0) / theta(1j * w))
    assert filter_magnitude(LPF, 40e6) == approx(expected, rel=1e-6)


def test_bessel_magnitude_even_and_monotone():
    f = np.linspace(0, 500e6, 5001)
    mag = filter_magnitude(LPF, f)
    assert np.all(np.diff(mag) <= 1e-15)
    assert filter_magnitude(LPF, -23e6) == approx(filter_magnitude(LPF, 23e6), rel=1e-12)


@pytest.mark.parametrize("order", [0, 9])
def test_bessel_order_range(order):
    with pytest.raises(ValueError):
        design_bessel_lpf(order, 10e6)


def test_discretization_needs_oversampling():
    with pytest.raises(SampleRateError):
        DiscreteFilter(LPF, 50e6)


def test_filter_dc_and_three_db_sine():
    dc = apply_filter(LPF, Waveform(np.full(20000, 3.0), FS))
    assert dc.samples[-1] == approx(3.0, rel=1e-9)

    t = np.arange(256_000) / FS
    out = apply_filter(LPF, Waveform(np.sin(2 * np.pi * 10e6 * t), FS)).samples
    settled = out[len(out) // 2:]
    assert math.sqrt(2 * np.mean(settled ** 2)) == approx(1 / math.sqrt(2), rel=0.02)


def test_filter_white_noise_spectrum():
    x = np.random.default_rng(3).standard_normal(2 ** 20)
    y = apply_filter(LPF, Waveform(x, FS)).samples
    f, pxx = signal.welch(x, fs=FS, nperseg=8192)
    _, pyy = signal.welch(y, fs=FS, nperseg=8192)
    band = (f > 1e6) & (f < 20e6)
    ratio = pyy[band] / pxx[band]
    assert ratio == approx(filter_magnitude(LPF, f[band]) ** 2, rel=0.15)


def test_streaming_matches_single_pass():
    x = np.random.default_rng(4).standard_normal(30000)
    whole = DiscreteFilter(LPF, FS).process(x)
    streamed = DiscreteFilter(LPF, FS)
    parts = np.concatenate([streamed.process(x[:7000]), streamed.process(x[7000:7001]), streamed.process(x[7001:])])
    assert parts == approx(whole, abs=1e-12)


# ====== mixing and multiplexing ======

def test_upconvert_zero_and_tone():
    zero = upconvert(Waveform(np.zeros(4096), FS), 100e6)
    assert not np.any(zero.samples)

    n = 12800
    tone = upconvert(Waveform(np.ones(n), FS), 100e6)
    spectrum = np.abs(np.fft.rfft(tone.samples))
    freqs = np.fft.rfftfreq(n, 1 / FS)
    assert abs(freqs[np.argmax(spectrum)] - 100e6) <= FS / n


def test_upconvert_rejects_aliasing():
    with pytest.raises(SampleRateError):
        upconvert(Waveform(np.ones(100), 200e6), 95e6, bandwidth_hz=10e6)
    with pytest.raises(ValueError):
        upconvert(Waveform(np.ones(100), FS), 0.0)


def _nrz(seed, n_symbols=2000, v=1.0):
    x = generate_gaussian_symbols(n_symbols, v, seed)
    return x, apply_filter(LPF, nrz_waveform(x, SPS, FS))


@pytest.mark.parametrize("quadrature", [Quadrature.IN_PHASE, Quadrature.QUADRATURE])
def test_up_down_loopback(quadrature):
    _, bb = _nrz(5)
    back = apply_filter(LPF, downconvert(upconvert(bb, 100e6, quadrature), 100e6, quadrature))
    delayed = apply_filter(LPF, bb)
    assert np.corrcoef(back.samples, delayed.samples)[0, 1] >= 0.99


def test_fdm_mux_identity_and_cancellation():
    _, bb = _nrz(6)
    w = upconvert(bb, 64e6)
    assert np.array_equal(fdm_mux([w]).samples, w.samples)
    assert not np.any(fdm_mux([w, w.with_samples(-w.samples)]).samples)
    with pytest.raises(ValueError):
        fdm_mux([w, Waveform(np.ones(10), FS)])
    with pytest.raises(ValueError):
        fdm_mux([])


def test_fdm_mux_psd_additive():
    _, a = _nrz(7)
    _, b = _nrz(8)
    wa, wb = upconvert(a, 64e6), upconvert(b, 184e6)
    f, pa = signal.welch(wa.samples, fs=FS, nperseg=4096)
    _, pb = signal.welch(wb.samples, fs=FS, nperseg=4096)
    _, pm = signal.welch(fdm_mux([wa, wb]).samples, fs=FS, nperseg=4096)
    band = (f > 40e6) & (f < 210e6)
    assert pm[band].sum() == approx(pa[band].sum() + pb[band].sum(), rel=0.05)


def test_demux_recovers_symbols():
    x, bb = _nrz(9)
    composite = upconvert(bb, 100e6)
    out = fdm_demux(composite, 100e6, Quadrature.IN_PHASE, LPF)
    g = symbol_response([LPF, LPF], SPS, FS)
    reference = signal.lfilter(g, [1.0], x)
    got = sample_symbols(out, FS / SPS, filters=[LPF, LPF])[:x.size]
    nmse = np.mean((got - reference[:got.size]) ** 2) / np.var(reference)
    assert nmse < 0.01


def test_demux_empty_if_is_quiet():
    _, bb = _nrz(10, v=5.8)
    composite = fdm_mux([upconvert(bb, 64e6)])
    signal_power = np.mean(fdm_demux(composite, 64e6, Quadrature.IN_PHASE, LPF).samples[SPS * 50:] ** 2)
    leak = np.mean(fdm_demux(composite, 124e6, Quadrature.IN_PHASE, LPF).samples[SPS * 50:] ** 2)
    assert _db(leak / signal_power) < -40


def test_demux_zero_in_zero_out():
    out = fdm_demux(Waveform(np.zeros(5000), FS), 64e6, Quadrature.QUADRATURE, LPF)
    assert not np.any(out.samples)


def test_streaming_demux_matches_batch():
    _, bb = _nrz(11, n_symbols=400)
    composite = upconvert(bb, 104e6)
    batch = fdm_demux(composite, 104e6, Quadrature.IN_PHASE, LPF).samples
    path = DemuxPath(104e6, Quadrature.IN_PHASE, LPF, FS)
    half = len(composite) // 2 + 17
    first = Waveform(composite.samples[:half], FS, 0.0)
    second = Waveform(composite.samples[half:], FS, half / FS)
    streamed = np.concatenate([path.process(first), path.process(second)])
    assert streamed == approx(batch, abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
def test_chain_is_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    x = Waveform(rng.standard_normal(4096), FS)
    y = Waveform(rng.standard_normal(4096), FS)
    combo = x.with_samples(a * x.samples + b * y.samples)

    def chain(w):
        return fdm_demux(fdm_mux([upconvert(apply_filter(LPF, w), 64e6)]), 64e6, Quadrature.IN_PHASE, LPF).samples

    scale = 1.0 + abs(a) + abs(b)
    assert chain(combo) == approx(a * chain(x) + b * chain(y), abs=1e-9 * scale)


# ====== sampling ======

def test_sample_constant_waveform():
    values = sample_symbols(Waveform(np.full(SPS * 20, 2.5), FS), FS / SPS)
    assert len(values) == 20
    assert np.all(values == 2.5)


def test_sample_symbols_loopback_and_shift():
    x, bb = _nrz(12)
    got = sample_symbols(bb, FS / SPS, filters=[LPF])
    n = min(got.size, x.size)
    assert np.corrcoef(got[:n], x[:n])[0, 1] >= 0.995

    shifted = sample_symbols(bb, FS / SPS, timing_offset_s=SPS / FS, filters=[LPF])
    assert shifted[:n - 1] == approx(got[1:n], abs=1e-12)


def test_sample_symbols_needs_eight_samples():
    with pytest.raises(SampleRateError):
        sample_symbols(Waveform(np.ones(100), 70e6), 10e6)


# ====== crosstalk and planning ======

def test_crosstalk_cochannel_and_monotone():
    assert crosstalk_ratio(LPF, LPF, 0.0) == approx(1.0, rel=1e-9)
    values = [crosstalk_ratio(LPF, LPF, df) for df in np.arange(0, 100e6, 5e6)]
    assert all(b < a for a, b in zip(values[:-1], values[1:]))
    with pytest.raises(ValueError):
        crosstalk_ratio(LPF, LPF, -1.0)


def test_crosstalk_drops_with_spacing():
    near = crosstalk_ratio(LPF, LPF, 20e6)
    far = crosstalk_ratio(LPF, LPF, 40e6)
    assert _db(near) - _db(far) >= 15


def test_min_if_rule():
    assert min_if_for_rate(10e6) == approx(64e6)
    assert min_if_for_rate(15e6) == approx(96e6)
    assert min_if_for_rate(20e6) == approx(128e6)
    with pytest.raises(ValueError):
        min_if_for_rate(0.0)


def test_record_set_rows_and_subset():
    rs = SymbolRecordSet(3, Basis.PHASE, [1.0, 2.0, 3.0], [0.5, 1.0, 1.5])
    rows = list(rs)
    assert rows[1].index == 1 and rows[1].bob_x == 1.0 and rows[1].basis is Basis.PHASE
    sub = rs.subset(np.array([0, 2]))
    assert list(sub.indices) == [0, 2]
    assert SymbolRecordSet.from_records(rows).alice.tolist() == [1.0, 2.0, 3.0]
    with pytest.raises(ValueError):
        SymbolRecordSet(1, Basis.AMPLITUDE, [1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        SymbolRecordSet(1, Basis.AMPLITUDE, [np.nan], [1.0])
