"""
Baseband generation, Bessel shaping, IF mixing and FDM (de)multiplexing.

Analog Bessel prototypes are discretized with the impulse-invariant transform:
each analog pole p maps to z = exp(p / fs) and the filter is realized as a sum
of complex first-order sections (partial fractions), one per conjugate pair.
Section states persist between calls, so arbitrarily long records can be
streamed block by block with results identical to a single pass.

Mixing keeps the real passband picture: channels ride on cos (in-phase) or
sin (quadrature) carriers referenced to absolute time, and the receiver mixes
with 2cos / 2sin so the heterodyne factor of 1/2 is undone before filtering.
"""

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Optional, Union
import logging
import math

import numpy as np
from scipy import integrate, signal

from .model import Basis, Quadrature

logger = logging.getLogger(__name__)

MIN_SAMPLES_PER_SYMBOL = 8
MIN_OVERSAMPLING = 10
IF_RULE_FACTOR = 6.4


class SampleRateError(ValueError):
    """Sample rate too low for a discretization, mixing or sampling step."""


# =============================================================================
# Waveforms and seeding
# =============================================================================

@dataclass(frozen=True, eq=False)
class Waveform:
    """
    Real-valued record sampled at sample_rate_hz, first sample at time t0_s.
    The sample array is exposed read-only.
    """
    samples: np.ndarray
    sample_rate_hz: float
    t0_s: float = 0.0

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError(f"waveform needs a non-empty 1D sample array, got shape {arr.shape}")
        if not self.sample_rate_hz > 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz!r}")
        view = arr.view()
        view.flags.writeable = False
        object.__setattr__(self, "samples", view)

    def __len__(self):
        return self.samples.size

    @property
    def sample_indices(self) -> np.ndarray:
        return np.arange(self.samples.size)

    @property
    def times(self) -> np.ndarray:
        return self.t0_s + self.sample_indices / self.sample_rate_hz

    def with_samples(self, samples: np.ndarray) -> "Waveform":
        return Waveform(samples, self.sample_rate_hz, self.t0_s)


@dataclass(frozen=True)
class SymbolRecord:
    channel: int
    basis: Basis
    index: int
    alice_x: float
    bob_x: float


@dataclass(frozen=True, eq=False)
class SymbolRecordSet:
    """
    Aligned Alice/Bob quadrature values of one channel, stored as arrays.
    Iterating yields SymbolRecord rows.
    """
    channel: int
    basis: Basis
    alice: np.ndarray
    bob: np.ndarray
    indices: Optional[np.ndarray] = None

    def __post_init__(self):
        alice = np.asarray(self.alice, dtype=float)
        bob = np.asarray(self.bob, dtype=float)
        if alice.shape != bob.shape or alice.ndim != 1:
            raise ValueError(f"alice/bob arrays must be 1D and equal length, got {alice.shape} and {bob.shape}")
        if not (np.all(np.isfinite(alice)) and np.all(np.isfinite(bob))):
            raise ValueError(f"channel {self.channel}: non-finite symbol values")
        indices = np.arange(alice.size) if self.indices is None else np.asarray(self.indices, dtype=np.int64)
        object.__setattr__(self, "alice", alice)
        object.__setattr__(self, "bob", bob)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "basis", Basis(self.basis))

    def __len__(self):
        return self.alice.size

    def __iter__(self):
        for ii, a, b in zip(self.indices, self.alice, self.bob):
            yield SymbolRecord(self.channel, self.basis, int(ii), float(a), float(b))

    def subset(self, positions: np.ndarray) -> "SymbolRecordSet":
        return SymbolRecordSet(self.channel, self.basis, self.alice[positions], self.bob[positions],
                               self.indices[positions])

    @classmethod
    def from_records(cls, records) -> "SymbolRecordSet":
        records = list(records)
        if not records:
            raise ValueError("no records")
        channel, basis = records[0].channel, records[0].basis
        if any(r.channel != channel or r.basis is not Basis(basis) for r in records):
            raise ValueError("records mix channels or bases")
        return cls(channel, basis,
                   np.array([r.alice_x for r in records]),
                   np.array([r.bob_x for r in records]),
                   np.array([r.index for r in records]))


def derive_rng(seed: int, *stream: int) -> np.random.Generator:
    """
    Independent generator for one (trial, channel, stage, ...) stream.
    Streams are SeedSequence children keyed by spawn_key, so the numbers drawn
    for one stream never depend on which other streams exist or run first.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(s) for s in stream)))


def generate_gaussian_symbols(count: int,
                              v_mod_snu: float,
                              seed: Union[int, np.random.Generator]) -> np.ndarray:
    """
    Zero-mean Gaussian quadrature symbols.

    :param count: number of symbols
    :param v_mod_snu: modulation variance
    :param seed: integer seed or an existing generator
    :return symbols:
    """
    if count <= 0:
        raise ValueError(f"count must be positive, got {count}")
    if not v_mod_snu > 0:
        raise ValueError(f"v_mod_snu must be positive, got {v_mod_snu!r}")

    rng = np.random.default_rng(seed)
    return rng.normal(0.0, math.sqrt(v_mod_snu), count)


def nrz_waveform(symbols: np.ndarray,
                 samples_per_symbol: int,
                 sample_rate_hz: float,
                 t0_s: float = 0.0) -> Waveform:
    """Hold each symbol for samples_per_symbol samples."""
    if int(samples_per_symbol) != samples_per_symbol or samples_per_symbol < 1:
        raise SampleRateError(f"samples_per_symbol must be a positive integer, got {samples_per_symbol!r}")
    return Waveform(np.repeat(np.asarray(symbols, dtype=float), int(samples_per_symbol)), sample_rate_hz, t0_s)


# =============================================================================
# Bessel filters
# =============================================================================

@dataclass(frozen=True)
class FilterSpec:
    """
    Analog all-pole low-pass filter H(s) = gain / prod(s - p_i).

    :param kind: filter family
    :param order: number of poles
    :param f3db_hz: 3-dB frequency
    :param poles: analog poles in rad/s, conjugate pairs adjacent
    :param gain: numerator constant giving |H(0)| = 1
    """
    kind: str = "bessel"
    order: int = 4
    f3db_hz: float = 10e6
    poles: tuple = ()
    gain: float = 1.0

    def __post_init__(self):
        if not self.poles:
            designed = design_bessel_lpf(self.order, self.f3db_hz)
            object.__setattr__(self, "poles", designed.poles)
            object.__setattr__(self, "gain", designed.gain)

        if self.order < 1 or len(self.poles) != self.order:
            raise ValueError(f"filter of order {self.order} needs {self.order} poles, got {len(self.poles)}")
        if any(p.real >= 0 for p in self.poles):
            raise ValueError("all poles must lie in the left half-plane")

    def response(self, f_hz):
        """Complex analog frequency response at f_hz."""
        s = 2j * np.pi * np.asarray(f_hz, dtype=float)
        h = np.full(s.shape, self.gain, dtype=complex)
        for p in self.poles:
            h = h / (s - p)
        return h

    @property
    def group_delay_s(self) -> float:
        """Group delay at DC, sum of -Re(1/p)."""
        return float(sum((-1.0 / p).real for p in self.poles))


def design_bessel_lpf(order: int = 4, f3db_hz: float = 10e6) -> FilterSpec:
    """
    Bessel low-pass prototype normalized to a 3-dB point at f3db_hz.

    :param order: 1..8
    :param f3db_hz: 3-dB frequency
    :return spec:
    """
    if not isinstance(order, (int, np.integer)) or not 1 <= order <= 8:
        raise ValueError(f"unsupported Bessel order {order!r}, must be 1..8")
    if not f3db_hz > 0:
        raise ValueError(f"f3db_hz must be positive, got {f3db_hz!r}")

    _, p_norm, _ = signal.besselap(int(order), norm="mag")
    poles = tuple(complex(p) * 2 * np.pi * f3db_hz for p in p_norm)
    gain = float(np.real(np.prod([-p for p in poles])))

    return FilterSpec(kind="bessel", order=int(order), f3db_hz=float(f3db_hz), poles=poles, gain=gain)


def filter_magnitude(spec: FilterSpec, f_hz):
    """|H(j 2 pi f)| of the analog prototype."""
    mag = np.abs(spec.response(f_hz))
    if np.ndim(mag) == 0:
        return float(mag)
    return mag


class DiscreteFilter:
    """
    Stateful impulse-invariant realization of a FilterSpec.

    Call process() repeatedly on consecutive blocks; reset() clears state.
    """

    def __init__(self, spec: FilterSpec, sample_rate_hz: float):
        if sample_rate_hz < MIN_OVERSAMPLING * spec.f3db_hz:
            raise SampleRateError(f"sample rate {sample_rate_hz:.4g} Hz below {MIN_OVERSAMPLING} x "
                                  f"f3db ({spec.f3db_hz:.4g} Hz)")
        self.spec = spec
        self.sample_rate_hz = sample_rate_hz

        poles = np.array(spec.poles, dtype=complex)
        residues = np.array([spec.gain / np.prod([pi - pj for jj, pj in enumerate(poles) if jj != ii])
                             for ii, pi in enumerate(poles)])

        # one section per real pole or conjugate pair
        is_real = np.abs(poles.imag) <= 1e-9 * np.abs(poles)
        keep = is_real | (poles.imag > 0)
        weight = np.where(is_real, 1.0, 2.0)[keep]

        dt = 1.0 / sample_rate_hz
        self._z = np.exp(poles[keep] * dt)
        coeffs = dt * residues[keep] * weight

        # exact unity gain at DC for the discrete filter
        dc = np.sum(coeffs / (1.0 - self._z)).real
        self._c = coeffs / dc
        self._state = np.zeros(self._z.size, dtype=complex)

    def reset(self):
        self._state[:] = 0

    def process(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.zeros(x.size)
        for ii, (c, z) in enumerate(zip(self._c, self._z)):
            yi, zf = signal.lfilter([c], [1.0, -z], x, zi=[self._state[ii]])
            self._state[ii] = zf[0]
            y += yi.real
        return y

    def impulse_response(self, n_samples: int) -> np.ndarray:
        """Response to a unit sample, computed on a fresh copy of the filter."""
        fresh = DiscreteFilter(self.spec, self.sample_rate_hz)
        impulse = np.zeros(n_samples)
        impulse[0] = 1.0
        return fresh.process(impulse)


def apply_filter(spec: FilterSpec, w: Waveform) -> Waveform:
    """
    Filter a waveform from zero initial state.

    :param spec: analog prototype
    :param w: input waveform, sample rate >= 10 x f3db
    :return filtered:
    """
    return w.with_samples(DiscreteFilter(spec, w.sample_rate_hz).process(w.samples))


# =============================================================================
# Mixing and (de)multiplexing
# =============================================================================

def _check_carrier(f_if_hz: float, bandwidth_hz: float, sample_rate_hz: float):
    if not f_if_hz > 0:
        raise ValueError(f"IF must be positive, got {f_if_hz!r}")
    if f_if_hz + bandwidth_hz >= sample_rate_hz / 2:
        raise SampleRateError(f"IF {f_if_hz:.4g} Hz + bandwidth {bandwidth_hz:.4g} Hz aliases at "
                              f"sample rate {sample_rate_hz:.4g} Hz")


def carrier(w: Waveform, f_if_hz: float, quadrature: Quadrature) -> np.ndarray:
    """cos or sin of the IF carrier at the waveform's absolute sample times."""
    n = w.sample_indices
    cycles = np.mod(f_if_hz * w.t0_s + n * (f_if_hz / w.sample_rate_hz), 1.0)
    phase = 2 * np.pi * cycles
    if Quadrature(quadrature) is Quadrature.IN_PHASE:
        return np.cos(phase)
    return np.sin(phase)


def upconvert(baseband: Waveform,
              f_if_hz: float,
              quadrature: Quadrature = Quadrature.IN_PHASE,
              bandwidth_hz: float = 0.0) -> Waveform:
    """
    Move a baseband signal onto an IF carrier.

    :param baseband: real baseband waveform
    :param f_if_hz: carrier frequency
    :param quadrature: in_phase (cos) or quadrature (sin)
    :param bandwidth_hz: one-sided signal bandwidth used for the aliasing check
    :return passband:
    """
    _check_carrier(f_if_hz, bandwidth_hz, baseband.sample_rate_hz)
    return baseband.with_samples(baseband.samples * carrier(baseband, f_if_hz, quadrature))


def downconvert(passband: Waveform, f_if_hz: float, quadrature: Quadrature = Quadrature.IN_PHASE) -> Waveform:
    """Mix with 2cos / 2sin; the factor 2 restores the baseband amplitude after low-pass filtering."""
    _check_carrier(f_if_hz, 0.0, passband.sample_rate_hz)
    return passband.with_samples(2.0 * passband.samples * carrier(passband, f_if_hz, quadrature))


def fdm_mux(channel_waveforms: Sequence) -> Waveform:
    """Sample-wise sum of per-channel passband waveforms."""
    if len(channel_waveforms) == 0:
        raise ValueError("nothing to multiplex")

    first = channel_waveforms[0]
    for w in channel_waveforms[1:]:
        if w.sample_rate_hz != first.sample_rate_hz or len(w) != len(first) or w.t0_s != first.t0_s:
            raise ValueError("multiplexed waveforms must share sample rate, length and start time")

    total = np.zeros(len(first))
    for w in channel_waveforms:
        total += w.samples
    return first.with_samples(total)


def fdm_demux(composite: Waveform,
              f_if_hz: float,
              quadrature: Quadrature,
              rx_filter: FilterSpec,
              prefilter: Optional[FilterSpec] = None) -> Waveform:
    """
    Recover one channel's baseband from the composite signal.

    :param composite: detected passband waveform
    :param f_if_hz: channel IF
    :param quadrature: carrier used at the transmitter
    :param rx_filter: baseband channel filter
    :param prefilter: optional front-end band limit, applied after mixing as its baseband equivalent
    :return baseband:
    """
    bb = downconvert(composite, f_if_hz, quadrature)
    if prefilter is not None:
        bb = apply_filter(prefilter, bb)
    return apply_filter(rx_filter, bb)


class DemuxPath:
    """Streaming form of fdm_demux: mixer plus stateful filters for one channel."""

    def __init__(self,
                 f_if_hz: float,
                 quadrature: Quadrature,
                 rx_filter: FilterSpec,
                 sample_rate_hz: float,
                 prefilter: Optional[FilterSpec] = None):
        _check_carrier(f_if_hz, 0.0, sample_rate_hz)
        self.f_if_hz = f_if_hz
        self.quadrature = Quadrature(quadrature)
        self.filters = ([prefilter] if prefilter is not None else []) + [rx_filter]
        self._stages = [DiscreteFilter(f, sample_rate_hz) for f in self.filters]

    @property
    def group_delay_s(self) -> float:
        return sum(f.group_delay_s for f in self.filters)

    def process(self, block: Waveform) -> np.ndarray:
        y = 2.0 * block.samples * carrier(block, self.f_if_hz, self.quadrature)
        for stage in self._stages:
            y = stage.process(y)
        return y


def demux_prefilter(bandwidth_hz: float, order: int = 4) -> Optional[FilterSpec]:
    """Baseband equivalent of a front-end demultiplexer of the given passband width."""
    if bandwidth_hz <= 0:
        return None
    return design_bessel_lpf(order, bandwidth_hz / 2)


# =============================================================================
# Symbol sampling
# =============================================================================

def sampling_instants(n_symbols: int, samples_per_symbol: float, delay_samples: float) -> np.ndarray:
    """Fractional sample index of each symbol's mid-point, shifted by delay_samples."""
    return np.arange(n_symbols) * samples_per_symbol + (samples_per_symbol - 1) / 2 + delay_samples


def sample_symbols(baseband: Waveform,
                   symbol_rate_hz: float,
                   timing_offset_s: float = 0.0,
                   filters: Sequence = ()) -> np.ndarray:
    """
    One value per symbol, taken at the symbol mid-point delayed by the DC
    group delay of the given filter cascade (linear interpolation between samples).

    :param baseband: filtered baseband waveform, symbol 0 starting at sample 0
    :param symbol_rate_hz: symbol rate
    :param timing_offset_s: extra sampling delay
    :param filters: FilterSpecs the signal passed through
    :return values: symbols whose sampling instant falls inside the record
    """
    sps = baseband.sample_rate_hz / symbol_rate_hz
    if sps < MIN_SAMPLES_PER_SYMBOL:
        raise SampleRateError(f"{sps:.3g} samples per symbol, need >= {MIN_SAMPLES_PER_SYMBOL}")

    delay = sum(f.group_delay_s for f in filters) + timing_offset_s
    n_max = int(np.ceil(len(baseband) / sps)) + 1
    instants = sampling_instants(n_max, sps, delay * baseband.sample_rate_hz)
    instants = instants[(instants >= 0) & (instants <= len(baseband) - 1)]
    return np.interp(instants, baseband.sample_indices, baseband.samples)


def symbol_response(filters: Sequence,
                    samples_per_symbol: int,
                    sample_rate_hz: float,
                    span_symbols: int = 64) -> np.ndarray:
    """
    Sampled response of a filter cascade to a single NRZ symbol of unit height:
    g[j] is what symbol k contributes to the sample of symbol k + j.
    """
    pulse = np.zeros(span_symbols)
    pulse[0] = 1.0
    y = nrz_waveform(pulse, samples_per_symbol, sample_rate_hz).samples
    for spec in filters:
        y = DiscreteFilter(spec, sample_rate_hz).process(y)
    return sample_symbols(Waveform(y, sample_rate_hz), sample_rate_hz / samples_per_symbol,
                          filters=filters)[:span_symbols]


# =============================================================================
# Analytic crosstalk and planning
# =============================================================================

def crosstalk_ratio(tx_filter: FilterSpec,
                    rx_filter: FilterSpec,
                    delta_f_hz: float,
                    symbol_rate_hz: Optional[float] = None) -> float:
    """
    Power leaked from a neighbor at spacing delta_f into a channel's receive
    filter, relative to the channel's own in-band power:

        int |Htx(f - df)|^2 |Hrx(f)|^2 S(f - df) df / int |Htx(f)|^2 |Hrx(f)|^2 S(f) df

    S is flat by default, or the NRZ sinc^2 spectrum when symbol_rate_hz is given.

    :param tx_filter: neighbor's pulse-shaping filter
    :param rx_filter: victim's receive filter
    :param delta_f_hz: channel spacing, >= 0
    :param symbol_rate_hz: optional NRZ symbol rate for the source spectrum
    :return ratio:
    """
    if delta_f_hz < 0:
        raise ValueError(f"delta_f must be >= 0, got {delta_f_hz!r}")

    scale = rx_filter.f3db_hz
    d = delta_f_hz / scale

    def source(u):
        if symbol_rate_hz is None:
            return 1.0
        return np.sinc(u * scale / symbol_rate_hz) ** 2

    def integrand(u, shift):
        return (filter_magnitude(tx_filter, (u - shift) * scale) ** 2
                * filter_magnitude(rx_filter, u * scale) ** 2
                * source(u - shift))

    def integrate_line(shift):
        lo, hi = min(0.0, shift), max(0.0, shift)
        span = 40.0
        core = [(lo - span, lo), (lo, hi), (hi, hi + span)]
        total = 0.0
        for a, b in core:
            if b > a:
                total += integrate.quad(integrand, a, b, args=(shift,), epsabs=0.0, epsrel=1e-10, limit=400)[0]
        # tails are many orders below the core, absolute tolerance relative to it
        for a, b in [(-np.inf, lo - span), (hi + span, np.inf)]:
            total += integrate.quad(integrand, a, b, args=(shift,), epsabs=1e-12 * total, epsrel=1e-10,
                                    limit=400)[0]
        return total

    return integrate_line(d) / integrate_line(0.0)


def min_if_for_rate(symbol_rate_hz: float) -> float:
    """Lowest first-channel IF of the empirical design rule: 6.4 x symbol rate."""
    if not symbol_rate_hz > 0:
        raise ValueError(f"symbol_rate_hz must be positive, got {symbol_rate_hz!r}")
    return IF_RULE_FACTOR * symbol_rate_hz
