"""
Lossy channel and Monte Carlo homodyne detection.

The whole chain runs block by block (generate -> tx filter -> upconvert -> mux
-> channel -> detector -> demux -> sample) with every filter, FIR and sampler
carrying its state across blocks, so memory stays bounded for 10^6-symbol
runs and the output does not depend on the block size.

Noise normalization: shot noise is white with a per-sample standard deviation
chosen so that, after the 2cos/2sin mixer and the receive filter chain, its
variance at the symbol samples is exactly 1 SNU. The factor is measured once
per (sample rate, filter chain) from the impulse response of the actual demux
path. Electronic and carrier-proximity noise share one FIR whose power gain is
detector_ratio(f)/T + carrier_noise(f)*eta*T, in the same units.

Alice's reference value for each symbol is her symbol convolved with the
sampled symbol response g of the tx/rx cascade; symbols are pre-scaled by
1/sqrt(sum g^2) so the reference has variance V_mod and inter-symbol
interference is part of the reference instead of appearing as excess noise.
"""

from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional
import logging
import math

import numpy as np
from scipy import signal

from .dsp_chain import (
    MIN_SAMPLES_PER_SYMBOL,
    DemuxPath,
    DiscreteFilter,
    FilterSpec,
    SampleRateError,
    SymbolRecordSet,
    Waveform,
    carrier,
    demux_prefilter,
    derive_rng,
    design_bessel_lpf,
    generate_gaussian_symbols,
    sampling_instants,
    symbol_response,
    upconvert,
)
from .model import (
    Basis,
    ChannelPlan,
    ChannelSpec,
    FilterConfig,
    LinkParams,
    NoiseProfile,
)

logger = logging.getLogger(__name__)

# random stream identifiers, combined with (trial, channel) in derive_rng
STAGE_SYMBOLS = 1
STAGE_PREPARATION = 2
STAGE_SHOT = 3
STAGE_SHAPED = 4

RESPONSE_SPAN_SYMBOLS = 64
BASE_SHAPING_TAPS = 4097
BASE_SHAPING_RATE_HZ = 1.28e9


@dataclass(frozen=True)
class DetectionConfig:
    """
    :param basis: measured quadrature
    :param noise: detector and carrier noise profile
    :param shot_noise_on: inject 1 SNU shot noise
    :param electronic_noise_on: inject detector_ratio-shaped electronic noise
    :param carrier_noise_on: inject near-carrier frequency noise
    :param seed: base seed of the detector noise streams
    :param rx_filter: channel filter of the demux path used for shot-noise calibration
    :param prefilter: optional front-end filter of the demux path
    """
    basis: Basis = Basis.AMPLITUDE
    noise: NoiseProfile = field(default_factory=NoiseProfile)
    shot_noise_on: bool = True
    electronic_noise_on: bool = True
    carrier_noise_on: bool = True
    seed: int = 0
    rx_filter: FilterSpec = field(default_factory=FilterSpec)
    prefilter: Optional[FilterSpec] = None

    def __post_init__(self):
        object.__setattr__(self, "basis", Basis(self.basis))


def apply_channel(w: Waveform, t_ch: float) -> Waveform:
    """
    Fiber loss on a field quadrature: amplitudes scale by sqrt(t_ch).

    :param w: waveform in SNU amplitude units
    :param t_ch: power transmittance in (0, 1]
    :return attenuated:
    """
    if not 0 < t_ch <= 1:
        raise ValueError(f"t_ch must be in (0, 1], got {t_ch!r}")
    return w.with_samples(w.samples * math.sqrt(t_ch))


# =============================================================================
# Shot-noise calibration and noise shaping
# =============================================================================

@lru_cache(maxsize=64)
def calibrate_shot_noise(sample_rate_hz: float,
                         rx_filter: FilterSpec,
                         prefilter: Optional[FilterSpec] = None) -> float:
    """
    Per-sample standard deviation of white shot noise that yields 1 SNU at the
    output of the demux path (2x mixer, optional prefilter, rx filter).

    The mixer doubles the amplitude and the squared carrier averages to 1/2,
    so the output variance of unit white noise is 2 * sum(h^2).
    """
    chain = ([prefilter] if prefilter is not None else []) + [rx_filter]
    slowest = min(f.f3db_hz for f in chain)
    n = int(400 * sample_rate_hz / slowest)
    impulse = np.zeros(n)
    impulse[0] = 1.0
    for spec in chain:
        impulse = DiscreteFilter(spec, sample_rate_hz).process(impulse)

    gain = 2.0 * float(np.sum(impulse ** 2))
    sigma = 1.0 / math.sqrt(gain)
    logger.debug(f"shot-noise calibration at {sample_rate_hz:.4g} Hz: sigma per sample = {sigma:.6g}")
    return sigma


def shaping_gain(noise: NoiseProfile,
                 f_hz: np.ndarray,
                 t_ch: float,
                 eta_det: float,
                 electronic_noise_on: bool = True,
                 carrier_noise_on: bool = True) -> np.ndarray:
    """Amplitude gain of the shaped-noise FIR relative to shot noise."""
    power = np.zeros_like(np.asarray(f_hz, dtype=float))
    if electronic_noise_on:
        power = power + noise.nu_det(f_hz) / t_ch
    if carrier_noise_on:
        power = power + noise.carrier_noise(f_hz) * eta_det * t_ch
    return np.sqrt(power)


class NoiseShaper:
    """
    Streaming FIR colouring of white noise (overlap-add). The FIR is primed with
    noise at construction so the output is stationary from the first sample.
    """

    def __init__(self, gain_fn, sample_rate_hz: float, rng: np.random.Generator, numtaps: Optional[int] = None):
        if numtaps is None:
            numtaps = 2 * int(BASE_SHAPING_TAPS // 2 * max(1.0, sample_rate_hz / BASE_SHAPING_RATE_HZ)) + 1
        nyq = sample_rate_hz / 2
        grid = np.linspace(0.0, nyq, 4 * numtaps)
        gains = gain_fn(grid)
        self.taps = signal.firwin2(numtaps, grid, gains, fs=sample_rate_hz, window="blackmanharris")
        self._rng = rng
        warmup = self._rng.standard_normal(numtaps - 1)
        self._tail = signal.oaconvolve(warmup, self.taps)[numtaps - 1:]

    def process(self, white: np.ndarray) -> np.ndarray:
        y = signal.oaconvolve(white, self.taps)
        n = white.size
        # y has n + numtaps - 1 samples, always enough to absorb the carried tail
        y[:self._tail.size] += self._tail
        self._tail = y[n:]
        return y[:n]

    def draw(self, n: int) -> np.ndarray:
        return self.process(self._rng.standard_normal(n))


class HomodyneDetector:
    """Streaming detector: sqrt(eta)*signal + shot noise + shaped noise."""

    def __init__(self,
                 cfg: DetectionConfig,
                 t_ch: float,
                 eta_det: float,
                 sample_rate_hz: float,
                 trial: int = 0):
        if not 0 < t_ch <= 1:
            raise ValueError(f"t_ch must be in (0, 1], got {t_ch!r}")
        if not 0 < eta_det <= 1:
            raise ValueError(f"eta_det must be in (0, 1], got {eta_det!r}")

        self.cfg = cfg
        self.eta_det = eta_det
        self.sigma_shot = calibrate_shot_noise(sample_rate_hz, cfg.rx_filter, cfg.prefilter)
        basis_stream = 0 if cfg.basis is Basis.AMPLITUDE else 1

        self._shot_rng = derive_rng(cfg.seed, trial, 0, STAGE_SHOT, basis_stream)
        self._shaper = None
        shaped_on = ((cfg.electronic_noise_on and not cfg.noise.detector_ratio.is_zero()
                      and cfg.noise.detector_scale > 0)
                     or (cfg.carrier_noise_on and not cfg.noise.carrier_noise.is_zero()))
        if shaped_on:
            def gain_fn(f):
                return shaping_gain(cfg.noise, f, t_ch, eta_det, cfg.electronic_noise_on, cfg.carrier_noise_on)
            self._shaper = NoiseShaper(gain_fn, sample_rate_hz,
                                       derive_rng(cfg.seed, trial, 0, STAGE_SHAPED, basis_stream))

    def process(self, w: Waveform) -> np.ndarray:
        y = math.sqrt(self.eta_det) * w.samples
        if self.cfg.shot_noise_on:
            y = y + self.sigma_shot * self._shot_rng.standard_normal(len(w))
        if self._shaper is not None:
            y = y + self.sigma_shot * self._shaper.draw(len(w))
        return y


def homodyne_detect(w: Waveform, cfg: DetectionConfig, t_ch: float, eta_det: float) -> Waveform:
    """
    Detect a received passband waveform.

    :param w: waveform after the channel, SNU amplitude units
    :param cfg: detection settings
    :param t_ch: channel transmittance, scales electronic noise by 1/t_ch (transmitted LO)
    :param eta_det: detector efficiency
    :return detected:
    """
    return w.with_samples(HomodyneDetector(cfg, t_ch, eta_det, w.sample_rate_hz).process(w))


# =============================================================================
# Streaming transmitter and sampler
# =============================================================================

def channel_filters(filters: FilterConfig, symbol_rate_hz: float) -> tuple:
    """(tx_filter, rx_filter, prefilter or None) for a channel."""
    tx = design_bessel_lpf(filters.order, filters.f3db_per_symbol_rate * symbol_rate_hz)
    rx = design_bessel_lpf(filters.order, filters.f3db_per_symbol_rate * symbol_rate_hz)
    return tx, rx, demux_prefilter(filters.demux_bandwidth_hz, filters.order)


def integer_samples_per_symbol(sample_rate_hz: float, symbol_rate_hz: float) -> int:
    sps = sample_rate_hz / symbol_rate_hz
    if abs(sps - round(sps)) > 1e-9 * sps:
        raise SampleRateError(f"sample rate {sample_rate_hz:.6g} Hz is not an integer multiple of "
                              f"symbol rate {symbol_rate_hz:.6g} Hz")
    if round(sps) < MIN_SAMPLES_PER_SYMBOL:
        raise SampleRateError(f"{sps:.3g} samples per symbol, need >= {MIN_SAMPLES_PER_SYMBOL}")
    return int(round(sps))


class ChannelTransmitter:
    """Symbol source, NRZ shaping, tx filter and IF mixer for one channel."""

    def __init__(self,
                 channel: ChannelSpec,
                 sample_rate_hz: float,
                 filters: FilterConfig,
                 excess_noise_snu: float,
                 seed: int,
                 trial: int = 0):
        self.channel = channel
        self.sps = integer_samples_per_symbol(sample_rate_hz, channel.symbol_rate_hz)
        self.sample_rate_hz = sample_rate_hz
        self.tx_filter, self.rx_filter, self.prefilter = channel_filters(filters, channel.symbol_rate_hz)
        self.excess_noise_snu = excess_noise_snu

        chain = [self.tx_filter] + ([self.prefilter] if self.prefilter else []) + [self.rx_filter]
        self.response = symbol_response(chain, self.sps, sample_rate_hz, RESPONSE_SPAN_SYMBOLS)
        self.scale = 1.0 / math.sqrt(float(np.sum(self.response ** 2)))
        self.delay_s = sum(f.group_delay_s for f in chain)

        self._tx = DiscreteFilter(self.tx_filter, sample_rate_hz)
        self._ref_state = np.zeros(self.response.size - 1)
        self._sym_rng = derive_rng(seed, trial, channel.index, STAGE_SYMBOLS)
        self._prep_rng = derive_rng(seed, trial, channel.index, STAGE_PREPARATION)

    def next_block(self, n_symbols: int, t0_s: float) -> tuple:
        """
        :return passband, reference: passband samples of the block and Alice's reference per symbol
        """
        x = generate_gaussian_symbols(n_symbols, self.channel.mod_variance_snu, self._sym_rng)
        drive = x
        if self.excess_noise_snu > 0:
            drive = x + self._prep_rng.normal(0.0, math.sqrt(self.excess_noise_snu), n_symbols)

        bb = self._tx.process(np.repeat(drive * self.scale, self.sps))
        passband = upconvert(Waveform(bb, self.sample_rate_hz, t0_s), self.channel.if_freq_hz,
                             self.channel.basis.quadrature, bandwidth_hz=3 * self.channel.symbol_rate_hz)

        reference, self._ref_state = signal.lfilter(self.response * self.scale, [1.0], x, zi=self._ref_state)
        return passband.samples, reference


class SymbolSampler:
    """Takes symbol-instant samples from consecutive demuxed blocks."""

    def __init__(self, samples_per_symbol: int, delay_samples: float):
        self.sps = samples_per_symbol
        self.offset = sampling_instants(1, samples_per_symbol, delay_samples)[0]
        self._next = 0
        self._last = 0.0
        self._values = []

    def push(self, y: np.ndarray, n0: int):
        n_end = n0 + y.size - 1
        k_stop = int(np.floor((n_end - self.offset) / self.sps)) + 1
        if k_stop > self._next:
            k = np.arange(self._next, k_stop)
            instants = k * self.sps + self.offset - (n0 - 1)
            buf = np.concatenate(([self._last], y))
            self._values.append(np.interp(instants, np.arange(buf.size), buf))
            self._next = k_stop
        self._last = y[-1]

    @property
    def count(self) -> int:
        return self._next

    def values(self) -> np.ndarray:
        if not self._values:
            return np.zeros(0)
        return np.concatenate(self._values)


# =============================================================================
# Full link
# =============================================================================

def simulate_link(plan: ChannelPlan,
                  link: LinkParams,
                  noise: NoiseProfile,
                  n_symbols: int,
                  seed: int,
                  basis: Basis = Basis.AMPLITUDE,
                  filters: FilterConfig = FilterConfig(),
                  trial: int = 0,
                  receive: Optional[Sequence[int]] = None,
                  shot_noise_on: bool = True,
                  electronic_noise_on: bool = True,
                  carrier_noise_on: bool = True,
                  excess_noise_on: bool = True,
                  vacuum: bool = False,
                  block_symbols: int = 16384) -> dict:
    """
    Monte Carlo run of one basis: every channel of that basis is transmitted,
    the requested channels are demultiplexed and sampled.

    :param plan: channel layout, sample rate an integer multiple of the symbol rate
    :param link: supplies t_ch and eta_det
    :param noise: detector/carrier noise and the excess-noise floor injected at Alice
    :param n_symbols: symbols per channel, >= 10^4
    :param seed: base seed
    :param basis: measured basis
    :param filters: tx/rx filter settings
    :param trial: Monte Carlo trial number, selects independent random streams
    :param receive: channel indices to demultiplex, default all of the basis
    :param vacuum: block the signal so the detector sees vacuum
    :param block_symbols: symbols per processing block
    :return {channel index: SymbolRecordSet}:
    """
    if n_symbols < 10_000:
        raise ValueError(f"n_symbols must be >= 10^4, got {n_symbols}")

    basis = Basis(basis)
    sent = plan.for_basis(basis)
    if not sent:
        raise ValueError(f"plan has no {basis.value} channels")
    rates = {c.symbol_rate_hz for c in sent}
    if len(rates) != 1:
        raise ValueError(f"channels of one basis must share a symbol rate, got {sorted(rates)}")

    fs = plan.sample_rate_hz
    floor = noise.excess_noise_floor_snu if excess_noise_on else 0.0
    transmitters = [ChannelTransmitter(c, fs, filters, floor, seed, trial) for c in sent]
    sps = transmitters[0].sps

    wanted = [c.index for c in sent] if receive is None else list(receive)
    by_index = {tx.channel.index: tx for tx in transmitters}
    for k in wanted:
        if k not in by_index:
            raise ValueError(f"channel {k} is not a {basis.value} channel of the plan")

    t_ch = link.t_ch
    _, rx_filter, prefilter = channel_filters(filters, sent[0].symbol_rate_hz)
    detector = HomodyneDetector(DetectionConfig(basis=basis, noise=noise, shot_noise_on=shot_noise_on,
                                                electronic_noise_on=electronic_noise_on,
                                                carrier_noise_on=carrier_noise_on, seed=seed,
                                                rx_filter=rx_filter, prefilter=prefilter),
                                t_ch, link.eta_det, fs, trial)

    demux = {k: DemuxPath(by_index[k].channel.if_freq_hz, basis.quadrature, rx_filter, fs, prefilter)
             for k in wanted}
    samplers = {k: SymbolSampler(sps, by_index[k].delay_s * fs) for k in wanted}
    references = {k: [] for k in wanted}

    pilots = plan.pilot_tones_for(basis)
    pilot_amp = math.sqrt(sent[0].mod_variance_snu)

    guard = int(np.ceil(max(tx.delay_s for tx in transmitters) * fs / sps)) + 2
    n_total = n_symbols + guard
    logger.info(f"simulating {len(sent)} {basis.value} channel(s), {n_symbols} symbols, T={t_ch:.4g}, "
                f"{sps} samples/symbol, trial {trial}")

    for s0 in range(0, n_total, block_symbols):
        nb = min(block_symbols, n_total - s0)
        n0 = s0 * sps
        t0 = n0 / fs
        composite = np.zeros(nb * sps)

        for tx in transmitters:
            passband, reference = tx.next_block(nb, t0)
            if tx.channel.index in references:
                references[tx.channel.index].append(reference)
            composite += passband

        block = Waveform(composite, fs, t0)
        for tone in pilots:
            composite = composite + tone.relative_amplitude * pilot_amp * carrier(block, tone.freq_hz,
                                                                                basis.quadrature)
        if vacuum:
            composite = np.zeros_like(composite)

        received = apply_channel(Waveform(composite, fs, t0), t_ch)
        detected = received.with_samples(detector.process(received))

        for k in wanted:
            samplers[k].push(demux[k].process(detected), n0)
        logger.debug(f"block at symbol {s0} done ({nb} symbols)")

    records = {}
    for k in wanted:
        bob = samplers[k].values()[:n_symbols]
        alice = np.concatenate(references[k])[:n_symbols]
        if bob.size < n_symbols:
            raise RuntimeError(f"channel {k}: sampled {bob.size} of {n_symbols} symbols")
        records[k] = SymbolRecordSet(k, basis, alice, bob)

    return records


def simulate_both_bases(plan: ChannelPlan,
                        link: LinkParams,
                        noise: NoiseProfile,
                        n_symbols: int,
                        seed: int,
                        **kwargs) -> dict:
    """
    Separate runs for the amplitude and phase bases (one basis is measured at a time).

    :return {Basis: {channel index: SymbolRecordSet}}:
    """
    return {basis: simulate_link(plan, link, noise, n_symbols, seed, basis=basis, **kwargs)
            for basis in plan.bases}
