"""
Physical and security parameters of a frequency-multiplexed CV-QKD link.

Every variance in this package is expressed in shot-noise units (SNU): the
vacuum quadrature variance is 1. Bob's homodyne output for a channel with
transmittance T, detector efficiency eta, excess noise xi (referred to the
channel input) and electronic noise nu (relative to shot noise at full LO
power) has variance

    eta * T * (V_mod + xi) + 1 + nu / T

where the 1/T on the electronic term comes from the transmitted local
oscillator: the LO is attenuated by the same fiber, so shot noise shrinks
relative to the detector's own noise.
"""

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, replace
from typing import Optional
import enum
import logging
import math

import numpy as np

logger = logging.getLogger(__name__)


class NumericalDomainError(ArithmeticError):
    """Raised when a physical quantity leaves its mathematical domain."""


class Quadrature(str, enum.Enum):
    IN_PHASE = "in_phase"
    QUADRATURE = "quadrature"


class Basis(str, enum.Enum):
    """Modulation/measurement basis. Amplitude rides on cos, phase on sin."""
    AMPLITUDE = "amplitude"
    PHASE = "phase"

    @property
    def quadrature(self) -> Quadrature:
        return Quadrature.IN_PHASE if self is Basis.AMPLITUDE else Quadrature.QUADRATURE


# =============================================================================
# Frequency profiles
# =============================================================================

@dataclass(frozen=True)
class PiecewiseLinear:
    """
    Piecewise-linear map freq_Hz -> value, even in frequency and held constant
    beyond the outermost breakpoints.

    :param points: ((freq_Hz, value), ...) with strictly increasing, non-negative frequencies
    """
    points: tuple

    def __post_init__(self):
        pts = tuple((float(f), float(v)) for f, v in self.points)
        object.__setattr__(self, "points", pts)
        valid, error = validate_profile_points(pts)
        if not valid:
            raise ValueError(f"invalid frequency profile: {error:s}")

    @classmethod
    def constant(cls, value: float) -> "PiecewiseLinear":
        return cls(((0.0, value),))

    @property
    def freqs(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def values(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])

    def __call__(self, f_hz):
        out = np.interp(np.abs(f_hz), self.freqs, self.values)
        if np.ndim(out) == 0:
            return float(out)
        return out

    def scaled(self, factor: float) -> "PiecewiseLinear":
        return PiecewiseLinear(tuple((f, v * factor) for f, v in self.points))

    def is_zero(self) -> bool:
        return all(v == 0 for _, v in self.points)


def validate_profile_points(points: Sequence) -> tuple:
    """
    Check breakpoints of a piecewise-linear profile.

    :param points: sequence of (freq_Hz, value) pairs
    :return success, message:
    """
    if len(points) == 0:
        return False, "profile needs at least one breakpoint"

    freqs = [p[0] for p in points]
    for f, v in points:
        if not (math.isfinite(f) and math.isfinite(v)):
            return False, f"non-finite breakpoint ({f!r}, {v!r})"
        if f < 0:
            return False, f"negative frequency {f!r}"
        if v < 0:
            return False, f"negative value {v!r} at {f!r} Hz"

    if any(b <= a for a, b in zip(freqs[:-1], freqs[1:])):
        return False, "frequencies must be strictly increasing"

    return True, "profile validated"


# =============================================================================
# Channel plan
# =============================================================================

@dataclass(frozen=True)
class ChannelSpec:
    """One Gaussian-modulated baseband signal on its IF subcarrier."""
    index: int
    symbol_rate_hz: float
    if_freq_hz: float
    mod_variance_snu: float
    basis: Basis = Basis.AMPLITUDE

    def __post_init__(self):
        object.__setattr__(self, "basis", Basis(self.basis))


@dataclass(frozen=True)
class PilotTone:
    freq_hz: float
    relative_amplitude: float
    basis: Basis = Basis.AMPLITUDE

    def __post_init__(self):
        object.__setattr__(self, "basis", Basis(self.basis))
        if not self.freq_hz > 0 or self.relative_amplitude < 0:
            raise ValueError(f"pilot tone needs freq > 0 and amplitude >= 0, got {self!r}")


@dataclass(frozen=True)
class FilterConfig:
    """
    Transmit/receive filter settings shared by every channel.

    :param order: Bessel order of the tx pulse-shaping and rx channel filters
    :param f3db_per_symbol_rate: 3-dB bandwidth as a multiple of the channel symbol rate
    :param demux_bandwidth_hz: optional front-end demultiplexer bandwidth, 0 disables it
    """
    order: int = 4
    f3db_per_symbol_rate: float = 1.0
    demux_bandwidth_hz: float = 0.0

    def __post_init__(self):
        if not 1 <= self.order <= 8:
            raise ValueError(f"filter order must be in 1..8, got {self.order}")
        if not self.f3db_per_symbol_rate > 0:
            raise ValueError(f"f3db_per_symbol_rate must be positive, got {self.f3db_per_symbol_rate!r}")
        if self.demux_bandwidth_hz < 0:
            raise ValueError(f"demux_bandwidth_hz must be >= 0, got {self.demux_bandwidth_hz!r}")


@dataclass(frozen=True)
class ChannelPlan:
    """
    FDM layout. Channels 1..N ride on the amplitude modulator and N+1..2N on
    the phase modulator; channel k and N+k share an IF.

    :param channels: channel specs, any order; stored sorted by index
    :param spacing_hz: nominal spacing, derived from the IFs when None and uniform
    :param pilot_tones: optional additive sinusoids per basis
    :param sample_rate_hz: simulation sample rate
    """
    channels: tuple
    spacing_hz: Optional[float] = None
    pilot_tones: tuple = ()
    sample_rate_hz: float = 1.28e9

    def __post_init__(self):
        chans = tuple(sorted(self.channels, key=lambda c: c.index))
        object.__setattr__(self, "channels", chans)
        object.__setattr__(self, "pilot_tones", tuple(self.pilot_tones))

        valid, error = validate_plan(chans, self.sample_rate_hz)
        if not valid:
            raise ValueError(f"channel plan validation failed with error '{error:s}'")

        if self.spacing_hz is None:
            object.__setattr__(self, "spacing_hz", _uniform_spacing(chans))

    @classmethod
    def uniform(cls,
                n_channels: int,
                first_if_hz: float = 64e6,
                spacing_hz: float = 40e6,
                symbol_rate_hz: float = 10e6,
                mod_variance_snu: float = 5.8,
                bases: Iterable[Basis] = (Basis.AMPLITUDE, Basis.PHASE),
                sample_rate_hz: float = 1.28e9) -> "ChannelPlan":
        """Evenly spaced plan with the same channel layout in every basis."""
        if n_channels < 1:
            raise ValueError(f"n_channels must be >= 1, got {n_channels}")

        chans = []
        for ib, basis in enumerate(bases):
            for ii in range(n_channels):
                chans.append(ChannelSpec(index=ib * n_channels + ii + 1,
                                         symbol_rate_hz=symbol_rate_hz,
                                         if_freq_hz=first_if_hz + ii * spacing_hz,
                                         mod_variance_snu=mod_variance_snu,
                                         basis=Basis(basis)))
        return cls(tuple(chans), spacing_hz=spacing_hz, sample_rate_hz=sample_rate_hz)

    @property
    def bases(self) -> tuple:
        return tuple(b for b in Basis if self.for_basis(b))

    def for_basis(self, basis: Basis) -> tuple:
        return tuple(c for c in self.channels if c.basis is Basis(basis))

    def channel(self, index: int) -> ChannelSpec:
        for c in self.channels:
            if c.index == index:
                return c
        raise KeyError(f"no channel with index {index}")

    def truncated(self, n_per_basis: int) -> "ChannelPlan":
        """Keep the n lowest-IF channels of every basis."""
        keep = []
        for basis in self.bases:
            keep.extend(sorted(self.for_basis(basis), key=lambda c: c.if_freq_hz)[:n_per_basis])
        return replace(self, channels=tuple(keep), spacing_hz=None)

    def pilot_tones_for(self, basis: Basis) -> tuple:
        return tuple(p for p in self.pilot_tones if p.basis is Basis(basis))

    def samples_per_symbol(self, channel: ChannelSpec) -> float:
        return self.sample_rate_hz / channel.symbol_rate_hz


def _uniform_spacing(channels: Sequence) -> Optional[float]:
    spacings = set()
    for basis in Basis:
        ifs = [c.if_freq_hz for c in channels if c.basis is basis]
        spacings.update(b - a for a, b in zip(ifs[:-1], ifs[1:]))
    if len(spacings) == 1:
        return spacings.pop()
    return None


def validate_plan(channels: Sequence, sample_rate_hz: float = 1.28e9) -> tuple:
    """
    Check that a channel list is a usable FDM layout.

    :param channels: sequence of ChannelSpec
    :param sample_rate_hz: simulation sample rate
    :return success, message:
    """
    if len(channels) == 0:
        return False, "plan has no channels"
    if not sample_rate_hz > 0:
        return False, f"sample rate must be positive, got {sample_rate_hz!r}"

    indices = [c.index for c in channels]
    if len(set(indices)) != len(indices):
        return False, f"duplicate channel indices in {indices}"

    for c in channels:
        if not c.symbol_rate_hz > 0:
            return False, f"channel {c.index}: symbol rate must be positive"
        if not c.if_freq_hz > 0:
            return False, f"channel {c.index}: IF frequency must be positive"
        if not c.mod_variance_snu > 0:
            return False, f"channel {c.index}: modulation variance must be positive"

    for basis in Basis:
        block = [c for c in channels if c.basis is basis]
        ifs = [c.if_freq_hz for c in block]
        if any(b <= a for a, b in zip(ifs[:-1], ifs[1:])):
            return False, f"{basis.value} channel IFs must increase strictly with channel index"

    return True, "plan validated"


def check_plan_design_rules(plan: ChannelPlan) -> list:
    """
    Soft layout checks: first-channel IF against the 6.4 x symbol-rate rule and
    spacing against first-sidelobe overlap (4 x symbol rate). Logs each finding.

    :return: list of warning strings
    """
    findings = []
    for basis in plan.bases:
        block = plan.for_basis(basis)
        for c in block:
            f_min = 6.4 * c.symbol_rate_hz
            if c.if_freq_hz < f_min:
                findings.append(f"channel {c.index}: IF {c.if_freq_hz / 1e6:.1f} MHz below "
                                f"{f_min / 1e6:.1f} MHz, sideband overlap expected")
        for a, b in zip(block[:-1], block[1:]):
            if b.if_freq_hz - a.if_freq_hz < 2 * (a.symbol_rate_hz + b.symbol_rate_hz):
                findings.append(f"channels {a.index}/{b.index}: spacing "
                                f"{(b.if_freq_hz - a.if_freq_hz) / 1e6:.1f} MHz overlaps first sidelobes")

    for msg in findings:
        logger.warning(msg)
    return findings


# =============================================================================
# Link, finite-size and noise parameters
# =============================================================================

def fiber_transmittance(length_km: float, loss_db_per_km: float = 0.2) -> float:
    """
    Power transmittance of a fiber span.

    :param length_km: fiber length
    :param loss_db_per_km: attenuation coefficient
    :return: 10^(-loss * length / 10)
    """
    if length_km < 0 or loss_db_per_km < 0:
        raise ValueError(f"length and loss must be non-negative, got {length_km!r} km, {loss_db_per_km!r} dB/km")
    return 10.0 ** (-loss_db_per_km * length_km / 10.0)


@dataclass(frozen=True)
class LinkParams:
    """
    :param fiber_length_km: span length, sets t_ch unless transmittance is given
    :param fiber_loss_db_per_km: attenuation
    :param eta_det: detector quantum efficiency
    :param beta: reconciliation efficiency
    :param trusted_devices: detector noise and inefficiency calibrated and hidden from Eve
    :param f_sym_hz: symbol rate entering the key-rate formulas
    :param transmittance: explicit channel transmittance overriding the fiber model
    """
    fiber_length_km: float = 0.0
    fiber_loss_db_per_km: float = 0.2
    eta_det: float = 0.83
    beta: float = 0.9
    trusted_devices: bool = True
    f_sym_hz: float = 10e6
    transmittance: Optional[float] = None

    def __post_init__(self):
        if self.fiber_length_km < 0 or self.fiber_loss_db_per_km < 0:
            raise ValueError("fiber length and loss must be non-negative")
        if not 0 < self.eta_det <= 1:
            raise ValueError(f"eta_det must be in (0, 1], got {self.eta_det!r}")
        if not 0 < self.beta <= 1:
            raise ValueError(f"beta must be in (0, 1], got {self.beta!r}")
        if not self.f_sym_hz > 0:
            raise ValueError(f"f_sym_hz must be positive, got {self.f_sym_hz!r}")
        if self.transmittance is not None and not 0 < self.transmittance <= 1:
            raise ValueError(f"transmittance must be in (0, 1], got {self.transmittance!r}")

    @property
    def t_ch(self) -> float:
        if self.transmittance is not None:
            return self.transmittance
        return fiber_transmittance(self.fiber_length_km, self.fiber_loss_db_per_km)

    def at_distance(self, length_km: float) -> "LinkParams":
        return replace(self, fiber_length_km=length_km, transmittance=None)


@dataclass(frozen=True)
class FiniteSizeParams:
    """
    :param n_total: exchanged symbols N
    :param m_pe: symbols sacrificed for parameter estimation m
    :param eps_bar: privacy-amplification failure probability
    :param eps_pe: parameter-estimation failure probability
    """
    n_total: int = 10_000_000
    m_pe: int = 1_250_000
    eps_bar: float = 1e-10
    eps_pe: float = 1e-10

    def __post_init__(self):
        if self.m_pe <= 0 or self.n_total <= self.m_pe:
            raise ValueError(f"need 0 < m_pe < n_total, got m_pe={self.m_pe}, n_total={self.n_total}")
        for name in ("eps_bar", "eps_pe"):
            p = getattr(self, name)
            if not 0 < p < 1:
                raise ValueError(f"{name} must be in (0, 1), got {p!r}")

    @property
    def n_key(self) -> int:
        return self.n_total - self.m_pe


@dataclass(frozen=True)
class NoiseProfile:
    """
    Frequency-dependent noise seen by the homodyne detector.

    :param detector_ratio: electronic-to-shot noise ratio vs frequency at full LO power
    :param carrier_noise: near-carrier frequency-noise variance vs frequency, SNU at the channel input
    :param excess_noise_floor_snu: excess noise not produced by the simulation itself
    :param detector_scale: calibration multiplier applied to detector_ratio
    """
    detector_ratio: PiecewiseLinear = field(default_factory=lambda: PiecewiseLinear.constant(0.0))
    carrier_noise: PiecewiseLinear = field(default_factory=lambda: PiecewiseLinear.constant(0.0))
    excess_noise_floor_snu: float = 0.0
    detector_scale: float = 1.0

    def __post_init__(self):
        if self.excess_noise_floor_snu < 0:
            raise ValueError(f"excess_noise_floor_snu must be >= 0, got {self.excess_noise_floor_snu!r}")
        if self.detector_scale < 0:
            raise ValueError(f"detector_scale must be >= 0, got {self.detector_scale!r}")

    @classmethod
    def synthetic_default(cls) -> "NoiseProfile":
        """
        Synthetic profile: detector noise stays near 1% of shot noise up to
        ~200 MHz and climbs steeply past 250 MHz; a frequency-noise hump covers
        0-20 MHz. Not measured data.
        """
        detector = PiecewiseLinear(((0.0, 0.010), (100e6, 0.012), (200e6, 0.020), (250e6, 0.035),
                                    (300e6, 0.070), (350e6, 0.13), (400e6, 0.22), (500e6, 0.50),
                                    (640e6, 1.0)))
        carrier = PiecewiseLinear(((0.0, 400.0), (20e6, 400.0), (22e6, 0.0)))
        return cls(detector_ratio=detector, carrier_noise=carrier, excess_noise_floor_snu=0.05)

    def nu_det(self, f_hz) -> float:
        """Electronic noise at an IF, SNU relative to full-power shot noise."""
        return self.detector_scale * self.detector_ratio(f_hz)

    def calibrated(self, excess_noise_floor_snu: float, detector_scale: float) -> "NoiseProfile":
        return replace(self, excess_noise_floor_snu=excess_noise_floor_snu, detector_scale=detector_scale)


# =============================================================================
# Rate reports
# =============================================================================

@dataclass(frozen=True)
class ChannelRate:
    """One row of a rate report; t/xi fields are point estimates and worst-case bounds."""
    k: int
    basis: Basis
    t_hat: float
    xi_hat_snu: float
    t_low: float
    xi_high_snu: float
    i_ab_bits: float
    chi_be_bits: float
    delta_bits: float
    skr_finite_bits_per_s: float
    skr_asympt_bits_per_s: float
    no_key: bool = False


@dataclass(frozen=True)
class RateReport:
    """Per-channel rates of one basis and their sums over the basis."""
    basis: Basis
    per_channel: tuple
    total_finite_bits_per_s: float
    total_asympt_bits_per_s: float
    worst_basis_total_bits_per_s: float

    @classmethod
    def from_channels(cls, basis: Basis, per_channel: Sequence) -> "RateReport":
        chans = tuple(c for c in per_channel if c.basis is Basis(basis))
        total_finite = float(sum(c.skr_finite_bits_per_s for c in chans))
        total_asympt = float(sum(c.skr_asympt_bits_per_s for c in chans))
        return cls(Basis(basis), chans, total_finite, total_asympt, total_finite)


# =============================================================================
# Total noise
# =============================================================================

def channel_noise(t_ch: float, eta_det: float, epsilon_snu: float, nu_det_snu: float) -> float:
    """
    Total noise referred to the channel input:
    (1-T)/T + eps + ((1-eta)/eta + (nu/T)/eta) / T.
    """
    if t_ch <= 0:
        raise NumericalDomainError(f"transmittance must be > 0, got {t_ch!r}")
    if eta_det <= 0:
        raise NumericalDomainError(f"detector efficiency must be > 0, got {eta_det!r}")
    if epsilon_snu < 0 or nu_det_snu < 0:
        raise ValueError(f"noise terms must be non-negative, got eps={epsilon_snu!r}, nu={nu_det_snu!r}")

    chi_line = (1.0 - t_ch) / t_ch + epsilon_snu
    chi_det = ((1.0 - eta_det) / eta_det + (nu_det_snu / t_ch) / eta_det) / t_ch
    return chi_line + chi_det


def total_noise(link: LinkParams, epsilon_snu: float, nu_det_snu: float) -> float:
    """
    Total channel-input-referred noise of a transmitted-LO link.

    :param link: link parameters, supplies t_ch and eta_det
    :param epsilon_snu: excess noise
    :param nu_det_snu: electronic noise at full LO power
    :return Xi_tot: SNU
    """
    return channel_noise(link.t_ch, link.eta_det, epsilon_snu, nu_det_snu)
