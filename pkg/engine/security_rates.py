"""
Secret key rates of Gaussian-modulated coherent states with homodyne
detection and reverse reconciliation.

Conventions (all variances in SNU, V = V_mod + 1):

    I_AB = 1/2 log2(1 + V_mod / (1 + Xi_tot))

Holevo bound, trusted detector (detector noise hidden from Eve):

    chi_line = 1/T - 1 + eps
    chi_hom  = ((1 - eta) + nu/T) / eta
    chi_tot  = chi_line + chi_hom / T
    A = V^2 (1 - 2T) + 2T + T^2 (V + chi_line)^2
    B = T^2 (V chi_line + 1)^2
    C = (A chi_hom + V sqrt(B) + T (V + chi_line)) / (T (V + chi_tot))
    D = sqrt(B) (V + sqrt(B) chi_hom) / (T (V + chi_tot))

Untrusted detector: Eve holds the whole line of transmittance eta*T with
noise Xi_tot, and the homodyne is ideal (chi_hom = 0).

    chi_BE = G(l1) + G(l2) - G(l3) - G(l4),  G(l) = g((l - 1)/2)
    g(x) = (x + 1) log2(x + 1) - x log2(x)

Finite size: R = f_sym * (n/N) * (beta*I_AB - chi_BE(t_low, xi_high) - Delta),
Delta = 7 sqrt(log2(2/eps_bar)/n). I_AB uses the point estimates. Analytic links
extrapolate a back-to-back excess-noise estimate: t_low is taken at the link
transmittance, xi_high at T = 1.
"""

from collections.abc import Callable, Sequence
from dataclasses import dataclass, replace
from typing import Optional
import logging
import math

import numpy as np
from scipy import optimize, special

from .dsp_chain import min_if_for_rate
from .estimation import ChannelEstimate, worst_case_bounds
from .model import (
    Basis,
    ChannelPlan,
    ChannelRate,
    FiniteSizeParams,
    LinkParams,
    NoiseProfile,
    NumericalDomainError,
    RateReport,
    channel_noise,
    fiber_transmittance,
)

logger = logging.getLogger(__name__)

EIGENVALUE_TOLERANCE = 1e-9
DISCRIMINANT_TOLERANCE = 1e-12
VMOD_BOUNDS = (0.1, 50.0)
VMOD_TOLERANCE = 0.01
MAX_REACH_KM = 400.0
REACH_SCAN_STEP_KM = 2.0
# analytic links carry excess noise measured back to back
BACK_TO_BACK_T = 1.0


@dataclass(frozen=True)
class SecurityInputs:
    """
    :param v_mod_snu: modulation variance
    :param t_ch: channel transmittance (point estimate or true value)
    :param xi_snu: excess noise referred to the channel input
    :param eta_det: detector efficiency
    :param nu_det_snu: electronic noise at full LO power
    :param beta: reconciliation efficiency
    :param trusted: detector noise and inefficiency hidden from Eve
    :param f_sym_hz: symbol rate
    :param finite: finite-size parameters, None for the asymptotic regime
    """
    v_mod_snu: float
    t_ch: float
    xi_snu: float
    eta_det: float = 0.83
    nu_det_snu: float = 0.0
    beta: float = 0.9
    trusted: bool = True
    f_sym_hz: float = 10e6
    finite: Optional[FiniteSizeParams] = None

    def __post_init__(self):
        if self.v_mod_snu < 0:
            raise ValueError(f"v_mod_snu must be >= 0, got {self.v_mod_snu!r}")
        if self.t_ch <= 0:
            raise NumericalDomainError(f"transmittance must be > 0, got {self.t_ch!r}")
        if self.t_ch > 1:
            raise ValueError(f"transmittance must be <= 1, got {self.t_ch!r}")
        if self.eta_det <= 0:
            raise NumericalDomainError(f"detector efficiency must be > 0, got {self.eta_det!r}")
        if self.eta_det > 1:
            raise ValueError(f"eta_det must be <= 1, got {self.eta_det!r}")
        if self.xi_snu < 0 or self.nu_det_snu < 0:
            raise ValueError(f"noise terms must be >= 0, got xi={self.xi_snu!r}, nu={self.nu_det_snu!r}")
        if not 0 < self.beta <= 1:
            raise ValueError(f"beta must be in (0, 1], got {self.beta!r}")
        if not self.f_sym_hz > 0:
            raise ValueError(f"f_sym_hz must be positive, got {self.f_sym_hz!r}")

    @classmethod
    def from_link(cls,
                  link: LinkParams,
                  v_mod_snu: float,
                  xi_snu: float,
                  nu_det_snu: float,
                  finite: Optional[FiniteSizeParams] = None,
                  f_sym_hz: Optional[float] = None) -> "SecurityInputs":
        return cls(v_mod_snu=v_mod_snu, t_ch=link.t_ch, xi_snu=xi_snu, eta_det=link.eta_det,
                   nu_det_snu=nu_det_snu, beta=link.beta, trusted=link.trusted_devices,
                   f_sym_hz=link.f_sym_hz if f_sym_hz is None else f_sym_hz, finite=finite)

    @property
    def total_noise(self) -> float:
        return channel_noise(self.t_ch, self.eta_det, self.xi_snu, self.nu_det_snu)

    def at(self, t_ch: float, xi_snu: Optional[float] = None) -> "SecurityInputs":
        return replace(self, t_ch=t_ch, xi_snu=self.xi_snu if xi_snu is None else xi_snu)


@dataclass(frozen=True)
class KeyRate:
    bits_per_s: float
    no_key: bool = False

    def __float__(self):
        return float(self.bits_per_s)


# =============================================================================
# Information quantities
# =============================================================================

def g(x):
    """(x+1) log2(x+1) - x log2(x), with g(0) = 0."""
    x = np.asarray(x, dtype=float)
    out = (special.xlogy(x + 1.0, x + 1.0) - special.xlogy(x, x)) / math.log(2.0)
    if out.ndim == 0:
        return float(out)
    return out


def entropy_of(eigenvalue: float) -> float:
    """Von Neumann entropy of a thermal mode with symplectic eigenvalue >= 1."""
    if eigenvalue < 1.0 - EIGENVALUE_TOLERANCE:
        raise NumericalDomainError(f"symplectic eigenvalue {eigenvalue!r} below 1")
    return g(max(eigenvalue - 1.0, 0.0) / 2.0)


def mutual_information(si: SecurityInputs) -> float:
    """Alice-Bob information per symbol, bits."""
    return 0.5 * math.log2(1.0 + si.v_mod_snu / (1.0 + si.total_noise))


def _pair_from_invariants(a: float, b: float) -> tuple:
    """Symplectic pair from trace-like invariant a and determinant-like invariant b."""
    disc = a * a - 4.0 * b
    if disc < -EIGENVALUE_TOLERANCE * a * a:
        raise NumericalDomainError(f"negative discriminant {disc!r} for invariants ({a!r}, {b!r})")
    # degenerate pair: a^2 - 4b is pure roundoff
    if disc < DISCRIMINANT_TOLERANCE * a * a:
        disc = 0.0
    big = 0.5 * (a + math.sqrt(disc))
    small = b / big
    return math.sqrt(big), math.sqrt(max(small, 0.0))


def symplectic_eigenvalues(si: SecurityInputs) -> tuple:
    """
    (l1, l2) of Alice-Bob before detection and (l3, l4) of Alice conditioned
    on Bob's homodyne result.
    """
    if not si.v_mod_snu > 0:
        raise ValueError(f"Holevo bound needs v_mod > 0, got {si.v_mod_snu!r}")
    v = si.v_mod_snu + 1.0

    if si.trusted:
        t = si.t_ch
        chi_line = 1.0 / t - 1.0 + si.xi_snu
        chi_hom = ((1.0 - si.eta_det) + si.nu_det_snu / t) / si.eta_det
    else:
        t = si.eta_det * si.t_ch
        chi_line = si.total_noise
        chi_hom = 0.0
    chi_tot = chi_line + chi_hom / t

    a = v * v * (1.0 - 2.0 * t) + 2.0 * t + t * t * (v + chi_line) ** 2
    b = t * t * (v * chi_line + 1.0) ** 2
    sqrt_b = math.sqrt(b)
    c = (a * chi_hom + v * sqrt_b + t * (v + chi_line)) / (t * (v + chi_tot))
    d = sqrt_b * (v + sqrt_b * chi_hom) / (t * (v + chi_tot))

    return _pair_from_invariants(a, b) + _pair_from_invariants(c, d)


def holevo_bound(si: SecurityInputs) -> float:
    """Eve's information on Bob's data per symbol, bits."""
    l1, l2, l3, l4 = symplectic_eigenvalues(si)
    return entropy_of(l1) + entropy_of(l2) - entropy_of(l3) - entropy_of(l4)


# ====== Covariance-matrix route ======

def _omega(n_modes: int) -> np.ndarray:
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def symplectic_spectrum(gamma: np.ndarray) -> np.ndarray:
    """Symplectic eigenvalues of a covariance matrix ordered (x1, p1, x2, p2, ...)."""
    gamma = np.asarray(gamma, dtype=float)
    w, u = np.linalg.eigh(gamma)
    if w.min() <= 0:
        raise NumericalDomainError(f"covariance matrix is not positive definite (min eigenvalue {w.min():.3g})")
    root = (u * np.sqrt(w)) @ u.T
    ev = np.linalg.eigvalsh(root @ (1j * _omega(gamma.shape[0] // 2)) @ root)
    return np.sort(np.abs(ev))[::2]


def _epr_covariance(v: float, t: float, chi: float) -> np.ndarray:
    """Two-mode state of Alice's EPR half and Bob's mode after a channel (t, chi)."""
    eye = np.eye(2)
    z = np.diag([1.0, -1.0])
    c = math.sqrt(t * (v * v - 1.0))
    return np.block([[v * eye, c * z], [c * z, t * (v + chi) * eye]])


def _condition_on_x(gamma: np.ndarray, mode: int) -> np.ndarray:
    """Schur complement for an x-quadrature homodyne measurement of one mode."""
    measured = [2 * mode, 2 * mode + 1]
    rest = [ii for ii in range(gamma.shape[0]) if ii not in measured]
    cross = gamma[np.ix_(rest, measured)]
    projector_inv = np.diag([1.0 / gamma[2 * mode, 2 * mode], 0.0])
    return gamma[np.ix_(rest, rest)] - cross @ projector_inv @ cross.T


def holevo_bound_covariance(si: SecurityInputs) -> float:
    """
    Holevo bound from explicit covariance matrices: entanglement-based picture
    with the detector modelled as a beamsplitter (efficiency eta) mixing in one
    half of a thermal EPR pair, followed by Schur-complement conditioning.
    Independent of the closed forms in symplectic_eigenvalues.
    """
    if not si.v_mod_snu > 0:
        raise ValueError(f"Holevo bound needs v_mod > 0, got {si.v_mod_snu!r}")
    v = si.v_mod_snu + 1.0

    if not si.trusted:
        gamma = _epr_covariance(v, si.eta_det * si.t_ch, si.total_noise)
        before = symplectic_spectrum(gamma)
        after = symplectic_spectrum(_condition_on_x(gamma, 1))
    else:
        t = si.t_ch
        gamma_ab = _epr_covariance(v, t, 1.0 / t - 1.0 + si.xi_snu)
        before = symplectic_spectrum(gamma_ab)

        if si.eta_det == 1.0:
            if si.nu_det_snu > 0:
                raise ValueError("covariance model needs eta_det < 1 when nu_det_snu > 0")
            after = symplectic_spectrum(_condition_on_x(gamma_ab, 1))
        else:
            w = 1.0 + (si.nu_det_snu / t) / (1.0 - si.eta_det)
            eye = np.eye(2)
            z = np.diag([1.0, -1.0])
            gamma_fg = np.block([[w * eye, math.sqrt(w * w - 1.0) * z],
                                 [math.sqrt(w * w - 1.0) * z, w * eye]])
            gamma = np.zeros((8, 8))
            gamma[:4, :4] = gamma_ab
            gamma[4:, 4:] = gamma_fg

            # modes: A, B, F, G; beamsplitter between B and F
            s = np.eye(8)
            te, re = math.sqrt(si.eta_det), math.sqrt(1.0 - si.eta_det)
            s[2:4, 2:4] = te * eye
            s[2:4, 4:6] = re * eye
            s[4:6, 2:4] = -re * eye
            s[4:6, 4:6] = te * eye
            after = symplectic_spectrum(_condition_on_x(s @ gamma @ s.T, 1))

    return float(sum(entropy_of(x) for x in before) - sum(entropy_of(x) for x in after))


# =============================================================================
# Key rates
# =============================================================================

def finite_size_delta(n_key: int, eps_bar: float) -> float:
    """Privacy-amplification penalty 7 sqrt(log2(2/eps_bar)/n), bits per symbol."""
    if n_key <= 0:
        raise ValueError(f"n_key must be positive, got {n_key}")
    if not 0 < eps_bar < 1:
        raise ValueError(f"eps_bar must be in (0, 1), got {eps_bar!r}")
    return 7.0 * math.sqrt(math.log2(2.0 / eps_bar) / n_key)


def skr_asymptotic(si: SecurityInputs) -> KeyRate:
    """f_sym * (beta*I_AB - chi_BE), clamped at 0."""
    raw = si.f_sym_hz * (si.beta * mutual_information(si) - holevo_bound(si))
    if raw <= 0:
        return KeyRate(0.0, True)
    return KeyRate(raw)


def skr_finite(si: SecurityInputs, worst: Optional[tuple] = None) -> KeyRate:
    """
    Finite-size key rate.

    :param si: inputs at the point estimates, with finite-size parameters
    :param worst: (t_low, xi_high) for the Holevo bound, point estimates when None
    :return rate: clamped at 0 with no_key set
    """
    if si.finite is None:
        raise ValueError("finite-size key rate needs FiniteSizeParams")
    t_low, xi_high = (si.t_ch, si.xi_snu) if worst is None else worst
    if t_low <= 0:
        logger.debug("worst-case transmittance is 0, no key")
        return KeyRate(0.0, True)

    fin = si.finite
    delta = finite_size_delta(fin.n_key, fin.eps_bar)
    chi = holevo_bound(si.at(min(t_low, 1.0), xi_high))
    raw = si.f_sym_hz * (fin.n_key / fin.n_total) * (si.beta * mutual_information(si) - chi - delta)
    if raw <= 0:
        return KeyRate(0.0, True)
    return KeyRate(raw)


def finite_bounds(si: SecurityInputs, xi_reference_t: Optional[float] = None) -> tuple:
    """
    (t_low, xi_high) for the point estimates in si.

    :param si: point estimates with finite-size parameters
    :param xi_reference_t: transmittance at which the excess noise was estimated
        (si.t_ch when None); xi_high carries the estimator spread at that point
    :return t_low, xi_high:
    """
    fin = si.finite
    t_low, xi_high = worst_case_bounds(si.t_ch, si.xi_snu, fin.m_pe, si.v_mod_snu, fin.eps_pe,
                                       eta_det=si.eta_det, nu_det_snu=si.nu_det_snu)
    if xi_reference_t is not None:
        _, xi_high = worst_case_bounds(xi_reference_t, si.xi_snu, fin.m_pe, si.v_mod_snu, fin.eps_pe,
                                       eta_det=si.eta_det, nu_det_snu=si.nu_det_snu)
    return t_low, xi_high


def channel_rate(k: int, basis: Basis, si: SecurityInputs, xi_reference_t: Optional[float] = None) -> ChannelRate:
    """
    Full report row of one channel from point estimates carried in si.

    :param k: channel index
    :param basis: channel basis
    :param si: point estimates with finite-size parameters
    :param xi_reference_t: see finite_bounds; BACK_TO_BACK_T for noise extrapolated from a back-to-back measurement
    :return row:
    """
    if si.finite is None:
        raise ValueError("channel report needs FiniteSizeParams")
    fin = si.finite
    t_low, xi_high = finite_bounds(si, xi_reference_t)
    finite = skr_finite(si, (t_low, xi_high))
    asympt = skr_asymptotic(si)
    chi_worst = holevo_bound(si.at(min(t_low, 1.0), xi_high)) if t_low > 0 else float("nan")

    if finite.no_key:
        logger.debug(f"channel {k} ({Basis(basis).value}): no finite-size key at T={si.t_ch:.4g}")
    return ChannelRate(k=k, basis=Basis(basis), t_hat=si.t_ch, xi_hat_snu=si.xi_snu, t_low=t_low,
                       xi_high_snu=xi_high, i_ab_bits=mutual_information(si), chi_be_bits=chi_worst,
                       delta_bits=finite_size_delta(fin.n_key, fin.eps_bar),
                       skr_finite_bits_per_s=finite.bits_per_s, skr_asympt_bits_per_s=asympt.bits_per_s,
                       no_key=finite.no_key)


def rate_from_estimate(estimate: ChannelEstimate,
                       link: LinkParams,
                       finite: FiniteSizeParams,
                       f_sym_hz: float) -> ChannelRate:
    """Report row of a simulated channel; an estimate above 1 is capped at unit transmittance."""
    t_hat = min(estimate.t_hat, 1.0)
    si = SecurityInputs(v_mod_snu=estimate.v_mod_snu, t_ch=t_hat, xi_snu=estimate.xi_hat_snu,
                        eta_det=estimate.eta_det, nu_det_snu=estimate.nu_det_snu, beta=link.beta,
                        trusted=link.trusted_devices, f_sym_hz=f_sym_hz,
                        finite=replace(finite, m_pe=estimate.m) if estimate.m < finite.n_total else finite)
    return channel_rate(estimate.channel, estimate.basis, si)


def total_skr(rates: Sequence, basis: Basis, finite: bool = True) -> float:
    """Sum of the per-channel rates of one basis."""
    basis = Basis(basis)
    return float(sum(r.skr_finite_bits_per_s if finite else r.skr_asympt_bits_per_s
                     for r in rates if r.basis is basis))


# =============================================================================
# Distance and modulation variance
# =============================================================================

def rate_at_distance(si: SecurityInputs,
                     length_km: float,
                     loss_db_per_km: float = 0.2,
                     finite: bool = True) -> float:
    """
    Key rate of the template si moved to a fiber length. Finite rates use
    t_low at that length and xi_high of a back-to-back excess-noise estimate.
    """
    moved = si.at(fiber_transmittance(length_km, loss_db_per_km))
    if not finite:
        return skr_asymptotic(moved).bits_per_s
    return skr_finite(moved, finite_bounds(moved, BACK_TO_BACK_T)).bits_per_s


def max_distance(si: SecurityInputs,
                 resolution_km: float = 0.1,
                 loss_db_per_km: float = 0.2,
                 finite: bool = True,
                 rate_fn: Optional[Callable[[float], float]] = None) -> float:
    """
    Longest fiber with a positive key rate: coarse upward scan to the first
    zero, then bisection down to resolution_km.

    :param si: template; t_ch is replaced by the fiber transmittance
    :param resolution_km: bisection stopping width
    :param loss_db_per_km: fiber attenuation
    :param finite: finite-size (True) or asymptotic rate
    :param rate_fn: custom rate-vs-length function overriding si
    :return reach_km: 0 when no key even back to back
    """
    if resolution_km <= 0:
        raise ValueError(f"resolution_km must be positive, got {resolution_km!r}")
    if finite and rate_fn is None and si.finite is None:
        raise ValueError("finite-size reach needs FiniteSizeParams")
    if rate_fn is None:
        def rate_fn(length_km):
            return rate_at_distance(si, length_km, loss_db_per_km, finite)

    if rate_fn(0.0) <= 0:
        logger.debug("no positive key rate at 0 km")
        return 0.0

    lo = 0.0
    hi = None
    for length in np.arange(REACH_SCAN_STEP_KM, MAX_REACH_KM + REACH_SCAN_STEP_KM / 2, REACH_SCAN_STEP_KM):
        if rate_fn(float(length)) > 0:
            lo = float(length)
        else:
            hi = float(length)
            break
    if hi is None:
        logger.warning(f"key rate still positive at {MAX_REACH_KM:.0f} km")
        return MAX_REACH_KM

    while hi - lo > resolution_km:
        mid = 0.5 * (lo + hi)
        if rate_fn(mid) > 0:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class VmodOptimum:
    v_mod_snu: float
    skr_asympt_bits_per_s: float
    flat: bool = False


def optimize_vmod(si: SecurityInputs, target_km: float, loss_db_per_km: float = 0.2) -> VmodOptimum:
    """
    Modulation variance maximizing the asymptotic key rate at target_km
    (bounded Brent search over [0.1, 50] SNU, tolerance 0.01 SNU).
    A flat objective (no key anywhere) returns the lower bound with flat set.
    """
    t = fiber_transmittance(target_km, loss_db_per_km)

    def rate(v_mod):
        return skr_asymptotic(replace(si, v_mod_snu=float(v_mod), t_ch=t)).bits_per_s

    coarse = [rate(v) for v in np.linspace(VMOD_BOUNDS[0], VMOD_BOUNDS[1], 11)]
    if max(coarse) - min(coarse) <= 1e-12 * max(1.0, abs(max(coarse))):
        logger.warning(f"key rate flat in V_mod at {target_km} km, returning lower bound")
        return VmodOptimum(VMOD_BOUNDS[0], rate(VMOD_BOUNDS[0]), flat=True)

    res = optimize.minimize_scalar(lambda v: -rate(v), bounds=VMOD_BOUNDS, method="bounded",
                                   options={"xatol": VMOD_TOLERANCE})
    v_best = float(res.x)
    logger.info(f"optimal V_mod at {target_km} km: {v_best:.3f} SNU ({-res.fun:.4g} bit/s)")
    return VmodOptimum(v_best, rate(v_best))


# =============================================================================
# Plans
# =============================================================================

def evaluate_plan(plan: ChannelPlan,
                  link: LinkParams,
                  noise: NoiseProfile,
                  finite: FiniteSizeParams,
                  excess_noise_snu: float,
                  xi_reference_t: Optional[float] = BACK_TO_BACK_T) -> list:
    """
    Analytic rate reports, one per basis: every channel sees the link
    transmittance, excess noise excess_noise_snu and nu from the detector
    profile at its IF. Each channel's symbol rate sets its f_sym. The
    excess-noise bound is taken at xi_reference_t (see finite_bounds).

    :return reports:
    """
    reports = []
    for basis in plan.bases:
        rows = []
        for c in plan.for_basis(basis):
            si = SecurityInputs.from_link(link, c.mod_variance_snu, excess_noise_snu,
                                          noise.nu_det(c.if_freq_hz), finite, f_sym_hz=c.symbol_rate_hz)
            rows.append(channel_rate(c.index, basis, si, xi_reference_t))
        reports.append(RateReport.from_channels(basis, rows))
    return reports


def plan_total(plan: ChannelPlan,
               link: LinkParams,
               noise: NoiseProfile,
               finite: FiniteSizeParams,
               excess_noise_snu: float,
               finite_rate: bool = True) -> float:
    """Worst-basis total key rate of a plan (minimum over the bases present)."""
    reports = evaluate_plan(plan, link, noise, finite, excess_noise_snu)
    key = "total_finite_bits_per_s" if finite_rate else "total_asympt_bits_per_s"
    return min(getattr(r, key) for r in reports)


def multiplexing_gain(plan: ChannelPlan,
                      link: LinkParams,
                      noise: NoiseProfile,
                      finite: FiniteSizeParams,
                      excess_noise: Callable[[int], float],
                      n_channels: int,
                      finite_rate: bool = True) -> float:
    """
    Total rate of the n lowest-IF channels per basis relative to a single channel,
    each with its channel-count dependent excess noise.
    """
    single = plan_total(plan.truncated(1), link, noise, finite, excess_noise(1), finite_rate)
    if single <= 0:
        raise NumericalDomainError("single-channel reference has no key")
    multi = plan_total(plan.truncated(n_channels), link, noise, finite, excess_noise(n_channels), finite_rate)
    return multi / single


def symbol_rate_gain(link: LinkParams,
                     noise: NoiseProfile,
                     finite: FiniteSizeParams,
                     excess_noise_snu: float,
                     symbol_rates_hz: Sequence,
                     base_rate_hz: float = 10e6,
                     v_mod_snu: float = 5.8,
                     finite_rate: bool = True) -> list:
    """
    Key rate of one channel at each symbol rate, placed at the lowest usable IF
    for that rate, relative to one channel at base_rate_hz.

    :return rows: (symbol_rate_hz, if_freq_hz, nu_det_snu, rate_bits_per_s, gain)
    """
    def single(rate_hz):
        f_if = min_if_for_rate(rate_hz)
        nu = noise.nu_det(f_if)
        si = SecurityInputs.from_link(link, v_mod_snu, excess_noise_snu, nu, finite, f_sym_hz=rate_hz)
        row = channel_rate(1, Basis.AMPLITUDE, si, BACK_TO_BACK_T)
        value = row.skr_finite_bits_per_s if finite_rate else row.skr_asympt_bits_per_s
        return f_if, nu, value

    base = single(base_rate_hz)[2]
    if base <= 0:
        raise NumericalDomainError(f"no key at the base rate {base_rate_hz:.4g} Bd")

    rows = []
    for rate_hz in symbol_rates_hz:
        f_if, nu, value = single(float(rate_hz))
        rows.append((float(rate_hz), f_if, nu, value, value / base))
    return rows


def plan_reach(plan: ChannelPlan,
               link: LinkParams,
               noise: NoiseProfile,
               finite: FiniteSizeParams,
               excess_noise_snu: float,
               finite_rate: bool = True,
               resolution_km: float = 0.1) -> float:
    """Longest fiber over which the plan's worst-basis total key rate stays positive."""
    def rate_fn(length_km):
        return plan_total(plan, link.at_distance(length_km), noise, finite, excess_noise_snu, finite_rate)

    return max_distance(None, resolution_km=resolution_km, finite=finite_rate, rate_fn=rate_fn)
