"""
Channel parameter estimation from symbol records.

Bob's samples are modelled as y = s*x + r with s = sqrt(T*eta) and residual
variance 1 + nu/T + eta*T*xi (shot noise, trusted electronic noise at the
attenuated LO, excess noise referred to the channel input). With x Alice's
reference values:

    s_hat   = sum(x*y) / sum(x^2)
    t_hat   = s_hat^2 / eta
    var_r   = mean((y - s_hat*x)^2)
    xi_hat  = (var_r - 1 - nu/t_hat) / (t_hat*eta)

Worst-case bounds use the normal approximation with z = isf(eps_pe/2):

    sigma_s = sqrt(var_r / (m*V_mod))
    t_low   = (sqrt(t_hat) - z*sigma_s/sqrt(eta))^2     (0 if the root goes negative)
    xi_high = xi_hat + z*var_r*sqrt(2/m)/(t_hat*eta)
"""

from collections.abc import Sequence
from dataclasses import dataclass, replace
import logging
import math

import numpy as np
from scipy import stats

from .dsp_chain import SymbolRecordSet, derive_rng
from .model import Basis, NumericalDomainError, RateReport

logger = logging.getLogger(__name__)

STAGE_SUBSET = 5
T_HAT_MAX = 1.05

ESTIMATION_COLUMNS = ("channel", "basis", "m", "t_hat", "t_low", "xi_hat", "xi_high")


@dataclass(frozen=True)
class ChannelEstimate:
    """
    Point estimates of one channel with the quantities the bounds need.

    :param channel: channel index
    :param basis: measured basis
    :param m: number of parameter-estimation symbols used
    :param v_mod_snu: modulation variance of the channel
    :param eta_det: detector efficiency used for the referral
    :param nu_det_snu: trusted electronic noise used for the referral
    :param slope: least-squares slope of bob on alice
    :param residual_variance: mean squared residual, SNU at Bob
    :param t_hat: transmittance estimate
    :param xi_hat_snu: excess noise estimate, referred to the channel input
    :param xi_clamped: xi_hat was negative and has been set to 0
    :param t_out_of_range: t_hat outside (0, 1.05]
    """
    channel: int
    basis: Basis
    m: int
    v_mod_snu: float
    eta_det: float
    nu_det_snu: float
    slope: float
    residual_variance: float
    t_hat: float
    xi_hat_snu: float
    xi_clamped: bool = False
    t_out_of_range: bool = False

    @property
    def sigma_xi(self) -> float:
        """One-sigma spread of xi_hat, referred to the channel input."""
        return self.residual_variance * math.sqrt(2.0 / self.m) / (self.t_hat * self.eta_det)

    @property
    def sigma_t(self) -> float:
        """One-sigma spread of t_hat (delta method on t = s^2/eta)."""
        sigma_s = math.sqrt(self.residual_variance / (self.m * self.v_mod_snu))
        return 2.0 * abs(self.slope) * sigma_s / self.eta_det

    def bounds(self, eps_pe: float) -> tuple:
        return worst_case_bounds(self.t_hat, self.xi_hat_snu, self.m, self.v_mod_snu, eps_pe,
                                 eta_det=self.eta_det, nu_det_snu=self.nu_det_snu)

    def summary_row(self, eps_pe: float) -> tuple:
        """Values in ESTIMATION_COLUMNS order."""
        t_low, xi_high = self.bounds(eps_pe)
        return self.channel, self.basis.value, self.m, self.t_hat, t_low, self.xi_hat_snu, xi_high


def pe_subset(records: SymbolRecordSet, m: int, seed: int = 0) -> SymbolRecordSet:
    """Random parameter-estimation subset of m records (seeded, order preserved)."""
    if not 0 < m <= len(records):
        raise ValueError(f"m must be in 1..{len(records)}, got {m}")
    if m == len(records):
        return records
    rng = derive_rng(seed, records.channel, STAGE_SUBSET)
    positions = np.sort(rng.choice(len(records), size=m, replace=False))
    return records.subset(positions)


def estimate_channel(records: SymbolRecordSet,
                     v_mod_snu: float,
                     eta_det: float,
                     nu_det_snu: float,
                     m: int,
                     seed: int = 0) -> ChannelEstimate:
    """
    Estimate transmittance and excess noise from m randomly chosen records.

    :param records: aligned Alice/Bob values of one channel
    :param v_mod_snu: modulation variance
    :param eta_det: detector efficiency (trusted, subtracted)
    :param nu_det_snu: electronic noise at the channel IF (trusted, subtracted)
    :param m: parameter-estimation sample size
    :param seed: selects the random subset
    :return estimate:
    """
    if not v_mod_snu > 0:
        raise ValueError(f"v_mod_snu must be positive, got {v_mod_snu!r}")
    if not 0 < eta_det <= 1:
        raise ValueError(f"eta_det must be in (0, 1], got {eta_det!r}")
    if nu_det_snu < 0:
        raise ValueError(f"nu_det_snu must be >= 0, got {nu_det_snu!r}")

    pe = pe_subset(records, m, seed)
    x, y = pe.alice, pe.bob

    sxx = float(np.dot(x, x))
    if sxx == 0:
        raise NumericalDomainError(f"channel {records.channel}: reference values are all zero")
    slope = float(np.dot(x, y)) / sxx
    residual_variance = float(np.mean((y - slope * x) ** 2))

    t_hat = slope ** 2 / eta_det
    if t_hat == 0:
        raise NumericalDomainError(f"channel {records.channel}: zero transmittance estimate")

    t_out_of_range = slope < 0 or t_hat > T_HAT_MAX
    if t_out_of_range:
        logger.warning(f"channel {records.channel} ({records.basis.value}): t_hat = {t_hat:.4g} "
                       f"(slope {slope:.4g}) outside (0, {T_HAT_MAX}]")

    xi_hat = (residual_variance - 1.0 - nu_det_snu / t_hat) / (t_hat * eta_det)
    xi_clamped = xi_hat < 0
    if xi_clamped:
        logger.warning(f"channel {records.channel} ({records.basis.value}): negative xi_hat "
                       f"{xi_hat:.3g} SNU clamped to 0")
        xi_hat = 0.0

    logger.debug(f"channel {records.channel}: t_hat={t_hat:.5f} xi_hat={xi_hat:.5f} SNU from m={m}")
    return ChannelEstimate(channel=records.channel, basis=records.basis, m=m, v_mod_snu=v_mod_snu,
                           eta_det=eta_det, nu_det_snu=nu_det_snu, slope=slope,
                           residual_variance=residual_variance, t_hat=t_hat, xi_hat_snu=xi_hat,
                           xi_clamped=xi_clamped, t_out_of_range=t_out_of_range)


def normal_quantile(eps_pe: float) -> float:
    """z such that a standard normal exceeds it with probability eps_pe/2."""
    if not 0 < eps_pe < 1:
        raise ValueError(f"eps_pe must be in (0, 1), got {eps_pe!r}")
    return float(stats.norm.isf(eps_pe / 2.0))


def worst_case_bounds(t_hat: float,
                      xi_hat: float,
                      m: int,
                      v_mod: float,
                      eps_pe: float,
                      *,
                      eta_det: float,
                      nu_det_snu: float) -> tuple:
    """
    Pessimistic transmittance and excess noise for the Holevo bound.

    :param t_hat: transmittance estimate
    :param xi_hat: excess-noise estimate
    :param m: parameter-estimation sample size
    :param v_mod: modulation variance
    :param eps_pe: failure probability of the estimate
    :param eta_det: detector efficiency
    :param nu_det_snu: trusted electronic noise
    :return t_low, xi_high:
    """
    if m <= 0:
        raise ValueError(f"m must be positive, got {m}")
    if not t_hat > 0:
        raise NumericalDomainError(f"t_hat must be > 0, got {t_hat!r}")
    if not v_mod > 0:
        raise ValueError(f"v_mod must be positive, got {v_mod!r}")

    z = normal_quantile(eps_pe)
    residual_variance = 1.0 + nu_det_snu / t_hat + eta_det * t_hat * xi_hat
    sigma_s = math.sqrt(residual_variance / (m * v_mod))

    root = math.sqrt(t_hat) - z * sigma_s / math.sqrt(eta_det)
    t_low = root ** 2 if root > 0 else 0.0
    xi_high = xi_hat + z * residual_variance * math.sqrt(2.0 / m) / (t_hat * eta_det)
    return t_low, xi_high


def worst_basis(reports: Sequence, key: str = "finite") -> RateReport:
    """
    Pick the basis with the lower total key rate; its total becomes the
    worst-basis total of the returned report.

    :param reports: one RateReport per basis
    :param key: 'finite' or 'asympt'
    :return report:
    """
    if key not in ("finite", "asympt"):
        raise ValueError(f"key must be 'finite' or 'asympt', got {key!r}")
    reports = list(reports)
    if len({r.basis for r in reports}) < 2 or len(reports) != 2:
        raise ValueError(f"need one report per basis, got {[r.basis.value for r in reports]}")

    def total(r):
        return r.total_finite_bits_per_s if key == "finite" else r.total_asympt_bits_per_s

    # ties go to the amplitude basis
    worst = min(sorted(reports, key=lambda r: r.basis is not Basis.AMPLITUDE), key=total)
    return replace(worst, worst_basis_total_bits_per_s=total(worst))
