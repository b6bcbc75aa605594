"""
calibrate: fit the excess-noise floor and the detector-noise scale so that
analytic reaches match measured reference values.
"""

from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
import argparse
import logging
import math

import numpy as np
from scipy import optimize

from engine.config_io import TARGET_KEY, ConfigError, SystemConfig, save_overlay
from engine.security_rates import plan_reach

from .common import load_system, map_jobs
from .csv_out import digest_comment

logger = logging.getLogger(__name__)

# Finite-size reaches carry the fit, asymptotic ones only break ties
FINITE_WEIGHT = 1.0
ASYMPT_WEIGHT = 1e-3
MAX_RELATIVE_RESIDUAL = 0.1

FLOOR_GRID = np.arange(0.0, 0.0801, 0.005)
SCALE_GRID = np.logspace(-1.0, 1.5, 11)
COARSE_RESOLUTION_KM = 0.5


class CalibrationInfeasible(RuntimeError):
    """The targets cannot be met within tolerance; carries the best fit found."""

    def __init__(self, fit: "CalibrationFit"):
        worst = max(fit.residuals, key=lambda r: abs(r.relative) if r.weight == FINITE_WEIGHT else 0.0)
        super().__init__(f"calibration targets infeasible: {worst.key} misses by {100 * worst.relative:+.1f}% "
                         f"(best floor {fit.excess_noise_floor_snu:.4f} SNU, scale {fit.detector_scale:.3g})")
        self.fit = fit


@dataclass(frozen=True)
class ReachTarget:
    key: str
    reach_km: float
    finite: bool
    channels: int

    @classmethod
    def from_key(cls, key: str, value: float) -> "ReachTarget":
        match = TARGET_KEY.match(key)
        if match is None:
            raise ConfigError(f"unknown calibration target '{key}'", key=key)
        if not value > 0:
            raise ConfigError(f"target reach must be positive, got {value!r}", key=key)
        channels = int(match.group(3)) if match.group(3) else 1
        return cls(key, float(value), match.group(1) == "finite", channels)

    @property
    def weight(self) -> float:
        return FINITE_WEIGHT if self.finite else ASYMPT_WEIGHT


@dataclass(frozen=True)
class Residual:
    key: str
    target_km: float
    achieved_km: float
    weight: float

    @property
    def relative(self) -> float:
        return (self.achieved_km - self.target_km) / self.target_km


@dataclass(frozen=True)
class CalibrationFit:
    excess_noise_floor_snu: float
    detector_scale: float
    residuals: tuple
    objective: float

    def feasible(self) -> bool:
        checked = [r for r in self.residuals if r.weight == FINITE_WEIGHT] or list(self.residuals)
        return all(abs(r.relative) <= MAX_RELATIVE_RESIDUAL for r in checked)

    def asymptotic_outliers(self) -> tuple:
        """Asymptotic residuals off by more than the tolerance; these do not make a fit infeasible."""
        return tuple(r for r in self.residuals
                     if r.weight == ASYMPT_WEIGHT and abs(r.relative) > MAX_RELATIVE_RESIDUAL)


def parse_targets(text: str) -> tuple:
    """'reach_finite=45.6,reach_asympt=119' -> ((key, value), ...)"""
    pairs = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        key, sep, value = item.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"target '{item}' is not key=value")
        try:
            pairs.append((key.strip(), float(value)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"target '{item}' has a non-numeric value")
    return tuple(pairs)


def register(subparsers, common: argparse.ArgumentParser):
    p = subparsers.add_parser("calibrate", parents=[common],
                              help="fit excess-noise floor and detector noise to measured reaches")
    p.add_argument("--targets", type=parse_targets, default=None,
                   help="e.g. reach_finite=45.6,reach_asympt=119.0 (default: the [calibration] section)")
    p.add_argument("--resolution-km", type=float, default=0.05, help="reach resolution of the final fit")
    p.add_argument("--out", default=None, help="overlay to write (default: <config>_calibrated.ini)")
    p.set_defaults(func=cmd_calibrate)


# =============================================================================
# Fit
# =============================================================================

def target_reach(cfg: SystemConfig, target: ReachTarget, floor: float, scale: float, resolution_km: float) -> float:
    noise = cfg.noise.calibrated(floor, scale)
    return plan_reach(cfg.plan.truncated(target.channels), cfg.link, noise, cfg.finite,
                      floor * cfg.xi_factor(target.channels), target.finite, resolution_km)


def evaluate_fit(cfg: SystemConfig, targets: Sequence[ReachTarget], floor: float, scale: float,
                 resolution_km: float) -> CalibrationFit:
    residuals = tuple(Residual(t.key, t.reach_km, target_reach(cfg, t, floor, scale, resolution_km), t.weight)
                      for t in targets)
    objective = sum(r.weight * r.relative ** 2 for r in residuals)
    return CalibrationFit(floor, scale, residuals, objective)


def _grid_point(task):
    cfg, targets, floor, scale = task
    return evaluate_fit(cfg, targets, floor, scale, COARSE_RESOLUTION_KM)


def fit_noise(cfg: SystemConfig, targets: Sequence[ReachTarget], resolution_km: float = 0.05,
              jobs: int = 1) -> CalibrationFit:
    """
    Coarse grid over (floor, scale), then Nelder-Mead from the best grid point
    in (floor, log10 scale).

    :raises CalibrationInfeasible: when a finite-size target misses by more than 10%
    """
    if not targets:
        raise ConfigError("no calibration targets given")
    n_max = max(len(cfg.plan.for_basis(b)) for b in cfg.plan.bases)
    for t in targets:
        if t.channels > n_max:
            raise ConfigError(f"target needs {t.channels} channels per basis, plan has {n_max}", key=t.key)

    tasks = [(cfg, tuple(targets), float(e), float(s)) for e in FLOOR_GRID for s in SCALE_GRID]
    coarse = min(map_jobs(_grid_point, tasks, jobs), key=lambda f: f.objective)
    logger.info(f"coarse fit: floor {coarse.excess_noise_floor_snu:.4f} SNU, "
                f"scale {coarse.detector_scale:.3g}, objective {coarse.objective:.3g}")

    def objective(x):
        return evaluate_fit(cfg, targets, abs(x[0]), 10.0 ** x[1], resolution_km).objective

    x0 = np.array([coarse.excess_noise_floor_snu, math.log10(coarse.detector_scale)])
    result = optimize.minimize(objective, x0, method="Nelder-Mead",
                               options={"xatol": 1e-4, "fatol": 1e-7, "maxiter": 400,
                                        "initial_simplex": [x0, x0 + (0.005, 0.0), x0 + (0.0, 0.1)]})
    fit = evaluate_fit(cfg, targets, abs(float(result.x[0])), 10.0 ** float(result.x[1]), resolution_km)
    if coarse.objective < fit.objective:
        fit = evaluate_fit(cfg, targets, coarse.excess_noise_floor_snu, coarse.detector_scale, resolution_km)
    logger.info(f"refined fit after {result.nit} iterations: objective {fit.objective:.3g}")

    if not fit.feasible():
        raise CalibrationInfeasible(fit)
    return fit


def print_residuals(fit: CalibrationFit):
    print(f"{'target':<22s}{'wanted km':>10s}{'got km':>10s}{'rel':>9s}")
    for r in fit.residuals:
        print(f"{r.key:<22s}{r.target_km:>10.1f}{r.achieved_km:>10.1f}{100 * r.relative:>8.1f}%")


def report_asymptotic(cfg: SystemConfig, fit: CalibrationFit) -> list:
    """
    Print the asymptotic reach at the fitted point and warn about any
    asymptotic target outside the tolerance.

    :return notes: one line per out-of-tolerance target, for the overlay comment
    """
    noise = cfg.noise.calibrated(fit.excess_noise_floor_snu, fit.detector_scale)
    n_max = max(len(cfg.plan.for_basis(b)) for b in cfg.plan.bases)
    full = plan_reach(cfg.plan, cfg.link, noise, cfg.finite,
                      fit.excess_noise_floor_snu * cfg.xi_factor(n_max), False)
    print(f"asymptotic reach at the fit: {full:.1f} km with {n_max} channel(s) per basis")

    notes = []
    for r in fit.asymptotic_outliers():
        note = (f"{r.key} off by {100 * r.relative:+.1f}% ({r.achieved_km:.1f} km vs {r.target_km:.1f} km), "
                f"outside the {100 * MAX_RELATIVE_RESIDUAL:.0f}% tolerance")
        logger.warning(note)
        print(f"warning: {note}")
        notes.append(note)
    return notes


def cmd_calibrate(args: argparse.Namespace) -> int:
    cfg = load_system(args)
    pairs = args.targets if args.targets is not None else cfg.calibration_targets
    targets = [ReachTarget.from_key(k, v) for k, v in pairs]

    try:
        fit = fit_noise(cfg, targets, args.resolution_km, args.jobs)
    except CalibrationInfeasible as e:
        print_residuals(e.fit)
        raise

    print_residuals(fit)
    print(f"excess_noise_floor_snu = {fit.excess_noise_floor_snu:.5f}")
    print(f"detector_scale = {fit.detector_scale:.4f}")
    notes = report_asymptotic(cfg, fit)

    out = Path(args.out) if args.out else Path(args.config).with_name(f"{Path(args.config).stem}_calibrated.ini")
    save_overlay(out, {"noise": {"excess_noise_floor_snu": fit.excess_noise_floor_snu,
                                 "detector_scale": fit.detector_scale}},
                 comment="\n".join([f"calibrated against {', '.join(t.key for t in targets)}", *notes,
                                    digest_comment(cfg)]))
    logger.info(f"wrote calibration overlay {out}")
    return 0
