"""
Parameter sweeps: key rate vs distance (analytic) and Monte Carlo excess
noise vs IF, channel spacing and channel count.
"""

from collections.abc import Sequence
from dataclasses import replace
import argparse
import logging
import math

import numpy as np

from engine.channel_detector import integer_samples_per_symbol, simulate_link
from engine.config_io import SystemConfig, save_overlay
from engine.estimation import estimate_channel, worst_basis
from engine.model import Basis, ChannelPlan, ChannelSpec, check_plan_design_rules
from engine.security_rates import evaluate_plan, plan_reach

from .common import float_list, frange, int_list, load_system, map_jobs, positive_int
from .csv_out import sidecar_path, write_result_csv

logger = logging.getLogger(__name__)

KNEE_RELATIVE_TOLERANCE = 0.1
KNEE_RUN = 3


def register(subparsers, common: argparse.ArgumentParser):
    p = subparsers.add_parser("sweep-distance", parents=[common], help="total key rate vs fiber length")
    p.add_argument("--min-km", type=float, default=0.0)
    p.add_argument("--max-km", type=float, default=150.0)
    p.add_argument("--step", type=float, default=1.0, help="distance step, km")
    p.add_argument("--channels", type=int_list, default=None,
                   help="channel counts per basis, e.g. 1,2,4 (default: 1..N)")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--finite", dest="finite", action="store_true", default=True)
    mode.add_argument("--asymptotic", dest="finite", action="store_false")
    p.add_argument("--out", default="sweep_distance.csv")
    p.set_defaults(func=cmd_sweep_distance)

    p = subparsers.add_parser("sweep-if", parents=[common], help="Monte Carlo excess noise vs IF")
    p.add_argument("--rates", type=float_list, default=(10.0, 15.0, 20.0), help="symbol rates, Mbaud")
    p.add_argument("--if-min", type=float, default=20.0, help="MHz")
    p.add_argument("--if-max", type=float, default=200.0, help="MHz")
    p.add_argument("--step", type=float, default=4.0, help="MHz")
    p.add_argument("--symbols", type=positive_int, default=200_000)
    p.add_argument("--samples-per-symbol", type=positive_int, default=None,
                   help="override the sample rate as samples-per-symbol x symbol rate")
    p.add_argument("--out", default="sweep_if.csv")
    p.set_defaults(func=cmd_sweep_if)

    p = subparsers.add_parser("sweep-spacing", parents=[common],
                              help="Monte Carlo excess noise of a channel pair vs spacing")
    p.add_argument("--spacing-min", type=float, default=20.0, help="MHz")
    p.add_argument("--spacing-max", type=float, default=60.0, help="MHz")
    p.add_argument("--spacing-step", type=float, default=4.0, help="MHz")
    p.add_argument("--symbols", type=positive_int, default=200_000)
    p.add_argument("--out", default="sweep_spacing.csv")
    p.set_defaults(func=cmd_sweep_spacing)

    p = subparsers.add_parser("sweep-channels", parents=[common],
                              help="Monte Carlo excess noise vs number of multiplexed channels")
    p.add_argument("--max-channels", type=positive_int, default=None)
    p.add_argument("--symbols", type=positive_int, default=200_000)
    p.add_argument("--scaling-overlay", default=None, help="write the growth factors as a [scaling] overlay")
    p.add_argument("--out", default="sweep_channels.csv")
    p.set_defaults(func=cmd_sweep_channels)


def _channels_per_basis(cfg: SystemConfig) -> int:
    return max(len(cfg.plan.for_basis(b)) for b in cfg.plan.bases)


# =============================================================================
# Distance
# =============================================================================

def _distance_row(task):
    cfg, n, length_km, finite = task
    link = cfg.link.at_distance(length_km)
    reports = evaluate_plan(cfg.plan.truncated(n), link, cfg.noise, cfg.finite, cfg.excess_noise(n))
    if len(reports) == 2:
        worst = worst_basis(reports, "finite" if finite else "asympt")
    else:
        worst = reports[0]
    per_channel = [c.skr_finite_bits_per_s if finite else c.skr_asympt_bits_per_s for c in worst.per_channel]
    return (length_km, n, worst.basis.value, worst.total_finite_bits_per_s, worst.total_asympt_bits_per_s,
            per_channel)


def crossover_distance(distances: Sequence, totals_multi: Sequence, totals_single: Sequence) -> float:
    """Largest distance where the multiplexed total still beats one channel, nan if never."""
    best = float("nan")
    for d, multi, single in zip(distances, totals_multi, totals_single):
        if multi > single:
            best = d
    return best


def cmd_sweep_distance(args: argparse.Namespace) -> int:
    if args.min_km < 0:
        raise ValueError(f"--min-km must be >= 0, got {args.min_km}")
    if args.max_km < args.min_km:
        raise ValueError(f"--max-km {args.max_km} is below --min-km {args.min_km}")
    cfg = load_system(args)
    distances = frange(args.min_km, args.max_km, args.step)
    n_max = _channels_per_basis(cfg)
    counts = args.channels if args.channels else tuple(range(1, n_max + 1))
    if max(counts) > n_max:
        raise ValueError(f"plan has {n_max} channels per basis, cannot sweep {max(counts)}")

    tasks = [(cfg, n, d, args.finite) for n in counts for d in distances]
    rows = map_jobs(_distance_row, tasks, args.jobs)

    key = 3 if args.finite else 4
    columns = ("distance_km", "channels", "basis", "skr_finite", "skr_asympt",
               *[f"ch{ii + 1}" for ii in range(max(counts))])
    out_rows = [(*r[:5], *r[5], *[""] * (max(counts) - len(r[5]))) for r in rows]
    write_result_csv(args.out, cfg, columns, out_rows)

    totals = {n: [r[key] for r in rows if r[1] == n] for n in counts}
    mode = "finite" if args.finite else "asympt"
    for n in counts:
        reach = plan_reach(cfg.plan.truncated(n), cfg.link, cfg.noise, cfg.finite, cfg.excess_noise(n),
                           args.finite)
        print(f"{n} channel(s): {mode} reach {reach:.1f} km")

    if 1 in totals:
        for n in counts:
            if n == 1:
                continue
            base = totals[1][0]
            ratio = totals[n][0] / base if base > 0 else float("nan")
            cross = crossover_distance(distances, totals[n], totals[1])
            print(f"{n} vs 1 channel at {distances[0]:g} km: ratio {ratio:.3f}; "
                  f"multiplexing ahead up to {cross:g} km")
    return 0


# =============================================================================
# IF
# =============================================================================

def find_knee(if_hz: Sequence, xi: Sequence, sigma: Sequence) -> tuple:
    """
    First IF from which the excess noise stays on its high-IF plateau.

    The plateau is the mean over the upper third of the grid; a point is on
    it when xi - plateau <= max(10% of plateau, 3 sigma). The knee is the
    first point where it and the next two points are all on the plateau.

    :return knee_hz, plateau: knee is nan when never reached
    """
    if_hz = np.asarray(if_hz, dtype=float)
    xi = np.asarray(xi, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if if_hz.size < 3:
        raise ValueError("knee detection needs at least 3 grid points")

    upper = if_hz.size - max(1, if_hz.size // 3)
    plateau = float(np.mean(xi[upper:]))
    tol = np.maximum(KNEE_RELATIVE_TOLERANCE * abs(plateau), 3.0 * sigma)
    on = xi - plateau <= tol

    for ii in range(if_hz.size):
        if np.all(on[ii:ii + KNEE_RUN]):
            return float(if_hz[ii]), plateau
    return float("nan"), plateau


def _if_point(task):
    cfg, rate_hz, f_if, fs, n_symbols, seed = task
    c = cfg.plan.channels[0]
    plan = ChannelPlan((ChannelSpec(1, rate_hz, f_if, c.mod_variance_snu, Basis.AMPLITUDE),), sample_rate_hz=fs)
    records = simulate_link(plan, cfg.link, cfg.noise, n_symbols, seed, filters=cfg.filters,
                            block_symbols=cfg.block_symbols)
    est = estimate_channel(records[1], c.mod_variance_snu, cfg.link.eta_det, cfg.noise.nu_det(f_if),
                           n_symbols, seed=seed)
    return rate_hz, f_if, est.t_hat, est.xi_hat_snu, est.sigma_xi


def _sample_rate_for(cfg: SystemConfig, rate_hz: float, samples_per_symbol) -> float:
    if samples_per_symbol is not None:
        return samples_per_symbol * rate_hz
    fs = cfg.plan.sample_rate_hz
    sps = fs / rate_hz
    if abs(sps - round(sps)) > 1e-9 * sps:
        fs = round(sps) * rate_hz
        logger.info(f"{rate_hz / 1e6:g} Mbaud: sample rate adjusted to {fs / 1e9:.4g} GHz "
                    f"({round(sps)} samples/symbol)")
    integer_samples_per_symbol(fs, rate_hz)
    return fs


def cmd_sweep_if(args: argparse.Namespace) -> int:
    cfg = load_system(args)
    if not args.rates:
        raise ValueError("--rates is empty")
    if any(r <= 0 for r in args.rates):
        raise ValueError(f"symbol rates must be positive, got {args.rates}")
    ifs = [f * 1e6 for f in frange(args.if_min, args.if_max, args.step)]
    if ifs[0] <= 0:
        raise ValueError(f"--if-min must be positive, got {args.if_min}")

    tasks = []
    for rate in args.rates:
        rate_hz = rate * 1e6
        fs = _sample_rate_for(cfg, rate_hz, args.samples_per_symbol)
        tasks += [(cfg, rate_hz, f_if, fs, args.symbols, args.seed) for f_if in ifs]
    rows = map_jobs(_if_point, tasks, args.jobs)

    write_result_csv(args.out, cfg, ("symbol_rate_mbaud", "if_mhz", "t_hat", "xi_hat", "sigma_xi"),
                     [(r[0] / 1e6, r[1] / 1e6, r[2], r[3], r[4]) for r in rows])

    knees = []
    for rate in args.rates:
        block = [r for r in rows if r[0] == rate * 1e6]
        knee, plateau = find_knee([r[1] for r in block], [r[3] for r in block], [r[4] for r in block])
        knees.append((rate, knee / 1e6, knee / (rate * 1e6), plateau))
        print(f"{rate:g} Mbaud: knee at {knee / 1e6:.1f} MHz (f_IF/SR = {knee / (rate * 1e6):.2f}), "
              f"plateau xi = {plateau:.4f} SNU")
    write_result_csv(sidecar_path(args.out, "knees"), cfg,
                     ("symbol_rate_mbaud", "knee_mhz", "knee_over_rate", "plateau_xi"), knees)
    return 0


# =============================================================================
# Spacing
# =============================================================================

def _pair_plan(cfg: SystemConfig, spacing_hz) -> ChannelPlan:
    first = cfg.plan.for_basis(Basis.AMPLITUDE)[0]
    chans = [replace(first, index=1)]
    if spacing_hz is not None:
        chans.append(replace(first, index=2, if_freq_hz=first.if_freq_hz + spacing_hz))
    return ChannelPlan(tuple(chans), sample_rate_hz=cfg.plan.sample_rate_hz)


def _spacing_point(task):
    cfg, spacing_hz, n_symbols, seed = task
    plan = _pair_plan(cfg, spacing_hz)
    records = simulate_link(plan, cfg.link, cfg.noise, n_symbols, seed, filters=cfg.filters,
                            block_symbols=cfg.block_symbols)
    out = []
    for k, rs in records.items():
        c = plan.channel(k)
        est = estimate_channel(rs, c.mod_variance_snu, cfg.link.eta_det, cfg.noise.nu_det(c.if_freq_hz),
                               n_symbols, seed=seed)
        out.append((spacing_hz, k, est.xi_hat_snu, est.sigma_xi))
    return out


def cmd_sweep_spacing(args: argparse.Namespace) -> int:
    cfg = load_system(args)
    spacings = [s * 1e6 for s in frange(args.spacing_min, args.spacing_max, args.spacing_step)]
    if spacings[0] <= 0:
        raise ValueError(f"--spacing-min must be positive, got {args.spacing_min}")

    results = map_jobs(_spacing_point, [(cfg, None, args.symbols, args.seed)] +
                       [(cfg, s, args.symbols, args.seed) for s in spacings], args.jobs)
    floor = results[0][0][2]

    rows = []
    threshold_hz = float("nan")
    for points in results[1:]:
        victim = points[0]
        excess = victim[2] - floor
        rows += [(p[0] / 1e6, p[1], p[2], p[3], floor, p[2] - floor) for p in points]
        if math.isnan(threshold_hz) and excess < KNEE_RELATIVE_TOLERANCE * floor:
            threshold_hz = victim[0]

    write_result_csv(args.out, cfg, ("spacing_mhz", "channel", "xi_hat", "sigma_xi", "floor_xi", "excess_xi"),
                     rows)
    print(f"single-channel floor xi = {floor:.4f} SNU; crosstalk excess below 10% of floor from "
          f"{threshold_hz / 1e6:g} MHz spacing")
    return 0


# =============================================================================
# Channel count
# =============================================================================

def _count_point(task):
    cfg, n, basis, n_symbols, seed = task
    plan = cfg.plan.truncated(n)
    records = simulate_link(plan, cfg.link, cfg.noise, n_symbols, seed, basis=basis, filters=cfg.filters,
                            block_symbols=cfg.block_symbols)
    out = []
    for k, rs in records.items():
        c = plan.channel(k)
        est = estimate_channel(rs, c.mod_variance_snu, cfg.link.eta_det, cfg.noise.nu_det(c.if_freq_hz),
                               n_symbols, seed=seed)
        out.append((n, basis.value, k, est.xi_hat_snu, est.sigma_xi))
    return out


def cmd_sweep_channels(args: argparse.Namespace) -> int:
    cfg = load_system(args)
    check_plan_design_rules(cfg.plan)
    n_max = _channels_per_basis(cfg) if args.max_channels is None else args.max_channels
    if n_max > _channels_per_basis(cfg):
        raise ValueError(f"--max-channels {n_max} exceeds the {_channels_per_basis(cfg)} channels per basis")

    tasks = [(cfg, n, b, args.symbols, args.seed) for n in range(1, n_max + 1) for b in cfg.plan.bases]
    results = map_jobs(_count_point, tasks, args.jobs)
    rows = [p for points in results for p in points]

    averages = {}
    for n in range(1, n_max + 1):
        averages[n] = float(np.mean([r[3] for r in rows if r[0] == n]))
    base = averages[1]
    factors = {n: (averages[n] / base if base > 0 else float("nan")) for n in averages}

    write_result_csv(args.out, cfg, ("channels", "basis", "channel", "xi_hat", "sigma_xi"), rows)
    write_result_csv(sidecar_path(args.out, "growth"), cfg, ("channels", "mean_xi", "factor"),
                     [(n, averages[n], factors[n]) for n in averages])
    for n in averages:
        print(f"{n} channel(s): mean xi = {averages[n]:.4f} SNU, factor {factors[n]:.3f}")

    if args.scaling_overlay:
        if any(not math.isfinite(f) or f <= 0 for f in factors.values()):
            raise ValueError("cannot write scaling overlay: non-positive single-channel excess noise")
        save_overlay(args.scaling_overlay, {"scaling": {f"channels_{n}": f for n, f in factors.items()}},
                     comment=f"excess-noise growth from sweep-channels, {args.symbols} symbols, seed {args.seed}")
        print(f"scaling overlay written to {args.scaling_overlay}")
    return 0
