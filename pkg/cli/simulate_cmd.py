"""
simulate: Monte Carlo run of the configured link, symbol records plus
estimation and rate summaries.
"""

from pathlib import Path
import argparse
import logging

from engine.channel_detector import simulate_link
from engine.config_io import SystemConfig
from engine.estimation import ESTIMATION_COLUMNS, estimate_channel, worst_basis
from engine.model import Basis, RateReport, check_plan_design_rules
from engine.security_rates import rate_from_estimate
from engine.waveform_io import save_records

from .common import load_system, map_jobs, positive_int
from .csv_out import digest_comment, sidecar_path, write_result_csv

logger = logging.getLogger(__name__)

RATE_COLUMNS = ("channel", "basis", "t_hat", "xi_hat", "t_low", "xi_high", "i_ab_bits", "chi_be_bits",
                "delta_bits", "skr_finite", "skr_asympt", "no_key")


def register(subparsers, common: argparse.ArgumentParser):
    p = subparsers.add_parser("simulate", parents=[common],
                              help="simulate the link and estimate every channel")
    p.add_argument("--symbols", type=positive_int, default=100_000, help="symbols per channel")
    p.add_argument("--m", type=positive_int, default=None,
                   help="parameter-estimation symbols (default: min(m_pe, symbols))")
    p.add_argument("--out", default="records.csv",
                   help="symbol records (.csv or .zarr); summaries go next to it")
    p.add_argument("--trial", type=int, default=0, help="Monte Carlo trial number")
    p.set_defaults(func=cmd_simulate)


def simulate_and_estimate(cfg: SystemConfig, basis: Basis, n_symbols: int, m: int, seed: int, trial: int) -> tuple:
    """
    :return records, estimates: per-channel record sets and ChannelEstimates of one basis
    """
    records = simulate_link(cfg.plan, cfg.link, cfg.noise, n_symbols, seed, basis=basis,
                            filters=cfg.filters, trial=trial, block_symbols=cfg.block_symbols)
    estimates = []
    for k, rs in records.items():
        c = cfg.plan.channel(k)
        estimates.append(estimate_channel(rs, c.mod_variance_snu, cfg.link.eta_det,
                                          cfg.noise.nu_det(c.if_freq_hz), m, seed=seed))
    return list(records.values()), estimates


def _run_basis(task):
    return simulate_and_estimate(*task)


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = load_system(args)
    check_plan_design_rules(cfg.plan)
    if args.symbols < 10_000:
        raise ValueError(f"--symbols must be >= 10^4, got {args.symbols}")
    m = min(cfg.finite.m_pe, args.symbols) if args.m is None else args.m
    if m > args.symbols:
        raise ValueError(f"--m ({m}) exceeds --symbols ({args.symbols})")

    bases = cfg.plan.bases
    results = map_jobs(_run_basis, [(cfg, b, args.symbols, m, args.seed, args.trial) for b in bases], args.jobs)

    all_records = [rs for records, _ in results for rs in records]
    estimates = [e for _, ests in results for e in ests]
    save_records(args.out, all_records, comments=[digest_comment(cfg)])

    out = Path(args.out)
    est_path = sidecar_path(out.with_suffix(".csv"), "estimation")
    write_result_csv(est_path, cfg, ESTIMATION_COLUMNS, [e.summary_row(cfg.finite.eps_pe) for e in estimates])

    rates = [rate_from_estimate(e, cfg.link, cfg.finite, cfg.plan.channel(e.channel).symbol_rate_hz)
             for e in estimates]
    write_result_csv(sidecar_path(out.with_suffix(".csv"), "rates"), cfg, RATE_COLUMNS,
                     [(r.k, r.basis.value, r.t_hat, r.xi_hat_snu, r.t_low, r.xi_high_snu, r.i_ab_bits,
                       r.chi_be_bits, r.delta_bits, r.skr_finite_bits_per_s, r.skr_asympt_bits_per_s,
                       int(r.no_key)) for r in rates])

    reports = [RateReport.from_channels(b, rates) for b in bases]
    for rep in reports:
        print(f"{rep.basis.value:>9s}: total finite {rep.total_finite_bits_per_s / 1e6:.4f} Mb/s, "
              f"asymptotic {rep.total_asympt_bits_per_s / 1e6:.4f} Mb/s")
    if len(reports) == 2:
        worst = worst_basis(reports)
        print(f"worst basis: {worst.basis.value} ({worst.worst_basis_total_bits_per_s / 1e6:.4f} Mb/s)")
    return 0
