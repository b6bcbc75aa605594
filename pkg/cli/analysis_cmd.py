"""
Analytic studies on top of the rate engine: modulation-variance
optimization and key-rate gain from multiplexing vs faster symbol rates.
"""

from dataclasses import replace
import argparse
import logging

import numpy as np

from engine.model import fiber_transmittance
from engine.security_rates import SecurityInputs, VMOD_BOUNDS, multiplexing_gain, optimize_vmod, \
    skr_asymptotic, symbol_rate_gain

from .common import float_list, load_system, positive_int
from .csv_out import write_result_csv

logger = logging.getLogger(__name__)

GAIN_COLUMNS = ("kind", "channels", "symbol_rate_mbaud", "if_mhz", "nu_det_snu", "skr_bits_per_s", "gain")


def register(subparsers, common: argparse.ArgumentParser):
    p = subparsers.add_parser("optimize", parents=[common], help="optimal modulation variance at a distance")
    p.add_argument("--target-km", type=float, default=20.0)
    p.add_argument("--channel", type=positive_int, default=None, help="channel index (default: first)")
    p.add_argument("--channels", type=positive_int, default=1,
                   help="multiplexed channels per basis setting the excess noise")
    p.add_argument("--curve-out", default=None, help="also write the key rate vs V_mod curve to this CSV")
    p.set_defaults(func=cmd_optimize)

    p = subparsers.add_parser("rate-gain", parents=[common],
                              help="key-rate gain of multiplexing vs a faster single channel")
    p.add_argument("--rates", type=float_list, default=(10.0, 20.0, 40.0), help="symbol rates, Mbaud")
    p.add_argument("--base-rate", type=float, default=10.0, help="reference symbol rate, Mbaud")
    p.add_argument("--max-channels", type=positive_int, default=None)
    p.add_argument("--distance-km", type=float, default=None,
                   help="fiber length (default: the configured link)")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--finite", dest="finite", action="store_true", default=True)
    mode.add_argument("--asymptotic", dest="finite", action="store_false")
    p.add_argument("--out", default="rate_gain.csv")
    p.set_defaults(func=cmd_rate_gain)


def cmd_optimize(args: argparse.Namespace) -> int:
    cfg = load_system(args)
    if args.target_km < 0:
        raise ValueError(f"--target-km must be >= 0, got {args.target_km}")
    c = cfg.plan.channel(args.channel) if args.channel else cfg.plan.channels[0]

    si = SecurityInputs.from_link(cfg.link, c.mod_variance_snu, cfg.excess_noise(args.channels),
                                  cfg.noise.nu_det(c.if_freq_hz), cfg.finite, f_sym_hz=c.symbol_rate_hz)
    best = optimize_vmod(si, args.target_km, cfg.link.fiber_loss_db_per_km)
    flag = " (flat: no key at any V_mod)" if best.flat else ""
    print(f"channel {c.index} at {args.target_km:g} km: V_mod = {best.v_mod_snu:.3f} SNU, "
          f"asymptotic {best.skr_asympt_bits_per_s / 1e6:.4f} Mb/s{flag}")

    if args.curve_out:
        t = fiber_transmittance(args.target_km, cfg.link.fiber_loss_db_per_km)
        grid = np.linspace(VMOD_BOUNDS[0], VMOD_BOUNDS[1], 200)
        rows = [(float(v), skr_asymptotic(replace(si, v_mod_snu=float(v), t_ch=t)).bits_per_s) for v in grid]
        write_result_csv(args.curve_out, cfg, ("v_mod_snu", "skr_asympt"), rows,
                         notes=[f"channel={c.index} target_km={args.target_km:g}"])
    return 0


def cmd_rate_gain(args: argparse.Namespace) -> int:
    cfg = load_system(args)
    link = cfg.link if args.distance_km is None else cfg.link.at_distance(args.distance_km)
    n_max = min(len(cfg.plan.for_basis(b)) for b in cfg.plan.bases)
    if args.max_channels is not None:
        if args.max_channels > n_max:
            raise ValueError(f"plan has {n_max} channels per basis, cannot use {args.max_channels}")
        n_max = args.max_channels

    rows = []
    first = cfg.plan.channels[0]
    for n in range(1, n_max + 1):
        gain = multiplexing_gain(cfg.plan, link, cfg.noise, cfg.finite, cfg.excess_noise, n, args.finite)
        rows.append(("fdm", n, first.symbol_rate_hz / 1e6, first.if_freq_hz / 1e6,
                     cfg.noise.nu_det(first.if_freq_hz), "", gain))
        print(f"{n} multiplexed channel(s): gain {gain:.3f}")

    rate_rows = symbol_rate_gain(link, cfg.noise, cfg.finite, cfg.excess_noise(1),
                                 [r * 1e6 for r in args.rates], base_rate_hz=args.base_rate * 1e6,
                                 v_mod_snu=first.mod_variance_snu, finite_rate=args.finite)
    for rate_hz, f_if, nu, value, gain in rate_rows:
        rows.append(("symbol_rate", 1, rate_hz / 1e6, f_if / 1e6, nu, value, gain))
        print(f"single channel at {rate_hz / 1e6:g} Mbaud (IF {f_if / 1e6:g} MHz, nu {nu:.3g}): gain {gain:.3f}")

    write_result_csv(args.out, cfg, GAIN_COLUMNS, rows)
    return 0
