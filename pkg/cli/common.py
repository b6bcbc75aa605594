"""
Helpers shared by the command modules: config loading, argument types and
the process pool used for sweeps.
"""

from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
import argparse
import logging
import os

from engine.config_io import SystemConfig, load_config

logger = logging.getLogger(__name__)

JOBS_ENV = "FDMQKD_JOBS"


def load_system(args: argparse.Namespace) -> SystemConfig:
    cfg = load_config(args.config, args.overlay)
    logger.info(f"loaded {args.config} ({len(cfg.plan.channels)} channels, "
                f"{len(args.overlay)} overlay(s))")
    return cfg


def default_jobs() -> int:
    """Worker count from FDMQKD_JOBS, 1 when unset."""
    text = os.environ.get(JOBS_ENV, "1")
    try:
        jobs = int(text)
    except ValueError:
        raise ValueError(f"{JOBS_ENV}='{text}' is not an integer")
    if jobs < 1:
        raise ValueError(f"{JOBS_ENV} must be >= 1, got {jobs}")
    return jobs


def positive_int(text: str) -> int:
    try:
        value = int(float(text)) if "e" in text.lower() else int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"'{text}' is not an integer")
    if value != float(text) or value < 1:
        raise argparse.ArgumentTypeError(f"'{text}' must be a positive integer")
    return value


def float_list(text: str) -> tuple:
    """'10,15,20' -> (10.0, 15.0, 20.0); empty items are ignored."""
    values = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            values.append(float(item))
        except ValueError:
            raise argparse.ArgumentTypeError(f"'{item}' is not a number")
    return tuple(values)


def int_list(text: str) -> tuple:
    return tuple(positive_int(item.strip()) for item in text.split(",") if item.strip())


def frange(start: float, stop: float, step: float) -> list:
    """Inclusive grid start, start+step, ... <= stop (with a small tolerance)."""
    if not step > 0:
        raise ValueError(f"step must be positive, got {step!r}")
    if stop < start:
        raise ValueError(f"grid end {stop!r} is below grid start {start!r}")
    n = int((stop - start) / step + 1e-9) + 1
    return [start + ii * step for ii in range(n)]


def map_jobs(fn: Callable, tasks: Sequence, jobs: int) -> list:
    """
    Apply fn to every task, in a process pool when jobs > 1.
    Results keep the task order.
    """
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]

    logger.info(f"running {len(tasks)} tasks on {jobs} workers")
    with ProcessPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(fn, tasks))
