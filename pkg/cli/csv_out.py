"""
Result CSV files: a '# config_sha256=...' line, then header and rows.
"""

from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Union
import logging

from engine.config_io import SystemConfig, config_digest
from engine.waveform_io import write_table

logger = logging.getLogger(__name__)


def digest_comment(cfg: SystemConfig) -> str:
    return f"config_sha256={config_digest(cfg)}"


def sidecar_path(path: Union[str, Path], tag: str) -> Path:
    """results.csv -> results_<tag>.csv"""
    path = Path(path)
    return path.with_name(f"{path.stem}_{tag}.csv")


def write_result_csv(path: Union[str, Path],
                     cfg: SystemConfig,
                     columns: Sequence[str],
                     rows: Iterable[Sequence],
                     notes: Sequence[str] = ()):
    """
    :param path: destination
    :param cfg: resolved configuration, its digest heads the file
    :param columns: header row
    :param rows: data rows
    :param notes: extra comment lines after the digest
    """
    rows = list(rows)
    write_table(path, columns, rows, comments=[digest_comment(cfg), *notes])
    logger.info(f"wrote {len(rows)} rows to {path}")
