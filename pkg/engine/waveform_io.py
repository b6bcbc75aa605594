"""
Waveform and symbol-record file I/O.

Waveform formats:
    CSV     comment lines "sample_rate_hz=..." and "t0_s=...", header
            "time_s,value", one row per sample
    binary  16-byte header: 8-byte magic b"FDMWAVE1" then the sample rate as
            little-endian float64; followed by the samples as little-endian
            float64. The start time is not stored (t0 = 0 on load).

Symbol records are written as CSV (channel, basis, index, alice_snu, bob_snu)
or, with a .zarr suffix, as one zarr group per channel.
"""

from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Union
import csv
import datetime
import logging
import struct

import numpy as np

from .dsp_chain import SymbolRecordSet, Waveform
from .model import Basis

try:
    import zarr
    from numcodecs import Blosc
except ImportError:
    zarr = None
    Blosc = None

logger = logging.getLogger(__name__)

WAVEFORM_MAGIC = b"FDMWAVE1"
_HEADER = struct.Struct("<8sd")

RECORD_COLUMNS = ("channel", "basis", "index", "alice_snu", "bob_snu")


def _cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_table(fname: Union[str, Path],
                columns: Sequence[str],
                rows: Iterable[Sequence],
                comments: Sequence[str] = ()):
    """
    Write a CSV table; comment lines come first, prefixed with '# '.
    Floats are written with repr so values reload bit-exactly.
    """
    with open(fname, "w", newline="", encoding="utf-8") as f:
        for line in comments:
            f.write(f"# {line}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def read_table(fname: Union[str, Path]) -> tuple:
    """
    :return comments, columns, rows: rows as lists of strings
    """
    comments = []
    with open(fname, "r", newline="", encoding="utf-8") as f:
        lines = f.read().splitlines()
    while lines and lines[0].startswith("#"):
        comments.append(lines.pop(0)[1:].strip())
    reader = csv.reader(lines)
    columns = next(reader)
    return comments, columns, [row for row in reader]


# =============================================================================
# Waveforms
# =============================================================================

def _comment_values(comments: Sequence[str]) -> dict:
    """'key=number' comment lines as a dict; other lines are ignored."""
    values = {}
    for line in comments:
        key, sep, text = line.partition("=")
        if not sep:
            continue
        try:
            values[key.strip()] = float(text)
        except ValueError:
            continue
    return values


def save_waveform(fname: Union[str, Path], w: Waveform):
    """
    Save a waveform as CSV (.csv), binary (.bin) or zarr (.zarr).

    :param fname: destination, format chosen by suffix
    :param w: waveform
    """
    fname = Path(fname)
    if fname.suffix == ".csv":
        write_table(fname, ("time_s", "value"), zip(w.times, w.samples),
                    comments=[f"sample_rate_hz={float(w.sample_rate_hz)!r}", f"t0_s={float(w.t0_s)!r}"])
    elif fname.suffix == ".bin":
        with open(fname, "wb") as f:
            f.write(_HEADER.pack(WAVEFORM_MAGIC, float(w.sample_rate_hz)))
            f.write(np.asarray(w.samples, dtype="<f8").tobytes())
    elif fname.suffix == ".zarr":
        if zarr is None:
            raise ImportError("zarr is required for saving .zarr files. Install with: pip install zarr numcodecs")
        z = zarr.open(str(fname), "w")
        z.array("samples", np.asarray(w.samples), compressor=Blosc(cname="zstd", clevel=5), dtype="<f8")
        z.attrs["sample_rate_hz"] = float(w.sample_rate_hz)
        z.attrs["t0_s"] = float(w.t0_s)
        z.attrs["timestamp"] = datetime.datetime.now().strftime("%Y_%m_%d_%H;%M;%S")
    else:
        raise ValueError(f"fname suffix was '{fname.suffix:s}' but must be '.csv', '.bin' or '.zarr'")


def load_waveform(fname: Union[str, Path]) -> Waveform:
    fname = Path(fname)
    if fname.suffix == ".csv":
        comments, columns, rows = read_table(fname)
        if tuple(columns) != ("time_s", "value") or len(rows) < 1:
            raise ValueError(f"{fname} is not a waveform CSV")
        data = np.array(rows, dtype=float)
        meta = _comment_values(comments)
        if "sample_rate_hz" in meta:
            return Waveform(data[:, 1], meta["sample_rate_hz"], meta.get("t0_s", float(data[0, 0])))

        # files without the comment lines: rebuild the rate from the time column
        times = data[:, 0]
        if times.size < 2:
            raise ValueError(f"{fname}: need at least two samples to recover the sample rate")
        rate = (times.size - 1) / (times[-1] - times[0])
        return Waveform(data[:, 1], rate, float(times[0]))

    if fname.suffix == ".bin":
        with open(fname, "rb") as f:
            raw = f.read()
        if len(raw) < _HEADER.size:
            raise ValueError(f"{fname}: truncated header")
        magic, rate = _HEADER.unpack_from(raw)
        if magic != WAVEFORM_MAGIC:
            raise ValueError(f"{fname}: bad magic {magic!r}")
        if (len(raw) - _HEADER.size) % 8:
            raise ValueError(f"{fname}: payload is not a whole number of float64 samples")
        return Waveform(np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).astype(float), rate)

    if fname.suffix == ".zarr":
        if zarr is None:
            raise ImportError("zarr is required for loading .zarr files. Install with: pip install zarr numcodecs")
        z = zarr.open(str(fname), "r")
        return Waveform(np.asarray(z["samples"]), z.attrs["sample_rate_hz"], z.attrs["t0_s"])

    raise ValueError(f"fname suffix was '{fname.suffix:s}' but must be '.csv', '.bin' or '.zarr'")


# =============================================================================
# Symbol records
# =============================================================================

def _record_rows(record_sets: Iterable[SymbolRecordSet]):
    for rs in record_sets:
        for r in rs:
            yield r.channel, r.basis.value, r.index, r.alice_x, r.bob_x


def save_records(fname: Union[str, Path], record_sets: Sequence[SymbolRecordSet], comments: Sequence[str] = ()):
    """
    Save record sets as CSV or, with a .zarr suffix, as zarr groups channel_<k>_<basis>.

    :param fname: destination
    :param record_sets: per-channel records
    :param comments: CSV comment lines (also stored as zarr attributes)
    """
    fname = Path(fname)
    if fname.suffix == ".zarr":
        if zarr is None:
            raise ImportError("zarr is required for saving .zarr files. Install with: pip install zarr numcodecs")
        z = zarr.open(str(fname), "w")
        compressor = Blosc(cname="zstd", clevel=5, shuffle=Blosc.SHUFFLE)
        for rs in record_sets:
            g = z.create_group(f"channel_{rs.channel:d}_{rs.basis.value:s}")
            g.array("index", rs.indices, compressor=compressor)
            g.array("alice_snu", rs.alice, compressor=compressor)
            g.array("bob_snu", rs.bob, compressor=compressor)
            g.attrs["channel"] = int(rs.channel)
            g.attrs["basis"] = rs.basis.value
        z.attrs["comments"] = list(comments)
        z.attrs["timestamp"] = datetime.datetime.now().strftime("%Y_%m_%d_%H;%M;%S")
    else:
        write_table(fname, RECORD_COLUMNS, _record_rows(record_sets), comments)
    logger.info(f"wrote {sum(len(rs) for rs in record_sets)} records to {fname}")


def load_records(fname: Union[str, Path]) -> list:
    """
    :return record_sets: one SymbolRecordSet per (channel, basis), ordered by basis then channel
    """
    fname = Path(fname)
    if fname.suffix == ".zarr":
        if zarr is None:
            raise ImportError("zarr is required for loading .zarr files. Install with: pip install zarr numcodecs")
        z = zarr.open(str(fname), "r")
        sets = []
        for name in z.group_keys():
            g = z[name]
            sets.append(SymbolRecordSet(g.attrs["channel"], Basis(g.attrs["basis"]),
                                        np.asarray(g["alice_snu"]), np.asarray(g["bob_snu"]),
                                        np.asarray(g["index"])))
    else:
        _, columns, rows = read_table(fname)
        if tuple(columns) != RECORD_COLUMNS:
            raise ValueError(f"{fname}: expected columns {RECORD_COLUMNS}, got {tuple(columns)}")
        grouped = {}
        for ch, basis, index, alice, bob in rows:
            grouped.setdefault((int(ch), basis), []).append((int(index), float(alice), float(bob)))
        sets = []
        for (ch, basis), values in grouped.items():
            arr = np.array(values)
            sets.append(SymbolRecordSet(ch, Basis(basis), arr[:, 1], arr[:, 2], arr[:, 0].astype(np.int64)))

    order = {b: ii for ii, b in enumerate(Basis)}
    return sorted(sets, key=lambda rs: (order[rs.basis], rs.channel))
