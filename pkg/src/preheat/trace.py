"""Time-series trace rows shared by the environment and the experiment runners.

Each row describes the interval ending at ``t``: ``applied_current``, ``Q_gen``
and ``Q_ptc`` are means over that interval (a single substep or a whole hold),
the temperatures and voltage are instantaneous values at ``t``. Positive
current discharges the cell.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class TraceRecord:
    t: float  # [s]
    applied_current: float  # [A]
    v_ptc: float  # [V]
    v_t: float  # [V]
    soc: float
    T_m: float  # [K]
    T_out: float
    T_avg: float
    T_range: float
    Q_gen: float  # [W/m^3]
    Q_ptc: float  # [W], both films
    hold_reward: float


TRACE_FIELDS = tuple(f.name for f in dataclasses.fields(TraceRecord))


def _format(value: float) -> str:
    return repr(float(value))


def trace_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_FIELDS)
    for row in rows:
        writer.writerow([_format(getattr(row, name)) for name in TRACE_FIELDS])
    return buf.getvalue()


def write_atomic(path: str | Path, text: str) -> Path:
    """Write UTF-8 text via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_trace_csv(path: str | Path, rows) -> Path:
    return write_atomic(path, trace_to_csv(rows))


def read_trace_csv(path: str | Path) -> list[TraceRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != TRACE_FIELDS:
            raise ValueError(f"unexpected trace header {header}")
        return [TraceRecord(*map(float, row)) for row in reader]
