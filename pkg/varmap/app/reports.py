"""
CSV emission for command results.

Every field is numeric (or empty), rows end in LF and a header row comes
first, so files load directly into plotting tools.
"""
import csv
import sys
from contextlib import contextmanager
from typing import IO, Iterable, Iterator, Optional, Sequence

import numpy as np

from app.dynamics import FixedPointResult
from app.feigenbaum import SweepRecord

SWEEP_COLUMNS = ("omega", "q", "p", "period", "escaped")
ATTRACTOR_COLUMNS = ("q", "p")
FIXPOINT_COLUMNS = (
    "omega", "q", "p", "period", "stable",
    "multiplier_re1", "multiplier_im1", "multiplier_re2", "multiplier_im2", "converged",
)
COMPARE_COLUMNS = ("order", "radius", "max_err", "mean_err")


def fmt(value) -> str:
    """Shortest text that reads back to the same float; None becomes an empty field."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


@contextmanager
def open_output(path: Optional[str]) -> Iterator[IO[str]]:
    """Yield a text stream for path, or standard output for None / '-'."""
    if path is None or path == "-":
        yield sys.stdout
        sys.stdout.flush()
        return
    try:
        handle = open(path, "w", encoding="utf-8", newline="")
    except OSError as e:
        raise ValueError(f"Cannot write output file {path}: {e}") from e
    with handle:
        yield handle


def _writer(stream: IO[str], columns: Sequence[str]):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(columns)
    return writer


def write_sweep_csv(records: Iterable[SweepRecord], stream: IO[str]) -> int:
    """One row per kept point per omega; escaped omegas with no points get one empty row."""
    writer = _writer(stream, SWEEP_COLUMNS)
    rows = 0
    for record in records:
        if not len(record.kept_points):
            if record.escaped:
                writer.writerow([fmt(record.omega), "", "", fmt(record.period), "1"])
                rows += 1
            continue
        escaped = fmt(record.escaped)
        period = fmt(record.period)
        omega = fmt(record.omega)
        for q, p in record.kept_points:
            writer.writerow([omega, fmt(q), fmt(p), period, escaped])
            rows += 1
    return rows


def write_attractor_csv(points: np.ndarray, stream: IO[str]) -> int:
    writer = _writer(stream, ATTRACTOR_COLUMNS)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    for q, p in pts:
        writer.writerow([fmt(q), fmt(p)])
    return len(pts)


def write_fixpoint_csv(results: Iterable[FixedPointResult], stream: IO[str]) -> int:
    writer = _writer(stream, FIXPOINT_COLUMNS)
    rows = 0
    for result in results:
        m1, m2 = result.multipliers
        writer.writerow([
            fmt(result.omega), fmt(result.location[0]), fmt(result.location[1]), fmt(result.period),
            fmt(result.stable), fmt(m1.real), fmt(m1.imag), fmt(m2.real), fmt(m2.imag), fmt(result.converged),
        ])
        rows += 1
    return rows


def write_compare_csv(rows: Iterable, stream: IO[str]) -> int:
    """Rows are (order, radius, max_err, mean_err) records."""
    writer = _writer(stream, COMPARE_COLUMNS)
    count = 0
    for row in rows:
        writer.writerow([fmt(row.order), fmt(row.radius), fmt(row.max_err), fmt(row.mean_err)])
        count += 1
    return count
