"""Loading a silo's time series from CSV.

Expected layout: a header row naming the columns, the first column holding
ISO-8601 timestamps and every other column a real value. Empty cells are
missing values (NaN); whether that is acceptable is the validation step's
call, not the loader's. Anything that prevents producing a well-formed
dataset at all -- unreadable file, no header, ragged rows, unparsable cells
-- raises ``DataUnreadable`` with the offending location.
"""

from __future__ import annotations

import csv
import datetime as _dt
import math
from pathlib import Path

import numpy as np

from ..errors import DataUnreadable
from ..learning import Dataset

_TS_FORMATS = (
    "%Y-%m-%dT%H:%M:%S%z",  # fromisoformat() on 3.10 rejects "+0000" offsets
    "%Y-%m-%d %H:%M:%S%z",
)


def _parse_timestamp(text: str, row: int) -> _dt.datetime:
    text = text.strip()
    try:
        return _dt.datetime.fromisoformat(text)
    except ValueError:
        pass
    for fmt in _TS_FORMATS:
        try:
            return _dt.datetime.strptime(text, fmt)
        except ValueError:
            continue
    raise DataUnreadable(f"row {row}: {text!r} is not an ISO-8601 timestamp")


def _parse_cell(text: str, row: int, column: str) -> float:
    text = text.strip()
    if not text:
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise DataUnreadable(f"row {row}, column {column!r}: {text!r} is not a number")


def load_dataset(path: str | Path) -> Dataset:
    """Read a CSV file into a :class:`~flapu.learning.Dataset`."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataUnreadable(f"cannot read {path}: {exc}")

    if not rows:
        raise DataUnreadable(f"{path} is empty")
    header = [name.strip() for name in rows[0]]
    if len(header) < 2:
        raise DataUnreadable(f"{path}: need a timestamp column and at least one value column")
    body = rows[1:]
    if not body:
        raise DataUnreadable(f"{path} has a header but no data rows")

    timestamps = []
    values = np.empty((len(body), len(header) - 1), dtype=float)
    for i, cells in enumerate(body):
        # csv counts the header as row 1
        row_no = i + 2
        if len(cells) != len(header):
            raise DataUnreadable(
                f"{path} row {row_no}: expected {len(header)} cells, got {len(cells)}"
            )
        timestamps.append(_parse_timestamp(cells[0], row_no))
        for j, cell in enumerate(cells[1:]):
            values[i, j] = _parse_cell(cell, row_no, header[j + 1])

    columns = [(header[0], "timestamp")] + [(name, "real") for name in header[1:]]
    return Dataset(columns=columns, timestamps=timestamps, values=values)
