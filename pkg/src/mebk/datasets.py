"""Bundled datasets and a numeric CSV reader.

``cholesterol.csv``
    82 age-group averages of total cholesterol (g/l), columns ``age`` and
    ``cholesterol``; values lie in [1, 2].
``marks.csv``
    590 marks out of 20 in three courses, columns ``X1``, ``X2``, ``X3``.
    Each column is the per-student expansion of a table of counts per mark,
    sorted ascending and expanded independently, so rows do not pair marks of
    the same student.  Only univariate analyses are meaningful.

The Old Faithful geyser data are not bundled; :func:`load_old_faithful` reads
a user-supplied copy with ``eruptions`` and ``waiting`` columns.
"""

from __future__ import annotations

import csv
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ParameterError

__all__ = ["read_numeric_csv", "load_cholesterol", "load_marks", "load_old_faithful",
           "bundled_path"]


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _parse_rows(rows, source: str, columns=None):
    rows = [r for r in rows if r and any(c.strip() for c in r) and not r[0].startswith("#")]
    if not rows:
        raise ParameterError(f"{source}: no data rows")
    first = [c.strip() for c in rows[0]]
    has_header = not all(_is_number(c) for c in first)
    header = first if has_header else [f"x{j + 1}" for j in range(len(first))]
    body = rows[1:] if has_header else rows
    start = 2 if has_header else 1
    if columns is not None:
        cols = []
        for c in columns:
            if isinstance(c, int):
                cols.append(c)
            elif c in header:
                cols.append(header.index(c))
            else:
                raise ParameterError(f"{source}: no column {c!r} (have {header})")
    else:
        cols = list(range(len(header)))
    out = np.empty((len(body), len(cols)))
    for k, r in enumerate(body):
        if len(r) != len(header):
            raise ParameterError(f"{source}:{start + k}: expected {len(header)} fields, "
                                 f"got {len(r)}")
        for j, c in enumerate(cols):
            cell = r[c].strip()
            try:
                out[k, j] = float(cell)
            except ValueError:
                raise ParameterError(
                    f"{source}:{start + k}: non-numeric value {cell!r} in column "
                    f"{header[c]!r}") from None
    if not np.all(np.isfinite(out)):
        raise ParameterError(f"{source}: non-finite values")
    return out, [header[c] for c in cols]


def read_numeric_csv(path, columns=None, return_header: bool = False):
    """Read a comma-separated numeric table (header row optional).

    ``columns`` selects columns by name or 0-based index.  Errors name the
    file and line of the offending cell.
    """
    path = Path(path)
    if not path.is_file():
        raise ParameterError(f"input file {str(path)!r} does not exist")
    with open(path, newline="", encoding="utf-8") as fh:
        data, header = _parse_rows(list(csv.reader(fh)), str(path), columns)
    return (data, header) if return_header else data


def bundled_path(name: str) -> Path:
    """Filesystem path of a bundled dataset (``cholesterol`` or ``marks``)."""
    ref = resources.files("mebk") / "data" / f"{name}.csv"
    if not ref.is_file():
        raise ParameterError(f"no bundled dataset {name!r}")
    return Path(str(ref))


def load_cholesterol() -> np.ndarray:
    """The 82 cholesterol averages as a 1-d array."""
    return read_numeric_csv(bundled_path("cholesterol"), ["cholesterol"])[:, 0]


def load_marks(column: str | None = None) -> np.ndarray:
    """Marks as a ``(590, 3)`` array, or one column as a 1-d array."""
    if column is None:
        return read_numeric_csv(bundled_path("marks"))
    return read_numeric_csv(bundled_path("marks"), [column])[:, 0]


def load_old_faithful(path) -> np.ndarray:
    """``(n, 2)`` array of eruption duration and waiting time from a CSV.

    Accepts the usual export with columns ``eruptions`` and ``waiting`` (an
    unnamed leading row-index column is ignored).
    """
    return read_numeric_csv(path, ["eruptions", "waiting"])
