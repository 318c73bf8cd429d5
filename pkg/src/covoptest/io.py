"""CSV ingestion and export of grouped curves.

Two layouts are supported:

``wide``
    A header row of grid points followed by one curve per row. A leading
    column whose header is not a number (for example ``group``) holds the
    group label of each curve.
``long``
    Columns ``group, curve_id, t, value`` with one row per observation.
    Every curve must be observed at every point of the union grid.
"""

from __future__ import annotations

import csv
import math

import numpy as np

from .fcore import FunctionalSample, Grid

LAYOUTS = ("wide", "long")
LONG_COLUMNS = ("group", "curve_id", "t", "value")


class IngestError(ValueError):
    """Malformed or incomplete input file."""


def _number(cell, where):
    try:
        x = float(cell)
    except (TypeError, ValueError):
        raise IngestError(f"{where}: non-numeric value {cell!r}") from None
    if not math.isfinite(x):
        raise IngestError(f"{where}: non-finite value {cell!r}")
    return x


def _is_number(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _build(grid, groups, min_size):
    samples = []
    for label, rows in groups.items():
        if len(rows) < min_size:
            raise IngestError(f"group {label!r} has {len(rows)} curve(s); at least {min_size} are needed")
        samples.append(FunctionalSample(grid, np.array(rows), label))
    return samples


def _read_wide(reader, min_size):
    header = next(reader, None)
    if not header:
        raise IngestError("empty file")
    has_group = not _is_number(header[0].strip())
    cells = header[1:] if has_group else header
    points = [_number(c, f"header column {i + 1 + has_group}") for i, c in enumerate(cells)]
    try:
        grid = Grid(points)
    except ValueError as exc:
        raise IngestError(f"header: {exc}") from None
    groups = {}
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        label = row[0].strip() if has_group else "1"
        vals = row[1:] if has_group else row
        if len(vals) != grid.size:
            raise IngestError(f"line {line}: expected {grid.size} values, got {len(vals)}")
        groups.setdefault(label, []).append([_number(c, f"line {line}, column {j + 1 + has_group}") for j, c in enumerate(vals)])
    return _build(grid, groups, min_size)


def _read_long(reader, min_size):
    header = [h.strip() for h in (next(reader, None) or [])]
    missing = [c for c in LONG_COLUMNS if c not in header]
    if missing:
        raise IngestError(f"long layout needs columns {LONG_COLUMNS}; missing {missing}")
    col = {c: header.index(c) for c in LONG_COLUMNS}
    obs = {}
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < len(header):
            raise IngestError(f"line {line}: expected {len(header)} cells, got {len(row)}")
        key = (row[col["group"]].strip(), row[col["curve_id"]].strip())
        t = _number(row[col["t"]], f"line {line}, column t")
        v = _number(row[col["value"]], f"line {line}, column value")
        curve = obs.setdefault(key, {})
        if t in curve:
            raise IngestError(f"line {line}: curve_id {key[1]!r} has a repeated point t={t!r}")
        curve[t] = v
    if not obs:
        raise IngestError("no observations")
    points = sorted({t for curve in obs.values() for t in curve})
    grid = Grid(points)
    groups = {}
    for (label, cid), curve in obs.items():
        if len(curve) != len(points):
            absent = [t for t in points if t not in curve]
            raise IngestError(
                f"curve_id {cid!r} (group {label!r}) is missing {len(absent)} grid point(s), first t={absent[0]!r}"
            )
        groups.setdefault(label, []).append([curve[t] for t in points])
    return _build(grid, groups, min_size)


def ingest_csv(path, layout="wide", min_size=2):
    """Read grouped curves from a CSV file.

    Parameters
    ----------
    path : str or path-like
    layout : {"wide", "long"}
    min_size : int, default=2
        Minimum number of curves per group.

    Returns
    -------
    list of FunctionalSample
        One sample per group, in order of first appearance.
    """
    if layout not in LAYOUTS:
        raise ValueError(f"layout must be one of {LAYOUTS}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if layout == "wide":
            return _read_wide(reader, min_size)
        return _read_long(reader, min_size)


def _label(s, i):
    return str(i + 1) if s.label is None else str(s.label)


def export_csv(samples, path, layout="wide"):
    """Write samples so that :func:`ingest_csv` reads back identical values."""
    if layout not in LAYOUTS:
        raise ValueError(f"layout must be one of {LAYOUTS}")
    samples = list(samples)
    grid = samples[0].grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if layout == "wide":
            w.writerow(["group"] + [repr(float(t)) for t in grid.points])
            for i, s in enumerate(samples):
                label = _label(s, i)
                for row in s.values:
                    w.writerow([label] + [repr(float(v)) for v in row])
        else:
            w.writerow(LONG_COLUMNS)
            for i, s in enumerate(samples):
                label = _label(s, i)
                for j, row in enumerate(s.values):
                    for t, v in zip(grid.points, row):
                        w.writerow([label, f"{label}-{j}", repr(float(t)), repr(float(v))])


__all__ = ["IngestError", "export_csv", "ingest_csv"]
