"""CSV ingestion and writing with line-numbered validation errors.

All files are UTF-8 with a header row and LF line endings.  Floats are
written with ``repr`` so a read-back reproduces them bit for bit.
"""

from __future__ import annotations

import csv

import numpy as np

from .errors import ValidationError
from .gpr import Dataset
from .mgpr import MultiDataset


def read_table(path):
    """``(header, rows)`` of a CSV file; rows are lists of raw strings."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ValidationError(f"{path}: file is empty")
            rows = list(reader)
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror or exc}") from exc
    width = len(header)
    for i, row in enumerate(rows, start=2):
        if len(row) != width:
            raise ValidationError(
                f"{path}:{i}: ragged row with {len(row)} cells, expected {width}"
            )
    return [h.strip() for h in header], rows


def column_values(path, header, rows, cols):
    """Numeric matrix of the named columns, validating every cell."""
    idx = []
    for c in cols:
        if c not in header:
            raise ValidationError(f"{path}: missing column {c!r} (have {header})")
        idx.append(header.index(c))
    out = np.empty((len(rows), len(cols)))
    for i, row in enumerate(rows, start=2):
        for k, j in enumerate(idx):
            cell = row[j].strip()
            try:
                val = float(cell)
            except ValueError:
                raise ValidationError(
                    f"{path}:{i}: non-numeric cell {cell!r} in column {cols[k]!r}"
                )
            if not np.isfinite(val):
                raise ValidationError(
                    f"{path}:{i}: non-finite value {cell!r} in column {cols[k]!r}"
                )
            out[i - 2, k] = val
    return out


def ingest_dataset(path, input_cols, response_cols) -> Dataset:
    """Shared-grid dataset from one CSV: Q input columns, M response columns."""
    header, rows = read_table(path)
    T = column_values(path, header, rows, list(input_cols))
    Y = column_values(path, header, rows, list(response_cols))
    return Dataset(T, Y)


def ingest_multi_by_id(path, id_col, input_cols, response_cols) -> MultiDataset:
    """Multi-output dataset from a long CSV with an output-id column.

    Outputs are ordered by sorted id; row order within an output is
    preserved.
    """
    header, rows = read_table(path)
    if id_col not in header:
        raise ValidationError(f"{path}: missing column {id_col!r}")
    j = header.index(id_col)
    ids = [row[j].strip() for row in rows]
    order = sorted(set(ids), key=lambda s: (len(s), s))
    T = column_values(path, header, rows, list(input_cols))
    Y = column_values(path, header, rows, list(response_cols))
    inputs, responses = [], []
    ids = np.array(ids)
    for out_id in order:
        mask = ids == out_id
        inputs.append(T[mask])
        responses.append(Y[mask])
    return MultiDataset(inputs, responses)


def ingest_multi_files(paths, input_cols, response_cols) -> MultiDataset:
    """Multi-output dataset from one CSV per output."""
    inputs, responses = [], []
    for path in paths:
        header, rows = read_table(path)
        inputs.append(column_values(path, header, rows, list(input_cols)))
        responses.append(column_values(path, header, rows, list(response_cols)))
    return MultiDataset(inputs, responses)


def format_value(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, header, columns):
    """Write named columns; floats use shortest round-trip formatting."""
    columns = [np.asarray(c, dtype=object).ravel() for c in columns]
    n = columns[0].size if columns else 0
    for c in columns:
        if c.size != n:
            raise ValidationError("columns disagree in length")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(n):
            fh.write(",".join(format_value(c[i]) for c in columns) + "\n")
