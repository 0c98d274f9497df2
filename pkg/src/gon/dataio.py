"""CSV ingestion and train/holdout splitting."""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from gon.errors import DataError, EmptyDataset, MissingColumn, ParseError


@dataclass
class Dataset:
    feature_names: list
    X: np.ndarray
    y: np.ndarray = None
    label_name: str = None
    cond_names: list = field(default_factory=list)
    Z: np.ndarray = None

    def __post_init__(self):
        n = self.X.shape[0]
        if self.y is not None and self.y.shape[0] != n:
            raise DataError("label and feature row counts differ")
        if self.Z is not None and self.Z.shape[0] != n:
            raise DataError("conditional and feature row counts differ")

    def __len__(self):
        return self.X.shape[0]

    def take(self, rows):
        return Dataset(self.feature_names, self.X[rows],
                       None if self.y is None else self.y[rows], self.label_name,
                       self.cond_names, None if self.Z is None else self.Z[rows])


def read_rows(path):
    """Header and raw string rows of a CSV file."""
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise EmptyDataset(f"{path} is empty")
        rows = [r for r in reader if r]
    return [h.strip() for h in header], rows


def load_csv(path, label_column=None, feature_columns=None, cond_columns=None):
    """Loads numeric columns from a CSV file with a header row.

    Features default to every column that is neither the label nor a
    conditional column, in file order.  Rows are numbered from 1 after the
    header in parse errors.

    Raises:
        MissingColumn: a named column is not in the header.
        ParseError: cells that are empty, non-numeric or non-finite.
        EmptyDataset: no data rows.
    """
    header, rows = read_rows(path)
    cond_columns = list(cond_columns or [])
    if feature_columns is None:
        feature_columns = [h for h in header if h != label_column and h not in cond_columns]
    feature_columns = list(feature_columns)
    wanted = feature_columns + cond_columns + ([label_column] if label_column else [])
    missing = [c for c in wanted if c not in header]
    if missing:
        raise MissingColumn(f"columns not found in {path}: {missing}")
    if not rows:
        raise EmptyDataset(f"{path} has no data rows")
    if not feature_columns:
        raise DataError("no feature columns selected")

    pos = {h: i for i, h in enumerate(header)}
    values = np.empty((len(rows), len(wanted)))
    errors = []
    for r, row in enumerate(rows):
        for j, col in enumerate(wanted):
            cell = row[pos[col]].strip() if pos[col] < len(row) else ""
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                errors.append((r + 1, col))
            values[r, j] = v
    if errors:
        raise ParseError(errors)

    nf, nc = len(feature_columns), len(cond_columns)
    return Dataset(
        feature_names=feature_columns,
        X=values[:, :nf],
        y=values[:, nf + nc] if label_column else None,
        label_name=label_column,
        cond_names=cond_columns,
        Z=values[:, nf:nf + nc] if nc else None,
    )


def write_csv(ds, path):
    """Writes features, conditional columns, then the label, with exact floats."""
    header = list(ds.feature_names) + list(ds.cond_names)
    cols = [ds.X] + ([ds.Z] if ds.Z is not None else [])
    if ds.y is not None:
        header.append(ds.label_name or "y")
        cols.append(ds.y[:, None])
    data = np.hstack(cols)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in data:
            w.writerow([repr(float(v)) for v in row])


def split(ds, fraction, seed=0):
    """Seeded shuffle, then the first ``round(fraction * N)`` rows train."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must be strictly between 0 and 1")
    n = len(ds)
    n_train = int(round(fraction * n))
    if n_train == 0 or n_train == n:
        raise EmptyDataset(f"splitting {n} rows at {fraction} leaves one side empty")
    order = np.random.default_rng(seed).permutation(n)
    return ds.take(np.sort(order[:n_train])), ds.take(np.sort(order[n_train:]))
