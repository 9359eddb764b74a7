"""Numeric text datasets (last column is the target) and train/test splits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple | None = None

    def __post_init__(self):
        if self.X.ndim != 2 or self.y.ndim != 1 or self.X.shape[0] != self.y.shape[0]:
            raise DataFormatError("features must be (n x d) with one target per row")
        if self.X.shape[0] < 2:
            raise DataFormatError("a dataset needs at least 2 rows")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise DataFormatError("dataset contains non-finite values")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class SplitDataset:
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    seed: int | None = None
    fraction: float | None = None
    train_rows: np.ndarray = field(default=None, repr=False)
    test_rows: np.ndarray = field(default=None, repr=False)

    @property
    def d(self) -> int:
        return self.X_train.shape[1]


def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def load(path, format: str = "auto") -> Dataset:
    """Read a delimited numeric matrix.

    ``format`` is ``auto`` (comma if the first data line has one, whitespace
    otherwise), ``csv`` or ``whitespace``.  A first line with any non-numeric
    cell is taken as a header.
    """
    path = Path(path)
    lines = [(i, ln) for i, ln in enumerate(path.read_text().splitlines(), 1) if ln.strip()]
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    if format == "auto":
        format = "csv" if "," in lines[0][1] else "whitespace"
    if format not in ("csv", "whitespace"):
        raise ValueError(f"unknown format {format!r}")

    def cells(text):
        return [c.strip() for c in text.split(",")] if format == "csv" else text.split()

    names = None
    first = cells(lines[0][1])
    if not all(_is_number(c) for c in first):
        names = tuple(first)
        lines = lines[1:]
        if not lines:
            raise DataFormatError(f"{path}: header but no data rows")

    width = len(names) if names else len(cells(lines[0][1]))
    if width < 2:
        raise DataFormatError(f"{path}: need at least one feature column and a target")
    rows = []
    for row_no, text in lines:
        parts = cells(text)
        if len(parts) != width:
            raise DataFormatError(f"{path}: row {row_no} has {len(parts)} columns, expected {width}")
        values = []
        for col, tok in enumerate(parts, 1):
            try:
                values.append(float(tok))
            except ValueError:
                raise DataFormatError(f"{path}: row {row_no}, column {col}: not a number: {tok!r}") from None
        rows.append(values)
    data = np.array(rows, dtype=float)
    return Dataset(data[:, :-1].copy(), data[:, -1].copy(), names)


def save(ds: Dataset, path, delimiter: str = " "):
    """Write ``ds`` with 17 significant digits, so reloading is lossless."""
    data = np.column_stack([ds.X, ds.y])
    with open(path, "w") as fh:
        if ds.feature_names:
            fh.write(delimiter.join(ds.feature_names) + "\n")
        for row in data:
            fh.write(delimiter.join(f"{v:.17g}" for v in row) + "\n")


def train_size(n: int, fraction: float) -> int:
    # round half up
    return int(math.floor(fraction * n + 0.5))


def split(ds: Dataset, fraction: float = 0.7, seed: int = 0) -> SplitDataset:
    """Uniformly random train/test partition with ``round(fraction*n)`` train rows."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must be strictly between 0 and 1")
    n_train = train_size(ds.n, fraction)
    if n_train == 0 or n_train == ds.n:
        raise ValueError(f"a {fraction} split of {ds.n} rows leaves one side empty")
    perm = np.random.default_rng(seed).permutation(ds.n)
    tr, te = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    return SplitDataset(ds.X[tr], ds.y[tr], ds.X[te], ds.y[te], seed, fraction, tr, te)
