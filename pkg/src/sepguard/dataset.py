"""Datasets, CSV ingestion and the boundary partition of observations."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import DataError
from .families import ModelFamily

__all__ = [
    "Dataset",
    "BoundaryPartition",
    "load_csv",
    "write_csv",
    "boundary_partition",
    "intern_levels",
    "CONSTANT_NAME",
]

CONSTANT_NAME = "_cons"


def intern_levels(values) -> tuple[np.ndarray, tuple]:
    """Map labels to dense integer ids in first-appearance order.

    Negative integer ids already present (``-1`` meaning "no level") are kept.
    """
    arr = np.asarray(values)
    if arr.dtype.kind in "iub" or (arr.dtype.kind == "U"):
        valid = arr >= 0 if arr.dtype.kind in "iu" else np.ones(arr.size, dtype=bool)
        uniq, first, inverse = np.unique(arr[valid], return_index=True, return_inverse=True)
        order = np.argsort(first, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(order.size)
        ids = np.full(arr.size, -1, dtype=np.int64)
        ids[valid] = rank[inverse.reshape(-1)]
        return ids, tuple(v.item() if hasattr(v, "item") else v for v in uniq[order])
    ids = np.empty(len(values), dtype=np.int64)
    lookup: dict = {}
    for i, v in enumerate(values):
        if isinstance(v, (int, np.integer)) and v < 0:
            ids[i] = -1
            continue
        j = lookup.get(v)
        if j is None:
            j = lookup[v] = len(lookup)
        ids[i] = j
    return ids, tuple(lookup)


def _is_constant_column(col) -> bool:
    return col.size > 0 and col[0] != 0 and bool(np.all(col == col[0]))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Outcome, dense regressors, factor columns and observation weights.

    Factor columns hold dense level ids ``0..L-1``; ``-1`` marks a row that
    belongs to no level of that factor (all its dummies are zero there).
    Instances are treated as immutable.
    """

    y: np.ndarray
    X: np.ndarray
    column_names: tuple
    factors: np.ndarray
    factor_names: tuple = ()
    factor_levels: tuple = ()
    weights: np.ndarray = None
    has_constant: bool = False
    depvar: str = "y"

    def __post_init__(self):
        y = np.ascontiguousarray(self.y, dtype=float).reshape(-1)
        n = y.size
        X = np.asarray(self.X, dtype=float).reshape(n, -1) if n else np.zeros((0, len(self.column_names)))
        F = np.asarray(self.factors, dtype=np.int64).reshape(n, -1) if n else np.zeros((0, len(self.factor_names)), np.int64)
        w = np.ones(n) if self.weights is None else np.ascontiguousarray(self.weights, dtype=float).reshape(-1)
        if X.shape[1] != len(self.column_names):
            raise DataError("column_names does not match the number of dense columns")
        if F.shape[1] != len(self.factor_names):
            raise DataError("factor_names does not match the number of factor columns")
        if w.size != n:
            raise DataError("weights must have one entry per observation")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X)) and np.all(np.isfinite(w))):
            raise DataError("non-finite value in dataset")
        if np.any(y < 0):
            raise DataError(f"negative outcome in row {int(np.flatnonzero(y < 0)[0]) + 1}")
        if np.any(w <= 0):
            raise DataError(f"non-positive weight in row {int(np.flatnonzero(w <= 0)[0]) + 1}")
        levels = list(self.factor_levels) if self.factor_levels else []
        for q in range(F.shape[1]):
            col = F[:, q]
            n_lev = int(col.max()) + 1 if col.size and col.max() >= 0 else 0
            if q >= len(levels):
                levels.append(tuple(range(n_lev)))
            if np.any(col < -1):
                raise DataError(f"invalid level id in factor {self.factor_names[q]!r}")
            present = np.bincount(col[col >= 0], minlength=len(levels[q]))
            if present.size > len(levels[q]) or np.any(present == 0):
                raise DataError(f"factor {self.factor_names[q]!r} has levels with no observations")
        for name, value in (("y", y), ("X", X), ("factors", F), ("weights", w)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "column_names", tuple(self.column_names))
        object.__setattr__(self, "factor_names", tuple(self.factor_names))
        object.__setattr__(self, "factor_levels", tuple(tuple(lv) for lv in levels))

    @classmethod
    def from_arrays(cls, y, X=None, factors=None, weights=None, *, column_names=None,
                    factor_names=None, add_constant=True, depvar="y"):
        """Assemble a dataset from arrays.

        ``factors`` may hold arbitrary hashable labels per column; they are
        interned to dense ids.  A constant column named ``_cons`` is added
        when there are no factors, ``add_constant`` is true and no dense
        column is already constant.
        """
        y = np.asarray(y, dtype=float).reshape(-1)
        n = y.size
        if X is None:
            X = np.zeros((n, 0))
        else:
            X = np.asarray(X, dtype=float)
            X = X.reshape(n, -1) if X.ndim != 2 else X
            if X.shape[0] != n:
                raise DataError(f"X has {X.shape[0]} rows but y has {n}")
        if column_names is None:
            column_names = tuple(f"x{j + 1}" for j in range(X.shape[1]))
        ids, levels = [], []
        if factors is not None:
            fac = np.asarray(factors, dtype=object)
            fac = fac.reshape(n, -1) if fac.size else np.zeros((n, 0), dtype=object)
            for q in range(fac.shape[1]):
                col = fac[:, q]
                try:
                    col = np.asarray(col.tolist())
                except (TypeError, ValueError):
                    pass
                i, lv = intern_levels(col)
                ids.append(i)
                levels.append(lv)
        F = np.column_stack(ids) if ids else np.zeros((n, 0), dtype=np.int64)
        if factor_names is None:
            factor_names = tuple(f"fe{q + 1}" for q in range(F.shape[1]))
        has_constant = False
        if add_constant and F.shape[1] == 0 and not any(_is_constant_column(X[:, j]) for j in range(X.shape[1])):
            X = np.column_stack([np.ones(n), X]) if X.shape[1] else np.ones((n, 1))
            column_names = (CONSTANT_NAME,) + tuple(column_names)
            has_constant = True
        return cls(y=y, X=X, column_names=tuple(column_names), factors=F,
                   factor_names=tuple(factor_names), factor_levels=tuple(levels),
                   weights=weights, has_constant=has_constant, depvar=depvar)

    @property
    def n_obs(self) -> int:
        return self.y.size

    @property
    def n_dense(self) -> int:
        return self.X.shape[1]

    @property
    def n_factors(self) -> int:
        return self.factors.shape[1]

    @property
    def n_levels(self) -> tuple:
        return tuple(len(lv) for lv in self.factor_levels)

    @property
    def n_columns(self) -> int:
        """Model dimension M: dense columns plus one column per factor level."""
        return self.n_dense + sum(self.n_levels)

    def dummies(self) -> np.ndarray:
        """Dense 0/1 matrix of all factor-level indicators (desk-scale only)."""
        blocks = []
        for q, L in enumerate(self.n_levels):
            D = np.zeros((self.n_obs, L))
            rows = np.flatnonzero(self.factors[:, q] >= 0)
            D[rows, self.factors[rows, q]] = 1.0
            blocks.append(D)
        return np.hstack(blocks) if blocks else np.zeros((self.n_obs, 0))

    def design_matrix(self) -> np.ndarray:
        """Dense columns followed by every factor-level dummy."""
        return np.hstack([self.X, self.dummies()])

    @property
    def has_intercept(self) -> bool:
        """True when the column space contains the constant (a factor or a constant column)."""
        if self.n_factors and np.all(self.factors[:, 0] >= 0):
            return True
        return any(_is_constant_column(self.X[:, j]) for j in range(self.n_dense))

    def design_names(self) -> list:
        names = list(self.column_names)
        for name, levels in zip(self.factor_names, self.factor_levels):
            names.extend(f"{name}={lv}" for lv in levels)
        return names

    def subset(self, rows) -> "Dataset":
        """Rows ``rows`` (indices or boolean mask), with unused levels removed."""
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        F = self.factors[rows]
        new_ids, new_levels = [], []
        for q in range(self.n_factors):
            col = F[:, q]
            valid = col >= 0
            used, first = np.unique(col[valid], return_index=True)
            # keep first-appearance order among surviving levels
            order = used[np.argsort(first, kind="stable")]
            remap = np.full(len(self.factor_levels[q]) + 1, -1, dtype=np.int64)
            remap[np.asarray(order, dtype=np.int64)] = np.arange(len(order))
            new_ids.append(np.where(col >= 0, remap[col], -1))
            new_levels.append(tuple(self.factor_levels[q][lv] for lv in order))
        F = np.column_stack(new_ids) if new_ids else np.zeros((rows.size, 0), dtype=np.int64)
        return replace(self, y=self.y[rows], X=self.X[rows], factors=F,
                       factor_levels=tuple(new_levels), weights=self.weights[rows])

    def with_outcome(self, y) -> "Dataset":
        return replace(self, y=np.asarray(y, dtype=float))

    def with_weights(self, weights) -> "Dataset":
        return replace(self, weights=np.asarray(weights, dtype=float))


@dataclass(frozen=True)
class BoundaryPartition:
    """Row indices with interior outcomes, outcomes at zero and at the upper bound."""

    interior: np.ndarray
    at_zero: np.ndarray
    at_upper: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def n_boundary(self) -> int:
        return self.at_zero.size + self.at_upper.size


def boundary_partition(ds: Dataset, family: ModelFamily) -> BoundaryPartition:
    """Split rows by exact comparison of ``y`` with 0 and the family's upper bound."""
    y = ds.y
    if family.bounded and np.any(y > 1):
        raise DataError(f"{family.name} needs outcomes in [0, 1]")
    upper = family.upper_bound
    at_zero = np.flatnonzero(y == 0)
    at_upper = np.flatnonzero(y == upper) if np.isfinite(upper) else np.zeros(0, dtype=np.int64)
    interior = np.flatnonzero((y > 0) & (y < upper))
    return BoundaryPartition(interior=interior, at_zero=at_zero, at_upper=at_upper)


def _parse_number(cell: str, row: int, column: str) -> float:
    text = cell.strip()
    if not text:
        raise DataError(f"missing value in row {row}, column {column!r}")
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"cannot parse {cell!r} as a number in row {row}, column {column!r}") from None
    if not math.isfinite(value):
        raise DataError(f"non-finite value {cell!r} in row {row}, column {column!r}")
    return value


def load_csv(path, depvar: str, columns: Sequence[str] = (), factors: Sequence[str] = (),
             weight: str | None = None, *, add_constant: bool = True,
             family: ModelFamily | None = None) -> Dataset:
    """Read a header-led UTF-8 CSV file into a :class:`Dataset`.

    Rows are numbered from 1 (the first data row) in error messages.

    Raises
    ------
    DataError
        Missing column, empty file, unparseable or non-finite cell, negative
        outcome or weight, or an outcome above 1 for a bounded family.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: no data rows")
        header = [h.strip() for h in header]
        index = {name: j for j, name in enumerate(header)}
        wanted = [depvar, *columns, *factors] + ([weight] if weight else [])
        for name in wanted:
            if name not in index:
                raise DataError(f"{path}: column {name!r} not found in header")
        y, X, F, w = [], [], [], []
        for r, record in enumerate(reader, start=1):
            if not record or all(not c.strip() for c in record):
                continue
            if len(record) != len(header):
                raise DataError(f"{path}: row {r} has {len(record)} fields, header has {len(header)}")
            yi = _parse_number(record[index[depvar]], r, depvar)
            if yi < 0:
                raise DataError(f"{path}: negative outcome {yi:g} in row {r}")
            if family is not None and family.bounded and yi > 1:
                raise DataError(f"{path}: outcome {yi:g} above 1 in row {r} for {family.name}")
            y.append(yi)
            X.append([_parse_number(record[index[c]], r, c) for c in columns])
            labels = []
            for c in factors:
                label = record[index[c]]
                if not label.strip():
                    raise DataError(f"{path}: missing value in row {r}, column {c!r}")
                labels.append(label)
            F.append(labels)
            if weight:
                wi = _parse_number(record[index[weight]], r, weight)
                if wi <= 0:
                    raise DataError(f"{path}: non-positive weight {wi:g} in row {r}")
                w.append(wi)
    if not y:
        raise DataError(f"{path}: no data rows")
    n = len(y)
    return Dataset.from_arrays(
        np.array(y), np.array(X, dtype=float).reshape(n, len(columns)),
        np.array(F, dtype=object).reshape(n, len(factors)) if factors else None,
        np.array(w) if weight else None,
        column_names=tuple(columns), factor_names=tuple(factors),
        add_constant=add_constant, depvar=depvar,
    )


def write_csv(ds: Dataset, path, weight_name: str = "weight") -> None:
    """Write ``ds`` back to CSV; floats use shortest round-trip repr."""
    keep = [j for j, name in enumerate(ds.column_names) if not (ds.has_constant and name == CONSTANT_NAME)]
    header = [ds.depvar] + [ds.column_names[j] for j in keep] + list(ds.factor_names) + [weight_name]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for i in range(ds.n_obs):
            row = [repr(float(ds.y[i]))]
            row += [repr(float(ds.X[i, j])) for j in keep]
            for q in range(ds.n_factors):
                lv = ds.factors[i, q]
                row.append("" if lv < 0 else str(ds.factor_levels[q][lv]))
            row.append(repr(float(ds.weights[i])))
            out.writerow(row)
