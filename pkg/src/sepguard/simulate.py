"""Synthetic count data with planted separation patterns.

Patterns
--------
dense-only
    ``x_sep`` equals ``x1 + x2`` except on the planted zero rows, where it is
    lower; the certificate is ``x_sep - x1 - x2``.
fe-only
    One level of ``fe1`` occurs only on planted zero rows.
mixed
    ``x_sep`` is the dummy of one ``fe1`` level except on planted zero rows
    of that level, where it is lower; the certificate is ``x_sep - d``.
overlap
    No separation.
gamma-sum-negative
    ``x_g`` is 0 where ``y > 0`` and takes both signs on zeros with a
    negative sum: no separation in the Poisson sense, but Gamma PML
    estimates do not exist.

Every non-planted level has rows with ``y > 0`` and the dense columns are
continuous, so the only direction vanishing on all positive outcomes is the
planted one.  This is checked on construction for desk-sized data, which
makes the recorded ground truth exact.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

__all__ = ["PATTERNS", "Simulated", "simulate", "write_simulated"]

PATTERNS = ("dense-only", "fe-only", "mixed", "overlap", "gamma-sum-negative")
_RANK_CHECK_CELLS = 4_000_000


@dataclass
class Simulated:
    """A generated dataset with its ground truth."""

    pattern: str
    seed: int
    y: np.ndarray
    X: np.ndarray
    column_names: tuple
    factors: np.ndarray
    factor_names: tuple
    separated: np.ndarray
    certificate: np.ndarray
    gamma_exists: bool = True

    def to_dataset(self, add_constant=True):
        from .dataset import Dataset
        return Dataset.from_arrays(self.y, self.X, self.factors if self.factors.shape[1] else None,
                                   column_names=self.column_names, factor_names=self.factor_names,
                                   add_constant=add_constant)


def _ensure_positive(y, rows, rng, k):
    """Make at least ``k`` of ``rows`` have a positive outcome."""
    pos = rows[y[rows] > 0]
    if pos.size < k:
        extra = rng.choice(rows[y[rows] == 0], size=min(k - pos.size, int(np.sum(y[rows] == 0))), replace=False)
        y[extra] = rng.integers(1, 4, size=extra.size)


def simulate(pattern: str, n: int = 200, seed: int = 0, *, n_dense: int = 3, levels: int = 8,
             n_factors: int | None = None, zero_share: float = 0.35, planted: int | None = None,
             check: bool = True) -> Simulated:
    """Generate a dataset for ``pattern`` (see module docstring).

    Parameters
    ----------
    n : int
        Rows (at least ``30``).
    levels : int
        Levels per factor (excluding a planted level).
    n_factors : int, optional
        Number of factors; the default is 1, or 0 for ``dense-only``.
    zero_share : float
        Target share of zero outcomes.
    planted : int, optional
        Number of planted separated rows (default ``max(2, n // 25)``).

    Raises
    ------
    ValueError
        Unknown pattern or too few rows.
    """
    if pattern not in PATTERNS:
        raise ValueError(f"unknown pattern {pattern!r}; choose one of: {', '.join(PATTERNS)}")
    if n < 30:
        raise ValueError("need at least 30 rows")
    rng = np.random.default_rng(seed)
    if n_factors is None:
        n_factors = 0 if pattern == "dense-only" else 1
    if pattern in ("fe-only", "mixed") and n_factors < 1:
        raise ValueError(f"pattern {pattern!r} needs a factor")
    k_plant = max(2, n // 25) if planted is None else int(planted)
    X = np.round(rng.normal(size=(n, n_dense)), 6)
    F = rng.integers(0, levels, size=(n, n_factors))
    effects = [rng.normal(scale=0.3, size=levels) for _ in range(n_factors)]
    eta = X @ rng.normal(scale=0.3, size=n_dense)
    for q in range(n_factors):
        eta += effects[q][F[:, q]]
    # shift so that roughly zero_share of draws are 0
    shift = np.log(-np.log(zero_share))
    eta = eta - np.mean(eta) + shift
    y = rng.poisson(np.exp(eta)).astype(float)
    if n_factors:
        for q in range(n_factors):
            for lv in range(levels):
                rows = np.flatnonzero(F[:, q] == lv)
                if rows.size == 0:
                    F[rng.integers(n), q] = lv
                    rows = np.flatnonzero(F[:, q] == lv)
                _ensure_positive(y, rows, rng, min(3, rows.size))
    _ensure_positive(y, np.arange(n), rng, n_dense + 3)
    names = [f"x{j + 1}" for j in range(n_dense)]
    cert = np.zeros(n)
    separated = np.zeros(0, dtype=np.int64)
    gamma_exists = True
    protected = np.zeros(0, dtype=np.int64)
    free = np.flatnonzero(y >= 0)
    if pattern == "dense-only":
        S = np.sort(rng.choice(free, size=k_plant, replace=False))
        y[S] = 0
        drop = rng.integers(1, 4, size=S.size).astype(float)
        x_sep = X[:, 0] + X[:, 1] if n_dense >= 2 else X[:, 0].copy()
        x_sep[S] -= drop
        cert[S] = -drop
        X = np.column_stack([X, x_sep])
        names.append("x_sep")
        separated = S
    elif pattern == "fe-only":
        S = np.sort(rng.choice(free, size=k_plant, replace=False))
        y[S] = 0
        F[S, 0] = levels
        cert[S] = -1.0
        separated = S
    elif pattern == "mixed":
        A = int(rng.integers(levels))
        rows = np.flatnonzero(F[:, 0] == A)
        if rows.size < 4:
            extra = rng.choice(np.flatnonzero(F[:, 0] != A), size=4 - rows.size, replace=False)
            F[extra, 0] = A
            rows = np.flatnonzero(F[:, 0] == A)
        pos = rows[y[rows] > 0]
        keep_pos = pos[:max(2, min(3, pos.size))]
        cand = np.setdiff1d(rows, keep_pos)
        if keep_pos.size < 2 or cand.size == 0:
            y[rows[:2]] = np.maximum(y[rows[:2]], 1)
            keep_pos = rows[:2]
            cand = rows[2:]
        S = np.sort(rng.choice(cand, size=min(k_plant, cand.size), replace=False))
        y[S] = 0
        drop = rng.integers(1, 4, size=S.size).astype(float)
        x_sep = (F[:, 0] == A).astype(float)
        x_sep[S] -= drop
        cert[S] = -drop
        X = np.column_stack([X, x_sep])
        names.append("x_sep")
        separated = S
    elif pattern == "gamma-sum-negative":
        zeros = np.flatnonzero(y == 0)
        if zeros.size < 3:
            zeros = np.sort(rng.choice(free, size=3, replace=False))
            y[zeros] = 0
        pick = rng.choice(zeros, size=3, replace=False)
        x_g = np.zeros(n)
        x_g[pick[:2]] = -1.0
        x_g[pick[2]] = 1.0
        X = np.column_stack([X, x_g])
        names.append("x_g")
        cert = x_g.copy()
        gamma_exists = False
        protected = pick
    _repair(y, F, np.union1d(separated, protected), levels, rng, n_dense)
    sim = Simulated(pattern=pattern, seed=seed, y=y, X=X, column_names=tuple(names), factors=F,
                    factor_names=tuple(f"fe{q + 1}" for q in range(n_factors)), separated=separated,
                    certificate=cert, gamma_exists=gamma_exists)
    if check:
        _check_truth(sim)
    return sim


def _repair(y, F, S, levels, rng, n_dense):
    """Restore positive outcomes on every non-planted level after planting."""
    mask = np.ones(y.size, dtype=bool)
    mask[S] = False
    for q in range(F.shape[1]):
        for lv in range(levels):
            rows = np.flatnonzero((F[:, q] == lv) & mask)
            if rows.size:
                _ensure_positive(y, rows, rng, min(3, rows.size))
    _ensure_positive(y, np.flatnonzero(mask), rng, n_dense + 3)


def _check_truth(sim: Simulated):
    ds = sim.to_dataset()
    if ds.n_obs * ds.n_columns > _RANK_CHECK_CELLS:
        return
    D = ds.design_matrix()
    inner = D[ds.y > 0]
    N = scipy.linalg.null_space(inner, rcond=1e-10)
    expected = 0 if sim.pattern == "overlap" else 1
    if N.shape[1] != expected:
        raise RuntimeError(
            f"generated data has {N.shape[1]} directions vanishing on positive outcomes, expected {expected}; "
            "try another seed or more rows")
    if expected:
        z = D @ N[:, 0]
        z /= np.max(np.abs(z))
        c = sim.certificate / np.max(np.abs(sim.certificate))
        if not (np.allclose(z, c, atol=1e-8) or np.allclose(z, -c, atol=1e-8)):
            z_sorted = np.sort(np.abs(z))
            if not np.allclose(z_sorted, np.sort(np.abs(c)), atol=1e-8):
                raise RuntimeError("planted certificate does not span the interior null space")


def write_simulated(sim: Simulated, path) -> Path:
    """Write the CSV and the ``<path>.truth.json`` sidecar; returns the sidecar path."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(["y", *sim.column_names, *sim.factor_names])
        for i in range(sim.y.size):
            out.writerow([repr(float(sim.y[i]))] + [repr(float(v)) for v in sim.X[i]]
                         + [f"L{int(v)}" for v in sim.factors[i]])
    truth = {
        "pattern": sim.pattern,
        "seed": sim.seed,
        "n_obs": int(sim.y.size),
        "separated_indices": [int(i) + 1 for i in sim.separated],
        "certificate_z": [float(v) for v in sim.certificate],
        "gamma_exists": sim.gamma_exists,
        "columns": list(sim.column_names),
        "factors": list(sim.factor_names),
    }
    side = path.with_name(path.name + ".truth.json")
    side.write_text(json.dumps(truth, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return side
