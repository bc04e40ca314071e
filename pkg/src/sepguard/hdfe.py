"""Weighted least squares with high-dimensional fixed effects.

Factor effects are partialled out by alternating weighted group demeaning
(method of alternating projections) with Irons-Tuck extrapolation; the
remaining dense block is solved by pivoted QR.  By Frisch-Waugh-Lovell the
dense coefficients and the residuals equal those of the full dummy
regression, so fitted values are recovered as ``regressand - residuals``.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .exceptions import ConvergenceError, EmptyModelError

__all__ = [
    "FactorStructure",
    "WlsSolution",
    "within_transform",
    "wls_solve",
    "solve_partialled",
    "recover_fixed_effects",
    "normalize_fixed_effects",
    "WeightedProjector",
    "RANK_TOL",
]

RANK_TOL = 1e-10


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get("SEPGUARD_THREADS", "1")))
    except ValueError:
        return 1


class FactorStructure:
    """Precomputed level sums for weighted demeaning by one or more factors.

    Parameters
    ----------
    factors : ndarray of int, shape (n, Q)
        Level ids per factor; ``-1`` means the row has no level in that factor.
    weights : ndarray, shape (n,)
        Positive observation weights.
    n_levels : sequence of int, optional
        Level counts; inferred from the ids when omitted.
    """

    def __init__(self, factors, weights, n_levels=None):
        factors = np.asarray(factors, dtype=np.int64)
        n = factors.shape[0]
        factors = factors.reshape(n, -1)
        self.n_obs = n
        self.weights = np.asarray(weights, dtype=float)
        self.ids = []
        self.sum_ops = []
        self.level_weight = []
        for q in range(factors.shape[1]):
            ids = factors[:, q]
            L = int(n_levels[q]) if n_levels is not None else int(ids.max()) + 1
            rows = np.flatnonzero(ids >= 0)
            op = sp.csr_matrix((self.weights[rows], (ids[rows], rows)), shape=(L, n))
            wsum = np.asarray(op.sum(axis=1)).ravel()
            # level L is a sink for rows without a level; its mean stays 0
            gather = np.where(ids >= 0, ids, L)
            self.ids.append(gather)
            self.sum_ops.append(op)
            self.level_weight.append(wsum)

    @property
    def n_factors(self) -> int:
        return len(self.ids)

    def level_means(self, q, x):
        """Weighted per-level means of the columns of ``x`` for factor ``q``."""
        wsum = self.level_weight[q]
        sums = self.sum_ops[q] @ x
        out = np.zeros((wsum.size + 1,) + x.shape[1:])
        nz = wsum > 0
        out[:-1][nz] = sums[nz] / (wsum[nz] if x.ndim == 1 else wsum[nz, None])
        return out

    def sweep(self, x):
        """One pass of demeaning by every factor in turn (in place)."""
        for q in range(self.n_factors):
            x -= self.level_means(q, x)[self.ids[q]]
        return x

    def transform(self, columns, tol=1e-10, max_sweeps=100_000, warmup=3):
        """Within-transform ``columns``; returns ``(transformed, sweeps)``.

        Iterates until the largest absolute change of any cell in a plain
        sweep is below ``tol`` times that column's scale.
        """
        x = np.array(columns, dtype=float, copy=True)
        vector = x.ndim == 1
        if vector:
            x = x[:, None]
        if self.n_factors == 0 or x.shape[1] == 0:
            return (x[:, 0] if vector else x), 0
        if self.n_factors == 1:
            self.sweep(x)
            return (x[:, 0] if vector else x), 1
        threads = _thread_count()
        if threads > 1 and x.shape[1] > 1:
            chunks = np.array_split(np.arange(x.shape[1]), min(threads, x.shape[1]))
            with ThreadPoolExecutor(len(chunks)) as pool:
                results = list(pool.map(lambda c: self._transform_block(x[:, c], tol, max_sweeps, warmup), chunks))
            for c, (block, _) in zip(chunks, results):
                x[:, c] = block
            sweeps = max(s for _, s in results)
        else:
            x, sweeps = self._transform_block(x, tol, max_sweeps, warmup)
        return (x[:, 0] if vector else x), sweeps

    def _transform_block(self, x, tol, max_sweeps, warmup):
        scale = np.max(np.abs(x), axis=0)
        scale[scale == 0] = 1.0
        thresh = tol * scale
        active = np.arange(x.shape[1])
        sweeps = 0
        last_delta = np.inf
        while active.size:
            xa = x[:, active]
            x1 = self.sweep(xa.copy())
            sweeps += 1
            delta = np.max(np.abs(x1 - xa), axis=0)
            done = delta < thresh[active]
            if sweeps > warmup and not np.all(done):
                x2 = self.sweep(x1.copy())
                sweeps += 1
                d1 = x1 - xa
                d2 = x2 - x1
                dd = d2 - d1
                num = np.einsum("ij,ij->j", d2, dd)
                den = np.einsum("ij,ij->j", dd, dd)
                coef = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
                x_new = x2 - coef * d2
                delta = np.maximum(delta, np.max(np.abs(x2 - x1), axis=0))
                done = np.max(np.abs(x2 - x1), axis=0) < thresh[active]
                x1 = np.where(done, x2, x_new)
            x[:, active] = x1
            last_delta = float(np.max(delta)) if delta.size else 0.0
            active = active[~done]
            if sweeps >= max_sweeps and active.size:
                raise ConvergenceError(
                    f"within-transformation did not converge after {sweeps} sweeps "
                    f"(last max change {last_delta:.3e})", last_delta=last_delta)
        return x, sweeps


def within_transform(columns, factors, weights=None, tol=1e-10, max_sweeps=100_000, n_levels=None):
    """Residualize ``columns`` on all factor-level indicators by weighted demeaning.

    Parameters
    ----------
    columns : array_like, shape (n,) or (n, k)
    factors : array_like of int, shape (n, Q)
        Level ids (``-1`` = no level).  ``Q = 0`` returns the input unchanged.
    weights : array_like, shape (n,), optional
        Positive weights, default 1.
    tol : float
        Convergence threshold relative to each column's max absolute value.

    Returns
    -------
    ndarray
        The transformed columns, same shape as ``columns``.
    """
    columns = np.asarray(columns, dtype=float)
    n = columns.shape[0]
    weights = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if np.any(~(weights > 0)):
        raise ValueError("weights must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    factors = np.asarray(factors, dtype=np.int64).reshape(n, -1)
    out, _ = FactorStructure(factors, weights, n_levels).transform(columns, tol=tol, max_sweeps=max_sweeps)
    return out


@dataclass
class WlsSolution:
    """Result of a weighted least squares fit with partialled factors."""

    coefficients: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    converged: bool = True
    projection_iterations: int = 0
    dropped: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    r2: float = float("nan")
    ssr: float = float("nan")


def solve_partialled(yt, Xt, weights, rank_tol=RANK_TOL):
    """Pivoted-QR weighted least squares on already within-transformed data.

    Returns ``(coef, dropped)``; collinear columns get coefficient 0 and are
    flagged in ``dropped``.  A pivot is dropped when ``|R_kk|`` falls below
    ``rank_tol`` times the largest pivot, after scaling columns to unit
    weighted norm.
    """
    k = Xt.shape[1]
    coef = np.zeros(k)
    dropped = np.ones(k, dtype=bool)
    if k == 0:
        return coef, dropped
    sw = np.sqrt(weights)
    A = Xt * sw[:, None]
    norms = np.linalg.norm(A, axis=0)
    usable = norms > 0
    if not np.any(usable):
        return coef, dropped
    idx = np.flatnonzero(usable)
    A = A[:, idx] / norms[idx]
    Q, R, piv = scipy.linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag >= rank_tol * diag[0])) if diag.size and diag[0] > 0 else 0
    if rank == 0:
        return coef, dropped
    rhs = Q[:, :rank].T @ (yt * sw)
    sol = scipy.linalg.solve_triangular(R[:rank, :rank], rhs)
    cols = idx[piv[:rank]]
    coef[cols] = sol / norms[cols]
    dropped[cols] = False
    return coef, dropped


def _r2(y, resid, weights, centered):
    ssr = float(np.sum(weights * resid * resid))
    if centered:
        ybar = np.sum(weights * y) / np.sum(weights)
        tss = float(np.sum(weights * (y - ybar) ** 2))
    else:
        tss = float(np.sum(weights * y * y))
    if tss == 0:
        return (1.0 if ssr == 0 else 0.0), ssr
    return 1.0 - ssr / tss, ssr


def wls_solve(regressand, ds, active_columns=None, weights=None, *, tol=1e-10,
              max_sweeps=100_000, rank_tol=RANK_TOL, structure=None, transformed_X=None):
    """Regress ``regressand`` on dense columns plus all factors of ``ds``.

    Parameters
    ----------
    regressand : array_like, shape (n,)
    ds : Dataset
    active_columns : sequence of int or bool mask, optional
        Dense columns to use; all by default.
    weights : array_like, optional
        Regression weights (default: ``ds.weights``).
    structure, transformed_X : optional
        A prebuilt :class:`FactorStructure` for these weights and the matching
        within-transformed active columns, to skip recomputation.

    Returns
    -------
    WlsSolution
        ``coefficients`` spans all dense columns of ``ds`` (0 where inactive or
        dropped); ``dropped`` flags active columns removed as collinear.
    """
    y = np.asarray(regressand, dtype=float)
    w = ds.weights if weights is None else np.asarray(weights, dtype=float)
    if np.any(~(w > 0)):
        raise ValueError("weights must be positive")
    if active_columns is None:
        active = np.arange(ds.n_dense)
    else:
        active = np.asarray(active_columns)
        active = np.flatnonzero(active) if active.dtype == bool else active.astype(np.int64)
    if active.size == 0 and ds.n_factors == 0:
        raise EmptyModelError("empty model: no regressors and no factors")
    if structure is None:
        structure = FactorStructure(ds.factors, w, ds.n_levels)
    yt, sweeps_y = structure.transform(y, tol=tol, max_sweeps=max_sweeps)
    if transformed_X is None:
        Xt, sweeps_x = structure.transform(ds.X[:, active], tol=tol, max_sweeps=max_sweeps)
    else:
        Xt, sweeps_x = transformed_X, 0
    coef_a, dropped_a = solve_partialled(yt, Xt, w, rank_tol)
    if active.size and np.all(dropped_a) and ds.n_factors == 0:
        raise EmptyModelError("empty model: every regressor was dropped as collinear")
    resid = yt - Xt @ coef_a
    coef = np.zeros(ds.n_dense)
    coef[active] = coef_a
    dropped = np.zeros(ds.n_dense, dtype=bool)
    dropped[active] = dropped_a
    centered = ds.has_intercept
    r2, ssr = _r2(y, resid, w, centered)
    return WlsSolution(coefficients=coef, fitted=y - resid, residuals=resid, converged=True,
                       projection_iterations=max(sweeps_y, sweeps_x), dropped=dropped, r2=r2, ssr=ssr)


def recover_fixed_effects(fe_part, factors, weights=None, n_levels=None, tol=1e-12, max_sweeps=100_000):
    """Back out per-level effects from the fixed-effect component of a fit.

    ``fe_part`` is ``sum_q alpha_q[level_q(i)]`` on each row.  Solves the
    weighted least squares problem by backfitting; levels without rows keep 0.
    The result is one array per factor and is unique only up to the usual
    normalization (see :func:`normalize_fixed_effects`).
    """
    f = np.asarray(fe_part, dtype=float)
    n = f.size
    factors = np.asarray(factors, dtype=np.int64).reshape(n, -1)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    struct = FactorStructure(factors, w, n_levels)
    alphas = [np.zeros(s.size) for s in struct.level_weight]
    if struct.n_factors == 0:
        return alphas
    r = f.copy()
    scale = max(float(np.max(np.abs(f))), 1.0) if n else 1.0
    for sweep in range(max_sweeps):
        change = 0.0
        for q in range(struct.n_factors):
            means = struct.level_means(q, r)[:-1]
            alphas[q] += means
            r -= np.append(means, 0.0)[struct.ids[q]]
            change = max(change, float(np.max(np.abs(means))) if means.size else 0.0)
        if change < tol * scale or struct.n_factors == 1:
            return alphas
    raise ConvergenceError(f"fixed-effect recovery did not converge after {max_sweeps} sweeps", last_delta=change)


def normalize_fixed_effects(alphas, factors):
    """Set one reference level per connected component to zero.

    For each factor ``q >= 1`` and each connected component of the bipartite
    graph linking its levels with the first factor's levels, the lowest-id
    level of factor ``q`` is shifted to 0 and the shift is added to the first
    factor's levels of that component.  Fitted values are unchanged.
    """
    alphas = [np.array(a, dtype=float) for a in alphas]
    factors = np.asarray(factors, dtype=np.int64)
    if len(alphas) < 2 or np.any(factors < 0):
        return alphas
    L0 = alphas[0].size
    for q in range(1, len(alphas)):
        Lq = alphas[q].size
        graph = sp.coo_matrix((np.ones(factors.shape[0]), (factors[:, 0], L0 + factors[:, q])),
                              shape=(L0 + Lq, L0 + Lq))
        _, comp = connected_components(graph, directed=False)
        comp0, compq = comp[:L0], comp[L0:]
        for c in np.unique(compq):
            members = np.flatnonzero(compq == c)
            shift = alphas[q][members[0]]
            alphas[q][members] -= shift
            alphas[0][comp0 == c] += shift
    return alphas


# explicit dummies are cheaper and exact below this many design cells
_DENSE_DUMMY_CELLS = 400_000


class WeightedProjector:
    """Residual maker for a fixed design and fixed weights.

    The dense columns are within-transformed and factorized once, so each
    call to :meth:`fit` costs one within-transformation of the regressand
    plus a small triangular solve.  Small problems use explicit dummies.

    Parameters
    ----------
    ds : Dataset
        Supplies dense columns and factors (its weights are ignored).
    weights : ndarray, shape (n,)
        Regression weights.
    columns : sequence of int, optional
        Dense columns to include; all by default.
    """

    def __init__(self, ds, weights, columns=None, *, tol=1e-10, max_sweeps=100_000,
                 rank_tol=RANK_TOL, dense_dummies=None):
        self.ds = ds
        self.weights = np.asarray(weights, dtype=float)
        self.columns = np.arange(ds.n_dense) if columns is None else np.asarray(columns, dtype=np.int64)
        self.tol = tol
        self.max_sweeps = max_sweeps
        n = ds.n_obs
        n_lev = sum(ds.n_levels)
        if dense_dummies is None:
            dense_dummies = ds.n_factors > 0 and n * (self.columns.size + n_lev) <= _DENSE_DUMMY_CELLS
        self.dense_dummies = bool(dense_dummies) or ds.n_factors == 0
        if self.dense_dummies:
            self.structure = None
            A = np.column_stack([ds.X[:, self.columns], ds.dummies()]) if ds.n_factors else ds.X[:, self.columns]
            self.n_dense_active = self.columns.size
        else:
            self.structure = FactorStructure(ds.factors, self.weights, ds.n_levels)
            A, self.sweeps_X = self.structure.transform(ds.X[:, self.columns], tol=tol, max_sweeps=max_sweeps)
            self.n_dense_active = self.columns.size
        self.design = A
        sw = np.sqrt(self.weights)
        self._sw = sw
        B = A * sw[:, None]
        norms = np.linalg.norm(B, axis=0)
        idx = np.flatnonzero(norms > 0)
        self._norms = norms
        self.rank = 0
        self.kept = np.zeros(A.shape[1], dtype=bool)
        if idx.size:
            Q, R, piv = scipy.linalg.qr(B[:, idx] / norms[idx], mode="economic", pivoting=True)
            diag = np.abs(np.diag(R))
            self.rank = int(np.sum(diag >= rank_tol * diag[0])) if diag[0] > 0 else 0
            self._Q = Q[:, :self.rank]
            self._R = R[:self.rank, :self.rank]
            self._cols = idx[piv[:self.rank]]
            self.kept[self._cols] = True

    @property
    def dropped(self):
        """Flags over the active dense columns removed as collinear."""
        return ~self.kept[:self.n_dense_active]

    def fit(self, v):
        """Regress ``v``; returns ``(coef, residuals, sweeps)``.

        ``coef`` spans the projector's design (active dense columns, then
        dummies when explicit) with zeros on dropped columns.
        """
        v = np.asarray(v, dtype=float)
        sweeps = 0
        if self.structure is not None:
            vt, sweeps = self.structure.transform(v, tol=self.tol, max_sweeps=self.max_sweeps)
        else:
            vt = v
        coef = np.zeros(self.design.shape[1])
        if self.rank:
            sol = scipy.linalg.solve_triangular(self._R, self._Q.T @ (vt * self._sw))
            coef[self._cols] = sol / self._norms[self._cols]
            resid = vt - self.design[:, self._cols] @ coef[self._cols]
        else:
            resid = vt.copy()
        return coef, resid, sweeps

    def dense_coefficients(self, coef):
        """Coefficients over all dense columns of the dataset."""
        out = np.zeros(self.ds.n_dense)
        out[self.columns] = coef[:self.n_dense_active]
        return out

    def factor_effects(self, v, coef, resid):
        """Per-factor level effects for the fit of ``v`` (explicit or recovered)."""
        ds = self.ds
        if self.dense_dummies and ds.n_factors:
            out, start = [], self.n_dense_active
            for L in ds.n_levels:
                out.append(coef[start:start + L].copy())
                start += L
            return out
        fe_part = np.asarray(v, dtype=float) - resid - ds.X[:, self.columns] @ coef[:self.n_dense_active]
        return recover_fixed_effects(fe_part, ds.factors, self.weights, ds.n_levels)
