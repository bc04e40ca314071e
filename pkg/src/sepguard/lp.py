"""Linear-programming separation checks and existence conditions.

* :func:`lp_detect` finds the maximal separated set with a dense simplex on
  the full design (dense columns plus every level dummy).
* :func:`reduced_lp_detect` first partials the factors out of each dense
  column over the interior rows and searches only the span of the columns
  that become exactly zero there.  It cannot see separation that involves
  factor levels alone.
* :func:`gamma_existence_check` and :func:`invgauss_existence_check` test
  the existence conditions for Gamma and Inverse Gaussian PML.

Strict inequalities are handled with bounded auxiliaries ``t_i in [0, 1]``
(``z_i + t_i <= 0``) and the coefficient vector is boxed to ``[-1, 1]``;
``t_i > tol`` counts as strict.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.linalg

from .dataset import BoundaryPartition, Dataset, boundary_partition
from .exceptions import DimensionError
from .families import GAMMA_PML, INVGAUSS_PML, ModelFamily
from .hdfe import WeightedProjector
from .report import Certificate, SeparationReport
from .simplex import EQ, LE, solve_homogeneous_lp

__all__ = [
    "ExistenceVerdict",
    "interior_rank_check",
    "lp_detect",
    "reduced_lp_detect",
    "gamma_existence_check",
    "invgauss_existence_check",
    "MAX_COLUMNS",
    "MAX_ROWS",
    "MAX_BOUNDARY",
]

MAX_COLUMNS = 200
MAX_ROWS = 100_000
# the tableau is dense in the boundary rows
MAX_BOUNDARY = 2_000
STRICT_TOL = 1e-9


@dataclass
class ExistenceVerdict:
    """Whether finite (PML) estimates exist, and why.

    ``reason`` is one of ``no_certificate``, ``separated_prop1``,
    ``gamma_sum_negative``, ``gamma_sum_zero_strict``,
    ``invgauss_negative_on_zero`` or ``nonunique_solution``.  ``witness`` is
    set whenever ``exists`` is false or the solution is non-unique.
    """

    exists: bool
    reason: str
    witness: Certificate | None = None

    def __post_init__(self):
        if not self.exists and self.witness is None:
            raise ValueError("a non-existence verdict needs a witness")


# exact helpers --------------------------------------------------------------

def _fractions(a):
    a = np.asarray(a)
    out = np.empty(a.shape, dtype=object)
    out.reshape(-1)[:] = [v if isinstance(v, Fraction) else Fraction(float(v)) for v in a.reshape(-1)]
    return out


def exact_nullspace(A):
    """Basis of ``{x : A x = 0}`` in exact rational arithmetic (columns)."""
    F = _fractions(A)
    m, n = F.shape
    A = [list(row) for row in F]
    pivots = []
    r = 0
    for c in range(n):
        p = next((i for i in range(r, m) if A[i][c] != 0), None)
        if p is None:
            continue
        A[r], A[p] = A[p], A[r]
        inv = 1 / A[r][c]
        A[r] = [v * inv for v in A[r]]
        for i in range(m):
            if i != r and A[i][c] != 0:
                f = A[i][c]
                A[i] = [a - f * b for a, b in zip(A[i], A[r])]
        pivots.append(c)
        r += 1
        if r == m:
            break
    free = [c for c in range(n) if c not in pivots]
    basis = np.empty((n, len(free)), dtype=object)
    basis[:] = Fraction(0)
    for k, f in enumerate(free):
        basis[f, k] = Fraction(1)
        for i, c in enumerate(pivots):
            basis[c, k] = -A[i][f]
    return basis


def _float_nullspace(A, rcond=1e-10):
    A = np.asarray(A, dtype=float)
    if A.shape[0] == 0:
        return np.eye(A.shape[1])
    return scipy.linalg.null_space(A, rcond=rcond)


# design and caps -------------------------------------------------------------

def _design(ds: Dataset, exact: bool):
    n, M = ds.n_obs, ds.n_columns
    if M > MAX_COLUMNS or n > MAX_ROWS:
        raise DimensionError(
            f"LP oracle is capped at {MAX_COLUMNS} columns and {MAX_ROWS} rows "
            f"(got {M} columns incl. level dummies, {n} rows); use the rectifier instead")
    D = ds.design_matrix()
    return _fractions(D) if exact else D


def _check_boundary(nb):
    if nb > MAX_BOUNDARY:
        raise DimensionError(
            f"LP oracle is capped at {MAX_BOUNDARY} boundary rows (got {nb}); use the rectifier instead")


def _split_gamma(ds, gamma):
    g = np.asarray(gamma, dtype=float)
    out, start = [], ds.n_dense
    for L in ds.n_levels:
        out.append(g[start:start + L])
        start += L
    return {"dense": g[:ds.n_dense], "factors": out}


# separation LP --------------------------------------------------------------

def _maximal_separation(B, E, exact, tol):
    """Rows ``i`` of ``B`` for which some ``g`` has ``B g <= 0``, ``E g = 0``
    and ``(B g)_i < 0``.  Returns ``(mask, summed g, lp_solves)``."""
    nb, k = B.shape
    sep = np.zeros(nb, dtype=bool)
    zero = Fraction(0) if exact else 0.0
    total = np.empty(k, dtype=object) if exact else np.zeros(k)
    if exact:
        total[:] = zero
    solves = 0
    while not np.all(sep):
        targets = np.flatnonzero(~sep)
        nt = targets.size
        one = Fraction(1) if exact else 1.0
        T = np.zeros((nb, nt), dtype=object if exact else float)
        if exact:
            T[:] = zero
        T[targets, np.arange(nt)] = one
        A = np.hstack([B, T])
        senses = [LE] * nb
        if E.shape[0]:
            A = np.vstack([A, np.hstack([E, np.zeros((E.shape[0], nt), dtype=A.dtype) if not exact
                                         else np.full((E.shape[0], nt), zero, dtype=object)])])
            senses += [EQ] * E.shape[0]
        c = [0] * k + [1] * nt
        lo = [-1] * k + [0] * nt
        hi = [1] * (k + nt)
        res = solve_homogeneous_lp(c, A, senses, lo, hi, exact=exact, tol=tol if not exact else 0)
        solves += 1
        t = res.x[k:]
        new = np.zeros(nb, dtype=bool)
        new[targets] = np.array([v > (0 if exact else tol) for v in t], dtype=bool)
        if not np.any(new):
            break
        g = res.x[:k]
        total = total + g
        sep |= new
    return sep, total, solves


def lp_detect(ds: Dataset, family: ModelFamily, *, exact: bool = False, tol: float = STRICT_TOL,
              reduce_equalities: bool | None = None) -> SeparationReport:
    """Maximal separated set by repeated LP solves on the full design.

    Each solve maximizes the number of newly strict rows (through ``t``);
    rows found strict are removed from the targets and the LP is re-solved
    until no new row appears.  The summed directions give the overall
    certificate.

    Parameters
    ----------
    exact : bool
        Rational arithmetic (meant for small instances).
    reduce_equalities : bool, optional
        Replace the interior equalities by a null-space parametrization;
        defaults to true in float mode when the interior is large.

    Raises
    ------
    DimensionError
        Above the size caps.
    """
    part = boundary_partition(ds, family)
    n = ds.n_obs
    if part.n_boundary == 0:
        return SeparationReport(n_obs=n, separated=[], method="lp", iterations=0)
    D = _design(ds, exact)
    _check_boundary(part.n_boundary)
    rows = np.concatenate([part.at_zero, part.at_upper])
    sign = np.concatenate([np.ones(part.at_zero.size), -np.ones(part.at_upper.size)])
    B = D[rows] * (_fractions(sign)[:, None] if exact else sign[:, None])
    E = D[part.interior]
    basis = None
    if reduce_equalities is None:
        reduce_equalities = not exact and E.shape[0] > D.shape[1]
    if reduce_equalities and not exact:
        basis = _float_nullspace(E)
        if basis.shape[1] == 0:
            return SeparationReport(n_obs=n, separated=[], method="lp", iterations=0,
                                    diagnostics={"interior_nullity": 0})
        B = B @ basis
        E = np.zeros((0, basis.shape[1]))
    sep, g, solves = _maximal_separation(B, E, exact, tol)
    if basis is not None:
        g = basis @ g
    if exact:
        z = np.array([float(v) for v in D.dot(g)]) if np.any(sep) else np.zeros(n)
        g = np.array([float(v) for v in g])
    else:
        z = D @ g
    separated = rows[sep]
    cert = None
    if separated.size:
        clean = np.zeros(n)
        clean[separated] = z[separated]
        cert = Certificate(z=clean, gamma=_split_gamma(ds, g))
    return SeparationReport(n_obs=n, separated=separated, certificate=cert, method="lp",
                            iterations=solves, diagnostics={"exact": exact})


def interior_rank_check(ds: Dataset, part: BoundaryPartition, *, rcond: float = 1e-10) -> np.ndarray:
    """Basis (columns) of ``{g : x_i g = 0 for every interior row}``.

    Columns follow :meth:`Dataset.design_names`.  An empty basis rules out
    separation; with no interior rows the whole column space is returned.
    """
    D = ds.design_matrix()
    if part.interior.size == 0:
        return np.eye(D.shape[1])
    return _float_nullspace(D[part.interior], rcond)


def _interior_fe_effects(ds, interior, others, p):
    """Residual of dense column ``p`` on the others and the factors, fitted
    over ``interior`` and extended to every row (levels unseen in the
    interior get effect 0)."""
    sub = ds.subset(interior)
    proj = WeightedProjector(sub, np.ones(sub.n_obs), columns=others)
    v = sub.X[:, p]
    coef, resid_int, _ = proj.fit(v)
    dense = proj.dense_coefficients(coef)
    fitted = ds.X @ dense
    if ds.n_factors:
        effects = proj.factor_effects(v, coef, resid_int)
        for q in range(ds.n_factors):
            # map original level ids to the subset's ids
            lookup = np.full(ds.n_levels[q] + 1, -1, dtype=np.int64)
            orig = ds.factors[interior, q]
            ok = orig >= 0
            lookup[orig[ok]] = sub.factors[ok, q]
            ids = lookup[np.where(ds.factors[:, q] >= 0, ds.factors[:, q], ds.n_levels[q])]
            alpha = np.append(effects[q], 0.0)
            fitted = fitted + alpha[np.where(ids >= 0, ids, effects[q].size)]
    return ds.X[:, p] - fitted, resid_int


def reduced_lp_detect(ds: Dataset, family: ModelFamily, *, tol: float = STRICT_TOL,
                      candidate_tol: float = 1e-8) -> SeparationReport:
    """Separation search restricted to partialled dense columns.

    Each dense column is regressed on the other dense columns and all
    factors over the interior rows.  Columns whose interior residual is
    zero (``max|r| < candidate_tol * scale``) are candidates, and the LP runs
    over combinations of their full-sample residuals with constraints only
    on boundary rows.  Separation driven by factor levels alone is invisible
    to this method.
    """
    part = boundary_partition(ds, family)
    n = ds.n_obs
    empty = SeparationReport(n_obs=n, separated=[], method="reduced_lp", iterations=0,
                             diagnostics={"candidates": []})
    if part.n_boundary == 0 or ds.n_dense == 0:
        return empty
    _check_boundary(part.n_boundary)
    R, names = [], []
    for p in range(ds.n_dense):
        scale = float(np.max(np.abs(ds.X[:, p])))
        if scale == 0:
            continue
        others = [j for j in range(ds.n_dense) if j != p]
        if part.interior.size:
            r, r_int = _interior_fe_effects(ds, part.interior, others, p)
            if np.max(np.abs(r_int)) >= candidate_tol * scale:
                continue
        else:
            r = ds.X[:, p].astype(float)
        R.append(r)
        names.append(ds.column_names[p])
    if not R:
        return empty
    R = np.column_stack(R)
    rows = np.concatenate([part.at_zero, part.at_upper])
    sign = np.concatenate([np.ones(part.at_zero.size), -np.ones(part.at_upper.size)])
    B = R[rows] * sign[:, None]
    sep, phi, solves = _maximal_separation(B, np.zeros((0, R.shape[1])), False, tol)
    separated = rows[sep]
    cert = None
    if separated.size:
        z = np.zeros(n)
        z[separated] = (R @ phi)[separated]
        cert = Certificate(z=z)
    return SeparationReport(n_obs=n, separated=separated, certificate=cert, method="reduced_lp",
                            iterations=solves, diagnostics={"candidates": names, "phi": phi.tolist()})


# Gamma / Inverse Gaussian ----------------------------------------------------

def _as_float(v):
    return np.array([float(x) for x in np.asarray(v).reshape(-1)])


def _witness(ds, D, g, exact):
    z = D.dot(g)
    z = _as_float(z) if exact else np.asarray(z, dtype=float)
    if not exact:
        z[np.abs(z) < STRICT_TOL * max(float(np.max(np.abs(z))), 1.0)] = 0.0
    return Certificate(z=z, gamma=_split_gamma(ds, _as_float(g) if exact else g))


def gamma_existence_check(ds: Dataset, *, exact: bool = False, tol: float = STRICT_TOL) -> ExistenceVerdict:
    """Existence of Gamma PML estimates.

    Estimates fail to exist iff some ``z = X g`` has ``z >= 0`` on ``y > 0``
    and either ``sum(z) < 0``, or ``sum(z) = 0`` with ``z > 0`` somewhere on
    ``y > 0``.  If neither holds but some ``z`` vanishes on ``y > 0``, has
    ``sum(z) = 0`` and is nonzero on a zero row, the solution exists but is
    not unique.
    """
    D = _design(ds, exact)
    pos = np.flatnonzero(ds.y > 0)
    zero_rows = np.flatnonzero(ds.y == 0)
    k = D.shape[1]
    s = D.sum(axis=0)
    strict = 0 if exact else tol
    # 1. minimize sum(z) over the cone z >= 0 on y > 0
    Apos = -D[pos]
    res = solve_homogeneous_lp(-s, Apos, [LE] * pos.size, [-1] * k, [1] * k, exact=exact, tol=tol)
    scale = 1.0 if exact else max(1.0, float(np.max(np.abs(s))))
    if res.objective > strict * scale:
        return ExistenceVerdict(False, "gamma_sum_negative", _witness(ds, D, res.x, exact))
    # 2. sum(z) = 0 with a strict positive on y > 0
    if pos.size:
        npos = pos.size
        eye = np.eye(npos, dtype=float)
        if exact:
            eye = _fractions(eye)
        A = np.vstack([
            np.hstack([Apos, eye]),
            np.hstack([s[None, :], _fractions(np.zeros((1, npos))) if exact else np.zeros((1, npos))]),
        ])
        res = solve_homogeneous_lp([0] * k + [1] * npos, A, [LE] * npos + [EQ], [-1] * k + [0] * npos,
                                   [1] * (k + npos), exact=exact, tol=tol)
        if res.objective > strict:
            return ExistenceVerdict(False, "gamma_sum_zero_strict", _witness(ds, D, res.x[:k], exact))
    # 3. non-uniqueness: a direction flat on y > 0 and in sum, moving a zero row
    if zero_rows.size:
        C = np.vstack([D[pos], s[None, :]])
        N = exact_nullspace(C) if exact else _float_nullspace(C)
        for j in range(N.shape[1]):
            v = N[:, j]
            zz = D[zero_rows].dot(v)
            moved = any(x != 0 for x in zz) if exact else np.max(np.abs(zz)) > tol * max(1.0, np.max(np.abs(v)))
            if moved:
                return ExistenceVerdict(True, "nonunique_solution", _witness(ds, D, v, exact))
    return ExistenceVerdict(True, "no_certificate")


def invgauss_existence_check(ds: Dataset, *, exact: bool = False, tol: float = STRICT_TOL) -> ExistenceVerdict:
    """Existence of Inverse Gaussian PML estimates.

    Estimates fail to exist iff some ``z = X g`` has ``z >= 0`` on ``y > 0``
    and ``z < 0`` on at least one row with ``y = 0``.  One LP per zero row
    minimizes that row's ``z`` over the cone (after a cheaper aggregated
    attempt).
    """
    zero_rows = np.flatnonzero(ds.y == 0)
    if zero_rows.size == 0:
        return ExistenceVerdict(True, "no_certificate")
    D = _design(ds, exact)
    pos = np.flatnonzero(ds.y > 0)
    k = D.shape[1]
    Apos = -D[pos]
    strict = 0 if exact else tol
    lo, hi = [-1] * k, [1] * k
    objectives = [D[zero_rows].sum(axis=0)] + [D[j] for j in zero_rows]
    for obj in objectives:
        res = solve_homogeneous_lp(-obj, Apos, [LE] * pos.size, lo, hi, exact=exact, tol=tol)
        if res.objective > strict:
            w = _witness(ds, D, res.x, exact)
            if np.any(w.z[zero_rows] < 0):
                return ExistenceVerdict(False, "invgauss_negative_on_zero", w)
    return ExistenceVerdict(True, "no_certificate")


def existence_check(ds: Dataset, family: ModelFamily, **kwargs) -> ExistenceVerdict:
    """Dispatch to the Gamma or Inverse Gaussian check."""
    if family == GAMMA_PML:
        return gamma_existence_check(ds, **kwargs)
    if family == INVGAUSS_PML:
        return invgauss_existence_check(ds, **kwargs)
    raise ValueError(f"no PML existence check for {family.name}")
