"""Bounded-variable primal simplex with Bland's rule.

Solves ``max c'x`` subject to ``A x (<= or =) 0`` and ``lo <= x <= hi`` with
``lo <= 0 <= hi``, so the origin is a feasible starting vertex and no phase
one is needed.  Every LP in the separation checks has this homogeneous form.
Arithmetic is either float (with tolerances) or exact ``Fraction``.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .exceptions import CyclingError

__all__ = ["LPResult", "solve_homogeneous_lp", "LE", "EQ"]

LE = "le"
EQ = "eq"


@dataclass
class LPResult:
    x: np.ndarray
    objective: object
    pivots: int
    exact: bool


def _to_fraction(a):
    a = np.asarray(a, dtype=object)
    out = np.empty(a.shape, dtype=object)
    flat = out.reshape(-1)
    for k, v in enumerate(a.reshape(-1)):
        flat[k] = v if isinstance(v, Fraction) else Fraction(v)
    return out


def solve_homogeneous_lp(c, A, senses, lo, hi, *, exact=False, tol=1e-9, max_pivots=None) -> LPResult:
    """Maximize ``c'x`` over ``{A x <= 0 (or = 0), lo <= x <= hi}``.

    Parameters
    ----------
    c : array_like, shape (n,)
    A : array_like, shape (m, n)
    senses : sequence of {"le", "eq"}, length m
    lo, hi : array_like, shape (n,)
        Finite bounds with ``lo <= 0 <= hi``.
    exact : bool
        Use ``Fraction`` arithmetic; ``tol`` is then ignored.
    max_pivots : int, optional
        Cycling guard, default ``50 * (m + n) + 1000``.

    Raises
    ------
    CyclingError
        If the pivot cap is reached.
    """
    if exact:
        A = _to_fraction(A)
        c = _to_fraction(c)
        lo = _to_fraction(lo)
        hi = _to_fraction(hi)
        zero = Fraction(0)
        tol = zero
    else:
        A = np.asarray(A, dtype=float)
        c = np.asarray(c, dtype=float)
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        zero = 0.0
    m, n = A.shape
    if np.any(lo > 0) or np.any(hi < 0):
        raise ValueError("bounds must contain 0")
    if max_pivots is None:
        max_pivots = 50 * (m + n) + 1000
    N = n + m
    # columns: structural 0..n-1, then one slack per row (A x + s = 0)
    T = np.empty((m, N), dtype=object if exact else float)
    T[:, :n] = A
    T[:, n:] = 0
    for i in range(m):
        T[i, n + i] = 1
    if exact:
        T[:, n:] = np.where(T[:, n:] == 1, Fraction(1), Fraction(0))
    inf = float("inf")
    lo_all = np.empty(N, dtype=object if exact else float)
    hi_all = np.empty(N, dtype=object if exact else float)
    lo_all[:n], hi_all[:n] = lo, hi
    for i, s in enumerate(senses):
        lo_all[n + i] = zero
        hi_all[n + i] = zero if s == EQ else inf
    cost = np.empty(N, dtype=object if exact else float)
    cost[:n] = c
    cost[n:] = zero
    # objective row holds reduced costs d_j = c_j - c_B' T[:, j]
    d = cost.copy()
    basis = list(range(n, N))
    is_basic = np.zeros(N, dtype=bool)
    is_basic[n:] = True
    value = np.empty(N, dtype=object if exact else float)
    value[:] = zero
    pivots = 0
    while True:
        entering, direction = -1, 0
        for j in range(N):
            if is_basic[j]:
                continue
            if d[j] > tol and value[j] < hi_all[j]:
                entering, direction = j, 1
                break
            if d[j] < -tol and value[j] > lo_all[j]:
                entering, direction = j, -1
                break
        if entering < 0:
            break
        col = T[:, entering]
        # largest step before the entering variable or a basic one hits a bound
        step = hi_all[entering] - value[entering] if direction > 0 else value[entering] - lo_all[entering]
        leave_row, leave_to = -1, None
        for i in range(m):
            a = col[i] * direction
            if exact:
                if a == 0:
                    continue
            elif abs(a) <= tol:
                continue
            bv = basis[i]
            if a > 0:
                room = value[bv] - lo_all[bv]
                bound = lo_all[bv]
            else:
                if hi_all[bv] == inf:
                    continue
                room = hi_all[bv] - value[bv]
                bound = hi_all[bv]
            if not exact and room < 0:
                room = 0.0
            ratio = room / abs(a)
            if ratio < step or (ratio == step and leave_row >= 0 and bv < basis[leave_row]):
                step, leave_row, leave_to = ratio, i, bound
        if step == inf:
            raise ValueError("LP is unbounded")
        pivots += 1
        if pivots > max_pivots:
            raise CyclingError(f"simplex pivot cap {max_pivots} reached")
        # move along the edge
        delta = step * direction
        value[entering] = value[entering] + delta
        for i in range(m):
            if col[i] != 0:
                value[basis[i]] = value[basis[i]] - col[i] * delta
        if leave_row < 0:
            # bound flip, basis unchanged
            value[entering] = hi_all[entering] if direction > 0 else lo_all[entering]
            continue
        r = leave_row
        leaving = basis[r]
        value[leaving] = leave_to
        piv = T[r, entering]
        T[r] = T[r] / piv
        others = np.flatnonzero(T[:, entering] != 0)
        others = others[others != r]
        if others.size:
            T[others] = T[others] - np.outer(T[others, entering], T[r])
        d = d - d[entering] * T[r]
        if not exact:
            T[r, entering] = 1.0
            T[others, entering] = 0.0
            d[entering] = 0.0
        basis[r] = entering
        is_basic[leaving] = False
        is_basic[entering] = True
        if not exact:
            # recompute basics from the nonbasics to stop drift
            nb = np.flatnonzero(~is_basic)
            value[basis] = -(T[:, nb] @ value[nb])
    x = value[:n].copy()
    objective = sum((c[j] * x[j] for j in range(n)), zero)
    if not exact:
        x = np.clip(x.astype(float), lo, hi)
        objective = float(c @ x)
    return LPResult(x=x, objective=objective, pivots=pivots, exact=exact)
