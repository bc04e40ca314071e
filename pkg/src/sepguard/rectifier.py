"""Iterative rectifier: separation detection by repeated weighted least squares.

The working regressand ``u`` starts at -1 on rows with ``y = 0`` and 0
elsewhere.  Rows with ``y > 0`` get a weight ``K`` large enough that their
residuals stay below ``epsilon``.  Each pass regresses ``u`` on the full
design (dense columns and factors), snaps tiny predictions to zero and
replaces ``u`` on the zero rows by ``min(u_hat, 0)``.  At convergence
``u_hat`` is a certificate of separation: it vanishes on rows with positive
outcomes, is non-positive on the zeros and is negative exactly on the
separated rows.

The plain iteration can crawl when the column space meets the negative
orthant at a small angle.  Three safeguards keep it fast without changing
the answer: an early exit once ``max|u|`` drops below a bound that any
certificate enforces, extrapolated jumps along block displacements, and
jumps onto a certificate of the current active face.  A stop is only
accepted after a confirming projection, and the run is repeated on the
rows not yet separated until nothing new turns up.
"""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .dataset import Dataset, boundary_partition
from .exceptions import UnboundedLikelihoodError
from .families import POISSON, ModelFamily
from .hdfe import WeightedProjector
from .logit_poisson import map_report_back, to_poisson_equivalent
from .report import Certificate, RectifierHistory, SeparationReport

__all__ = ["detect", "choose_K", "verify_certificate", "EPSILON_FLOOR", "K_MAX"]

EPSILON_FLOOR = 1e-14
K_MAX = 2**62


def choose_K(u, epsilon) -> int:
    """Smallest integer strictly greater than ``u'u / epsilon**2``.

    Computed in exact rational arithmetic, with ``epsilon`` read as the
    decimal it prints as, so ``u'u = 4, epsilon = 0.1`` gives 401.

    Raises
    ------
    ValueError
        If ``epsilon <= 0``.
    OverflowError
        If ``K`` exceeds ``K_MAX``; use a larger ``epsilon``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    u = np.asarray(u, dtype=float).ravel()
    uu = sum((Fraction(float(v)) ** 2 for v in u[u != 0]), Fraction(0))
    eps = Fraction(repr(float(epsilon)))
    K = math.floor(uu / (eps * eps)) + 1
    if K > K_MAX:
        raise OverflowError(f"K = {K:.3e} is too large for stable weighting; use a larger epsilon")
    return int(K)


_BLOCK = 10


def _face_projection(u, active, eps, projector):
    """Project ``u`` (scaled to max 1) onto fitted directions vanishing off ``active``.

    Returns ``(w, v, proj, coef, resid)`` with ``w`` the scaled input and
    ``v`` the snapped fitted values.
    """
    w = np.where(active, u, 0.0)
    w = w / np.max(np.abs(w))
    proj = projector(np.where(active, 1.0, float(choose_K(w, eps))))
    coef, resid, _ = proj.fit(w)
    v = w - resid
    v[np.abs(v) < eps] = 0.0
    return w, v, proj, coef, resid


def _cosine(a, b):
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b) / (na * nb)


def _uncentered_r2(u, e):
    tss = float(u @ u)
    return 1.0 if tss == 0 else 1.0 - float(e @ e) / tss


def detect(ds: Dataset, family: ModelFamily = POISSON, *, epsilon: float = 1e-5,
           max_iter: int = 10_000, with_gamma: bool = False, adaptive: bool = False,
           tol: float = 1e-10, dense_dummies=None) -> SeparationReport:
    """Find every separated observation with the iterative rectifier.

    Parameters
    ----------
    ds : Dataset
        Observation weights are ignored: separation depends only on which
        outcomes sit on the boundary and on the column space.
    family : ModelFamily
        Must have a bounded likelihood.  Binary and fractional families are
        handled through their Poisson-equivalent representation.
    epsilon : float
        Snap-to-zero threshold and residual tolerance (floor 1e-14).
    max_iter : int
        Iteration cap; hitting it gives ``converged=False`` and carries the
        last prediction as the certificate.
    with_gamma : bool
        Also recover the separating coefficients (dense and per level).
    adaptive : bool
        Shrink ``epsilon`` tenfold per iteration (down to the floor) and
        recompute ``K`` from the current ``u``.

    Returns
    -------
    SeparationReport
    """
    if not family.likelihood_bounded:
        raise UnboundedLikelihoodError(
            f"{family.name} has an unbounded likelihood; use the existence checks instead")
    if not epsilon >= EPSILON_FLOOR:
        raise ValueError(f"epsilon must be at least {EPSILON_FLOOR:g}")
    if family.bounded:
        eq = to_poisson_equivalent(ds)
        rep = _rectify(eq.dataset, epsilon, max_iter, with_gamma, adaptive, tol, dense_dummies)
        return map_report_back(rep, eq)
    return _rectify(ds, epsilon, max_iter, with_gamma, adaptive, tol, dense_dummies)


def _rectify_pass(ds, epsilon, max_iter, with_gamma, adaptive, tol, dense_dummies, face=True):
    """One rectifier run; returns ``(report, gamma)`` with ``gamma`` a thunk."""
    zero = ds.y == 0
    n = ds.n_obs
    history = RectifierHistory(n_zero=int(zero.sum()), epsilon=epsilon)
    if not np.any(zero):
        history.converged = True
        return SeparationReport(n_obs=n, separated=[], certificate=None, iterations=0,
                                converged=True, epsilon=epsilon, K=1, history=history), None
    u = -zero.astype(float)
    K = choose_K(u, epsilon)
    eps = epsilon

    def projector(weights):
        return WeightedProjector(ds, weights, tol=tol, dense_dummies=dense_dummies)

    omega = np.where(zero, 1.0, float(K))
    proj = projector(omega)
    converged = False
    uhat = u
    it = 0
    confirmations = 0
    early_stop = False
    fit_proj, fit_u = proj, u
    # For any certificate z*, <T(u) - u, z*> >= 0 where T is one rectifier
    # step: the projection fixes z* and clamping can only help.  Hence
    # <u, z*> >= (1 - snap losses) * sum|z*| throughout, so max|u| stays
    # near 1 while separation exists.  The same holds for u + t (T^m(u) - u)
    # with any t >= 0, which licenses extrapolated jumps.
    snap_loss = 0.0
    anchor = u
    prev_disp = None
    jumps = 0
    face_jumps = 0
    bound_valid = True
    block_active = None
    for it in range(1, max_iter + 1):
        if bound_valid and snap_loss < 1.0 and np.max(np.abs(u)) < 1.0 - snap_loss - 1e-8:
            u = np.zeros(n)
            early_stop = True
        if not np.any(u):
            e = np.zeros(n)
            coef = np.zeros(proj.design.shape[1])
        else:
            coef, e, _ = proj.fit(u)
        uhat = u - e
        fit_proj, fit_u, fit_coef, fit_e = proj, u, coef, e
        history.ssr.append(float(np.sum(omega * e * e)))
        history.r2.append(_uncentered_r2(u, e))
        history.max_abs_resid.append(float(np.max(np.abs(e))))
        history.u_max.append(float(np.max(u)))
        snapped = np.where(np.abs(uhat) < eps, 0.0, uhat)
        if np.all(snapped <= 0) and history.max_abs_resid[-1] < eps:
            if not np.any(snapped):
                if np.any(u):
                    # settle on u = 0 with one more step so the final record is exact
                    u = np.zeros(n)
                    continue
                uhat = snapped
                converged = True
                break
            # A slowly shrinking iterate also has small residuals.  Project
            # onto directions vanishing off the active set: a true fixed
            # point survives, a decaying one collapses towards zero.
            active = snapped < 0
            w, v, cproj, ccoef, ce = _face_projection(snapped, active, eps, projector)
            confirmations += 1
            if np.all(v <= 0) and np.array_equal(v < 0, active):
                uhat = v
                fit_proj, fit_u, fit_coef, fit_e = cproj, w, ccoef, ce
                converged = True
                break
        nxt = np.where(zero, np.minimum(uhat, 0.0), 0.0)
        if it % _BLOCK == 0:
            active = nxt < 0
            if face and np.any(active) and np.array_equal(active, block_active):
                # Jump straight to a certificate on the current face if one
                # exists.  It may not be maximal; later passes take care of that.
                _, v, _, _, _ = _face_projection(nxt, active, eps, projector)
                if np.all(v <= 0) and np.any(v < 0):
                    nxt = v
                    bound_valid = False
                    face_jumps += 1
            block_active = active
            # Aitken-style jump along the displacement of the last block,
            # assuming later blocks shrink geometrically.  Accepted only if
            # the iterate does not grow, which keeps sum SSR <= u0'u0.
            disp = nxt - anchor
            if face_jumps == 0 and prev_disp is not None and _cosine(disp, prev_disp) > 0.99:
                r = np.linalg.norm(disp) / np.linalg.norm(prev_disp)
                if r < 1.0:
                    cand = np.minimum(nxt + min(r / (1.0 - r), 1e12) * disp, 0.0)
                    if cand @ cand <= nxt @ nxt:
                        nxt = cand
                        jumps += 1
            prev_disp = disp
            anchor = nxt
        nxt[np.abs(nxt) < eps] = 0.0
        snap_loss += eps
        u = nxt
        if adaptive and eps > EPSILON_FLOOR:
            eps = max(eps / 10.0, EPSILON_FLOOR)
            K = choose_K(u, eps)
            omega = np.where(zero, 1.0, float(K))
            proj = projector(omega)
    def gamma():
        return {"dense": fit_proj.dense_coefficients(fit_coef),
                "factors": fit_proj.factor_effects(fit_u, fit_coef, fit_e)}

    history.converged, history.epsilon = converged, eps
    cert = None
    if np.any(uhat != 0):
        cert = Certificate(z=uhat, gamma=gamma() if with_gamma else None)
    separated = np.flatnonzero(uhat < 0)
    rep = SeparationReport(n_obs=n, separated=separated, certificate=cert, method="rectifier",
                           iterations=it, converged=converged, epsilon=eps, K=K, history=history,
                           diagnostics={"confirmations": confirmations, "early_stop": early_stop,
                                        "jumps": jumps, "face_jumps": face_jumps})
    return rep, gamma


def _safe_pass(ds, epsilon, max_iter, with_gamma, adaptive, tol, dense_dummies):
    """A pass with face jumps, redone without them if it then finds nothing.

    After a face jump the lower bound on max|u| no longer applies, so an
    empty result from such a run is not trusted.
    """
    rep, gamma = _rectify_pass(ds, epsilon, max_iter, with_gamma, adaptive, tol, dense_dummies)
    rep.pass_histories = [rep.history]
    if rep.separated.size == 0 and rep.diagnostics.get("face_jumps"):
        spent, first_history = rep.iterations, rep.history
        rep, gamma = _rectify_pass(ds, epsilon, max_iter, with_gamma, adaptive, tol, dense_dummies, face=False)
        rep.iterations += spent
        rep.diagnostics["retried"] = True
        rep.pass_histories = [first_history, rep.history]
    return rep, gamma


def _extend(sub, full, gamma):
    """Evaluate a direction fitted on ``sub`` (a row subset of ``full``) on every row of ``full``.

    Levels absent from ``sub`` get effect 0.  Returns ``(z, gamma_full)``.
    """
    z = full.X @ gamma["dense"]
    effects = []
    for q in range(full.n_factors):
        lookup = dict(zip(sub.factor_levels[q], gamma["factors"][q]))
        eff = np.array([lookup.get(lv, 0.0) for lv in full.factor_levels[q]], dtype=float)
        ids = full.factors[:, q]
        z = z + np.where(ids >= 0, eff[np.maximum(ids, 0)], 0.0)
        effects.append(eff)
    return z, {"dense": np.asarray(gamma["dense"], dtype=float), "factors": effects}


def _rectify(ds, epsilon, max_iter, with_gamma, adaptive, tol, dense_dummies):
    """Rectifier passes until none finds new separated rows.

    A single run can settle on a certificate that is not maximal: a row
    whose prediction approaches zero from above is clamped for good even
    though a different certificate would make it negative.  Rows found in
    one pass are removed and the rectifier is rerun on the rest; the union
    is the maximal separated set, because any certificate of the reduced
    data plus a large multiple of an earlier certificate certifies the
    union.  Each pass that starts from a separated sample ends with a
    nonzero certificate, so no separated row is left behind.
    """
    n = ds.n_obs
    first, gamma = _safe_pass(ds, epsilon, max_iter, with_gamma, adaptive, tol, dense_dummies)
    if first.separated.size == 0 or not first.converged:
        return first
    passes = [(np.arange(n), ds, first, gamma)]
    histories = list(first.pass_histories)
    keep = np.setdiff1d(np.arange(n), first.separated)
    iterations = first.iterations
    converged = True
    while keep.size and np.any(ds.y[keep] == 0):
        sub = ds.subset(keep)
        rep, g = _safe_pass(sub, epsilon, max_iter, False, adaptive, tol, dense_dummies)
        iterations += rep.iterations
        converged = rep.converged
        histories += rep.pass_histories
        if rep.separated.size == 0 or not converged:
            break
        passes.append((keep, sub, rep, g))
        keep = np.setdiff1d(keep, keep[rep.separated])
    diagnostics = dict(first.diagnostics)
    diagnostics["passes"] = [{"rows": int(r.n_obs), "separated": int(r.separated.size),
                              "iterations": int(r.iterations)} for _, _, r, _ in passes]
    if len(passes) == 1:
        first.iterations = iterations
        first.converged = converged
        first.diagnostics = diagnostics
        first.pass_histories = histories
        return first
    # back-substitute: later directions first, then scale each earlier one
    # until its own rows are strictly negative again
    z = np.zeros(n)
    g_dense = np.zeros(ds.n_dense)
    g_factors = [np.zeros(L) for L in ds.n_levels]
    for rows, sub, rep, g in reversed(passes):
        zj, gj = _extend(sub, ds, g()) if sub is not ds else _extend(ds, ds, g())
        own = rows[rep.separated]
        wj = zj[own]
        lam = 1.0
        if np.any(z != 0):
            lam = 2.0 * max(0.0, float(np.max(z[own] / -wj))) + 1.0
        z = z + lam * zj
        g_dense = g_dense + lam * gj["dense"]
        g_factors = [a + lam * b for a, b in zip(g_factors, gj["factors"])]
    separated = np.sort(np.concatenate([rows[rep.separated] for rows, _, rep, _ in passes]))
    clean = np.zeros(n)
    clean[separated] = z[separated]
    scale = float(np.max(np.abs(clean)))
    clean /= scale
    gamma_out = {"dense": g_dense / scale, "factors": [f / scale for f in g_factors]} if with_gamma else None
    return SeparationReport(n_obs=n, separated=separated, certificate=Certificate(z=clean, gamma=gamma_out),
                            method="rectifier", iterations=iterations, converged=converged,
                            epsilon=first.epsilon, K=first.K, history=first.history, diagnostics=diagnostics,
                            pass_histories=histories)


def verify_certificate(ds: Dataset, family: ModelFamily, cert, *, r2_tol: float = 1e-8,
                       eps_cert: float = 1e-6):
    """Check that ``cert`` certifies separation for ``ds`` under ``family``.

    Two things are checked: ``z`` lies in the column space of the full design
    (uncentered R-squared of regressing ``z`` on every column within
    ``r2_tol`` of 1) and the sign pattern holds, with tolerance
    ``eps_cert * max|z|``: ``z = 0`` on interior rows, ``z <= 0`` at zero,
    ``z >= 0`` at the upper bound, and ``z`` not identically zero.

    Returns
    -------
    ok : bool
    violations : list of str
        Human-readable, with 1-based row numbers.
    """
    z = np.asarray(cert.z if isinstance(cert, Certificate) else cert, dtype=float)
    violations = []
    if z.shape != (ds.n_obs,):
        return False, [f"z has shape {z.shape}, expected ({ds.n_obs},)"]
    scale = float(np.max(np.abs(z))) if z.size else 0.0
    if scale == 0:
        return False, ["z is identically zero"]
    thr = eps_cert * scale
    part = boundary_partition(ds, family)
    bad = part.interior[np.abs(z[part.interior]) >= thr]
    violations += [f"row {i + 1}: z = {z[i]:.6g} on an interior outcome" for i in bad]
    bad = part.at_zero[z[part.at_zero] > thr]
    violations += [f"row {i + 1}: z = {z[i]:.6g} > 0 where y = 0" for i in bad]
    bad = part.at_upper[z[part.at_upper] < -thr]
    violations += [f"row {i + 1}: z = {z[i]:.6g} < 0 where y is at its upper bound" for i in bad]
    if ds.n_dense or ds.n_factors:
        _, e, _ = WeightedProjector(ds, np.ones(ds.n_obs)).fit(z / scale)
        r2 = _uncentered_r2(z / scale, e)
    else:
        r2 = 0.0
    if not r2 >= 1.0 - r2_tol:
        violations.append(f"z is not in the column space (R-squared {r2:.12g})")
    return not violations, violations
