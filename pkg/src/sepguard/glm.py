"""GLM estimation with high-dimensional fixed effects.

:func:`fit` runs the full workflow: detect separation (or, for Gamma and
Inverse Gaussian PML, check existence), drop the separated rows, estimate
the model on the rest by IRLS with the factors partialled out, and flag the
dense columns involved in the separating direction.  Dropping separated
rows leaves the estimates of every uninvolved coefficient unchanged, and
the linear predictor of every retained row as well.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import families as fam
from .dataset import Dataset
from .exceptions import (CompleteSeparationError, ConvergenceError, DegenerateWeightError,
                         DimensionError, NonExistenceError)
from .families import ModelFamily
from .hdfe import FactorStructure, WeightedProjector, normalize_fixed_effects
from .lp import ExistenceVerdict, existence_check, lp_detect, reduced_lp_detect
from .rectifier import detect
from .report import SeparationReport

__all__ = ["FitResult", "IrlsResult", "fit", "irls_solve", "information_and_se", "detect_separation"]

METHODS = ("ir", "lp", "reduced-lp", "auto")
AUTO_LP_MAX_ROWS = 1000


@dataclass
class IrlsResult:
    """Core IRLS output on the estimation sample."""

    coefficients: np.ndarray
    collinear: np.ndarray
    eta: np.ndarray
    mu: np.ndarray
    loglik: float
    deviance: float
    iterations: int
    converged: bool
    weights: np.ndarray
    factor_effects: list = field(default_factory=list)
    deviance_history: list = field(default_factory=list)
    information: np.ndarray | None = None
    se: np.ndarray | None = None


@dataclass
class FitResult:
    """Estimates on the retained rows plus the separation bookkeeping.

    Attributes
    ----------
    coefficients : ndarray
        Dense-column estimates on the retained sample (0 where collinear).
    se : ndarray
        Standard errors; NaN for collinear or implicated columns.
    implicated : ndarray of bool
        Columns loading on the overall separating direction.  Their
        estimates diverge in the full model; the retained-sample value is
        relative to the separating combination.
    dropped, retained : ndarray of int
        0-based row indices of the original dataset.
    eta, mu : ndarray
        Linear predictor and mean on the retained rows.
    deviance : float
        ``-2 * loglik`` under the PML convention (y-only constants dropped).
    """

    family: ModelFamily
    column_names: tuple
    coefficients: np.ndarray
    se: np.ndarray
    collinear: np.ndarray
    implicated: np.ndarray
    factor_names: tuple
    factor_levels: tuple
    factor_effects: list
    eta: np.ndarray
    mu: np.ndarray
    loglik: float
    deviance: float
    information: np.ndarray
    dropped: np.ndarray
    retained: np.ndarray
    iterations: int
    converged: bool
    n_obs: int
    report: SeparationReport | None = None
    verdict: ExistenceVerdict | None = None
    notes: list = field(default_factory=list)

    def status(self):
        """Per-column label: ``estimated``, ``collinear`` or ``diverges``."""
        out = []
        for c, imp in zip(self.collinear, self.implicated):
            out.append("collinear" if c else "diverges" if imp else "estimated")
        return out


def _start_eta(family: ModelFamily, y):
    if family.bounded:
        return np.zeros_like(y)
    return np.log(y + np.mean(y) / 2.0)


def irls_solve(ds: Dataset, family: ModelFamily, start=None, *, tol_dev: float = 1e-9,
               tol_eta: float = 1e-8, max_iter: int = 1000, step_halving_max: int = 20,
               wls_tol: float = 1e-10, weight_floor: float = 1e-12) -> IrlsResult:
    """Fisher scoring by iterated weighted least squares with partialled factors.

    Each step forms the IRLS weight ``psi`` and working response ``q``,
    regresses ``q`` on the dense columns and all factors with weights
    ``psi``, and sets the new linear predictor to the fitted values
    ``q - residuals``.  A step that raises the deviance is halved, at most
    ``step_halving_max`` times.  Convergence requires both a relative
    deviance change below ``tol_dev`` and ``max|d eta| < tol_eta``.

    Parameters
    ----------
    start : array_like, optional
        Starting linear predictor; family default otherwise.

    Raises
    ------
    DegenerateWeightError
        A weight fell below ``weight_floor``: some row's mean is heading to
        its boundary, which points at undetected separation.
    ConvergenceError
        Step halving failed or ``max_iter`` was reached.
    """
    y, alpha = ds.y, ds.weights
    eta = _start_eta(family, y) if start is None else np.asarray(start, dtype=float).copy()
    dev = np.inf
    history = []
    converged = False
    it = 0
    coef = np.zeros(ds.n_dense)
    proj = resid = None
    for it in range(1, max_iter + 1):
        psi, q = fam.irls_weight_and_response(family, y, eta, alpha, floor=weight_floor)
        proj = WeightedProjector(ds, psi, tol=wls_tol)
        c, resid, _ = proj.fit(q)
        target = q - resid
        new_eta, new_dev = target, _deviance(family, y, target, alpha)
        if it > 1:
            lam = 1.0
            for _ in range(step_halving_max):
                if np.isfinite(new_dev) and new_dev <= dev + 1e-12 * (0.1 + abs(dev)):
                    break
                lam /= 2.0
                new_eta = eta + lam * (target - eta)
                new_dev = _deviance(family, y, new_eta, alpha)
            else:
                if not (np.isfinite(new_dev) and new_dev <= dev + 1e-12 * (0.1 + abs(dev))):
                    raise ConvergenceError(
                        f"IRLS deviance increased after {step_halving_max} step halvings", last_delta=new_dev - dev)
        delta_eta = float(np.max(np.abs(new_eta - eta))) if it > 1 else np.inf
        rel = abs(new_dev - dev) / (0.1 + abs(new_dev)) if np.isfinite(dev) else np.inf
        eta, dev = new_eta, new_dev
        coef, proj_last, q_last, c_last = proj.dense_coefficients(c), proj, q, c
        history.append(dev)
        if rel < tol_dev and delta_eta < tol_eta:
            converged = True
            break
    if not converged:
        raise ConvergenceError(f"IRLS did not converge in {max_iter} iterations", last_delta=history[-1])
    mu = fam.mean(family, eta)
    psi, _ = fam.irls_weight_and_response(family, y, eta, alpha, floor=0.0)
    collinear = np.zeros(ds.n_dense, dtype=bool)
    collinear[proj_last.columns] = proj_last.dropped
    effects = []
    if ds.n_factors:
        effects = normalize_fixed_effects(proj_last.factor_effects(q_last, c_last, resid), ds.factors)
    res = IrlsResult(coefficients=coef, collinear=collinear, eta=eta, mu=mu,
                     loglik=-dev / 2.0, deviance=dev, iterations=it, converged=True, weights=psi,
                     factor_effects=effects, deviance_history=history)
    info, se = information_and_se(res, ds, wls_tol=wls_tol)
    res.information, res.se = info, se
    return res


def _deviance(family, y, eta, alpha):
    if not np.all(np.isfinite(eta)):
        return np.inf
    return float(-2.0 * np.sum(fam.loglik_contribution(family, y, eta, alpha)))


def information_and_se(fit, ds: Dataset, exclude=None, *, wls_tol: float = 1e-10, rcond: float = 1e-10):
    """Expected information over the partialled dense columns and SEs.

    ``information = sum_i psi_i x~_i x~_i'`` where ``x~`` are the dense
    columns with the factors partialled out under weights ``psi``.  SEs are
    square roots of the diagonal of the inverse restricted to columns that
    are neither collinear nor in ``exclude``; the rest get NaN.  A singular
    block marks the affected columns NaN instead of failing.
    """
    psi = fit.weights
    Xt, _ = FactorStructure(ds.factors, psi, ds.n_levels).transform(ds.X, tol=wls_tol)
    info = (Xt * psi[:, None]).T @ Xt
    ok = ~np.asarray(fit.collinear, dtype=bool)
    if exclude is not None:
        ok &= ~np.asarray(exclude, dtype=bool)
    se = np.full(ds.n_dense, np.nan)
    idx = np.flatnonzero(ok)
    if idx.size:
        sub = info[np.ix_(idx, idx)]
        w, V = np.linalg.eigh(sub)
        good = w > rcond * max(w.max(), 0.0) if w.size else np.zeros(0, dtype=bool)
        if np.all(good):
            inv = (V / w) @ V.T
            se[idx] = np.sqrt(np.diag(inv))
        else:
            # columns loading on near-null directions stay NaN
            bad = np.any(np.abs(V[:, ~good]) > 1e-8, axis=1)
            keep = idx[~bad]
            if keep.size:
                sub2 = info[np.ix_(keep, keep)]
                se[keep] = np.sqrt(np.diag(np.linalg.inv(sub2)))
    return info, se


def detect_separation(ds: Dataset, family: ModelFamily, method: str = "ir", *, epsilon: float = 1e-5,
                      with_gamma: bool = False) -> SeparationReport:
    """Run the chosen detector; ``auto`` cross-checks the rectifier by LP on small data."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose one of {', '.join(METHODS)}")
    if method == "lp":
        return lp_detect(ds, family)
    if method == "reduced-lp":
        return reduced_lp_detect(ds, family)
    rep = detect(ds, family, epsilon=epsilon, with_gamma=with_gamma)
    if method == "auto" and ds.n_obs <= AUTO_LP_MAX_ROWS:
        try:
            check = lp_detect(ds, family)
        except DimensionError:
            rep.diagnostics["lp_cross_check"] = "skipped"
        else:
            agree = np.array_equal(check.separated, rep.separated)
            rep.diagnostics["lp_cross_check"] = "agree" if agree else "disagree"
            if not agree:
                warnings.warn("rectifier and LP disagree on the separated set; keeping the rectifier's",
                              RuntimeWarning, stacklevel=2)
            if not rep.converged:
                return check
    return rep


def _implicated(ds: Dataset, report: SeparationReport | None):
    out = np.zeros(ds.n_dense, dtype=bool)
    if report is None or report.certificate is None or ds.n_dense == 0:
        return out
    z = np.asarray(report.certificate.z, dtype=float)
    zmax = float(np.max(np.abs(z)))
    if zmax == 0:
        return out
    proj = WeightedProjector(ds, np.ones(ds.n_obs))
    coef, _, _ = proj.fit(z / zmax)
    g = proj.dense_coefficients(coef)
    scale = np.max(np.abs(ds.X), axis=0)
    return np.abs(g) * scale > 1e-6


def fit(ds: Dataset, family: ModelFamily, *, method: str = "ir", epsilon: float = 1e-5,
        tol_dev: float = 1e-9, tol_eta: float = 1e-8, max_iter: int = 1000) -> FitResult:
    """Detect separation, drop separated rows and estimate the model.

    Raises
    ------
    CompleteSeparationError
        Every observation is separated.
    NonExistenceError
        Gamma / Inverse Gaussian PML estimates do not exist (witness attached).
    ConvergenceError, DegenerateWeightError
        From the IRLS stage.
    """
    report = verdict = None
    notes = []
    if not family.likelihood_bounded:
        verdict = existence_check(ds, family)
        if not verdict.exists:
            raise NonExistenceError(
                f"{family.name} estimates do not exist ({verdict.reason})", verdict=verdict)
        if verdict.reason == "nonunique_solution":
            notes.append("the PML solution is not unique: the pseudo-likelihood is flat along the witness direction")
        keep = np.arange(ds.n_obs)
    else:
        report = detect_separation(ds, family, method, epsilon=epsilon)
        if report.separated.size == ds.n_obs:
            raise CompleteSeparationError(
                "complete separation: every observation is separated, no finite estimates exist", report=report)
        keep = np.setdiff1d(np.arange(ds.n_obs), report.separated)
    sub = ds.subset(keep) if keep.size < ds.n_obs else ds
    implicated = _implicated(ds, report)
    try:
        core = irls_solve(sub, family, tol_dev=tol_dev, tol_eta=tol_eta, max_iter=max_iter)
    except DegenerateWeightError as err:
        rows = tuple(int(keep[r]) for r in err.rows)
        raise DegenerateWeightError(
            f"{err} (original rows {', '.join(str(r) for r in rows[:10])}"
            f"{', ...' if len(rows) > 10 else ''}); detection method {method!r} may have missed separation",
            rows=rows) from None
    se = core.se.copy()
    se[implicated] = np.nan
    if np.any(implicated & ~core.collinear):
        notes.append("columns implicated in separation diverge in the full model; their retained-sample "
                     "estimates are relative to the separating combination of regressors")
    if np.any(core.collinear):
        notes.append("collinear columns on the retained sample were dropped")
    return FitResult(
        family=family, column_names=ds.column_names, coefficients=core.coefficients, se=se,
        collinear=core.collinear, implicated=implicated, factor_names=sub.factor_names,
        factor_levels=sub.factor_levels, factor_effects=core.factor_effects, eta=core.eta, mu=core.mu,
        loglik=core.loglik, deviance=core.deviance, information=core.information,
        dropped=np.setdiff1d(np.arange(ds.n_obs), keep), retained=keep, iterations=core.iterations,
        converged=core.converged, n_obs=ds.n_obs, report=report, verdict=verdict, notes=notes,
    )
