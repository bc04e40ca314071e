"""Poisson-equivalent representation of binary and fractional outcome models.

Each observation ``i`` becomes a pair of rows: the original ``(i, 1)`` with
outcome ``y_i`` and an artificial ``(i, 2)`` with outcome ``1 - y_i`` whose
covariates are all zero.  A pair fixed effect ties the two together.  A
Poisson model on the doubled data has the same first-order conditions for
the shared coefficients as the Logit model on the original data, and its
separated rows map one-to-one onto the separated original rows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .exceptions import DataError
from .report import Certificate, SeparationReport

__all__ = ["EquivalentDataset", "to_poisson_equivalent", "map_report_back", "PAIR_FACTOR"]

PAIR_FACTOR = "_pair"


@dataclass(frozen=True)
class EquivalentDataset:
    """The doubled dataset and its row-origin map.

    Row ``2*i`` is original observation ``i``; row ``2*i + 1`` is its
    artificial partner.
    """

    dataset: Dataset
    origin: np.ndarray
    artificial: np.ndarray
    n_original: int


def to_poisson_equivalent(ds: Dataset) -> EquivalentDataset:
    """Build the Poisson-equivalent dataset of a binary/fractional model.

    Raises
    ------
    DataError
        If ``ds`` is empty or some outcome lies outside ``[0, 1]``.
    """
    n = ds.n_obs
    if n == 0:
        raise DataError("cannot transform an empty dataset")
    if np.any(ds.y > 1) or np.any(ds.y < 0):
        raise DataError("binary/fractional outcomes must lie in [0, 1]")
    m = 2 * n
    y = np.empty(m)
    y[0::2] = ds.y
    y[1::2] = 1.0 - ds.y
    X = np.zeros((m, ds.n_dense))
    X[0::2] = ds.X
    F = np.full((m, ds.n_factors + 1), -1, dtype=np.int64)
    F[0::2, :-1] = ds.factors
    F[:, -1] = np.repeat(np.arange(n), 2)
    w = np.repeat(ds.weights, 2)
    doubled = Dataset(
        y=y, X=X, column_names=ds.column_names, factors=F,
        factor_names=ds.factor_names + (PAIR_FACTOR,),
        factor_levels=ds.factor_levels + (tuple(range(n)),),
        weights=w, has_constant=ds.has_constant, depvar=ds.depvar,
    )
    origin = np.repeat(np.arange(n), 2)
    artificial = np.tile([False, True], n)
    return EquivalentDataset(doubled, origin, artificial, n)


def map_report_back(report: SeparationReport, eq: EquivalentDataset) -> SeparationReport:
    """Re-index a report on the doubled data to the original rows.

    An original row is flagged iff its own row or its artificial partner is
    flagged.  The certificate becomes ``z[i] = z[(i,1)] - z[(i,2)]``, which
    cancels the pair effect and leaves ``x_i gamma``.
    """
    if report.n_obs != eq.dataset.n_obs:
        raise ValueError(
            f"report covers {report.n_obs} rows but the equivalent dataset has {eq.dataset.n_obs}")
    separated = np.unique(eq.origin[report.separated])
    cert = None
    if report.certificate is not None:
        z2 = np.asarray(report.certificate.z, dtype=float)
        z = z2[0::2] - z2[1::2]
        gamma = None
        if report.certificate.gamma is not None:
            g = report.certificate.gamma
            gamma = {"dense": g["dense"], "factors": list(g["factors"])[:-1]}
        cert = Certificate(z=z, gamma=gamma)
    diagnostics = dict(report.diagnostics)
    diagnostics["transform"] = "logit-poisson"
    return SeparationReport(
        n_obs=eq.n_original, separated=separated, certificate=cert, method=report.method,
        iterations=report.iterations, converged=report.converged, epsilon=report.epsilon,
        K=report.K, history=report.history, diagnostics=diagnostics,
        pass_histories=list(report.pass_histories),
    )
