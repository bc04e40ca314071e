"""GLM families in canonical-parameter form.

Every family is written as ``l_i = alpha_i * (y_i * theta_i - b(theta_i))``
with ``theta_i = theta(eta_i; nu)`` and mean ``mu_i = b'(theta_i)``.  The
y-only constant ``c_i(alpha_i, y_i)`` is omitted throughout (pseudo-maximum
likelihood convention), which is what lets Gamma and Inverse Gaussian PML
accept ``y = 0``.

All functions are vectorized over ``y``, ``eta`` and ``alpha``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import special

from .exceptions import DegenerateWeightError, DomainError

__all__ = [
    "Kind",
    "ModelFamily",
    "mean",
    "loglik_contribution",
    "score_contribution",
    "irls_weight_and_response",
    "family_from_name",
    "POISSON",
    "LOGIT",
    "PROBIT",
    "GAMMA_PML",
    "GAUSSIAN_LOG",
    "INVGAUSS_PML",
]

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class Kind(str, enum.Enum):
    POISSON = "poisson"
    LOGIT = "logit"
    PROBIT = "probit"
    NEGBIN = "negbin"
    GAMMA_PML = "gamma-pml"
    GAUSSIAN_LOG = "gaussian-log"
    INVGAUSS_PML = "invgauss-pml"


_ALIASES = {
    "negative-binomial": Kind.NEGBIN,
    "nbreg": Kind.NEGBIN,
    "gamma": Kind.GAMMA_PML,
    "gaussian": Kind.GAUSSIAN_LOG,
    "invgauss": Kind.INVGAUSS_PML,
    "inverse-gaussian": Kind.INVGAUSS_PML,
    "bernoulli": Kind.LOGIT,
}


@dataclass(frozen=True)
class ModelFamily:
    """A regression model mapped onto the GLM log-likelihood.

    Parameters
    ----------
    kind : Kind
        Which model.
    nu : float, optional
        Negative Binomial dispersion.  Required (and only allowed) for
        ``Kind.NEGBIN``; it is an input and is never estimated.
    """

    kind: Kind
    nu: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.kind is Kind.NEGBIN:
            if self.nu is None or not np.isfinite(self.nu) or self.nu <= 0:
                raise DomainError("negative binomial needs a finite dispersion nu > 0")
            object.__setattr__(self, "nu", float(self.nu))
        elif self.nu is not None:
            raise DomainError(f"dispersion nu only applies to negbin, not {self.kind.value}")

    @property
    def upper_bound(self) -> float:
        """Upper bound of the mean: 1 for binary/fractional models, inf otherwise."""
        return 1.0 if self.bounded else np.inf

    @property
    def bounded(self) -> bool:
        return self.kind in (Kind.LOGIT, Kind.PROBIT)

    @property
    def likelihood_bounded(self) -> bool:
        """False for the PML families whose l_i is unbounded above when y_i = 0."""
        return self.kind not in (Kind.GAMMA_PML, Kind.INVGAUSS_PML)

    @property
    def name(self) -> str:
        return self.kind.value

    def __str__(self):
        if self.kind is Kind.NEGBIN:
            return f"negbin(nu={self.nu:g})"
        return self.kind.value


POISSON = ModelFamily(Kind.POISSON)
LOGIT = ModelFamily(Kind.LOGIT)
PROBIT = ModelFamily(Kind.PROBIT)
GAMMA_PML = ModelFamily(Kind.GAMMA_PML)
GAUSSIAN_LOG = ModelFamily(Kind.GAUSSIAN_LOG)
INVGAUSS_PML = ModelFamily(Kind.INVGAUSS_PML)


def family_from_name(name: str, nu: float | None = None) -> ModelFamily:
    """Build a family from its CLI name (``"poisson"``, ``"gamma-pml"``, ...)."""
    key = name.strip().lower().replace("_", "-")
    kind = _ALIASES.get(key)
    if kind is None:
        try:
            kind = Kind(key)
        except ValueError:
            choices = ", ".join(k.value for k in Kind)
            raise DomainError(f"unknown family {name!r}; choose one of: {choices}") from None
    return ModelFamily(kind, nu if kind is Kind.NEGBIN else None)


def _as_family(family) -> ModelFamily:
    if isinstance(family, ModelFamily):
        return family
    if isinstance(family, (Kind, str)):
        return family_from_name(Kind(family).value if isinstance(family, Kind) else family)
    raise TypeError(f"expected ModelFamily, got {type(family).__name__}")


def _check_eta(eta):
    eta = np.asarray(eta, dtype=float)
    if not np.all(np.isfinite(eta)):
        raise DomainError("linear predictor must be finite")
    return eta


def _check_y(family: ModelFamily, y):
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise DomainError("outcome must be finite")
    if np.any(y < 0):
        raise DomainError("outcome must be non-negative")
    if family.bounded and np.any(y > 1):
        raise DomainError(f"{family.name} outcome must lie in [0, 1]")
    return y


def _check_alpha(alpha):
    alpha = np.asarray(alpha, dtype=float)
    if np.any(~(alpha > 0)) or not np.all(np.isfinite(alpha)):
        raise DomainError("weights alpha must be positive and finite")
    return alpha


def _probit_logs(eta):
    """log Phi(eta), log(1 - Phi(eta)), log phi(eta), all tail-stable."""
    log_cdf = special.log_ndtr(eta)
    log_sf = special.log_ndtr(-eta)
    log_pdf = -0.5 * eta * eta - _LOG_SQRT_2PI
    return log_cdf, log_sf, log_pdf


def mean(family, eta):
    """Conditional mean ``mu = b'(theta(eta))``.

    Raises
    ------
    DomainError
        If ``eta`` has non-finite entries.
    """
    family = _as_family(family)
    eta = _check_eta(eta)
    k = family.kind
    if k is Kind.LOGIT:
        return special.expit(eta)
    if k is Kind.PROBIT:
        return special.ndtr(eta)
    return np.exp(eta)


def _dtheta(family: ModelFamily, eta, mu):
    """Derivative of the canonical parameter with respect to eta."""
    k = family.kind
    if k in (Kind.POISSON, Kind.LOGIT):
        return np.ones_like(eta)
    if k is Kind.PROBIT:
        log_cdf, log_sf, log_pdf = _probit_logs(eta)
        return np.exp(log_pdf - log_cdf - log_sf)
    if k is Kind.NEGBIN:
        return family.nu / (family.nu + mu)
    if k is Kind.GAMMA_PML:
        return np.exp(-eta)
    if k is Kind.GAUSSIAN_LOG:
        return mu
    if k is Kind.INVGAUSS_PML:
        return np.exp(-2.0 * eta)
    raise AssertionError(k)


def loglik_contribution(family, y, eta, alpha=1.0):
    """Per-observation (pseudo) log-likelihood with the y-only constant dropped."""
    family = _as_family(family)
    y = _check_y(family, y)
    eta = _check_eta(eta)
    alpha = _check_alpha(alpha)
    k = family.kind
    if k is Kind.POISSON:
        ll = y * eta - np.exp(eta)
    elif k is Kind.LOGIT:
        ll = y * eta - np.logaddexp(0.0, eta)
    elif k is Kind.PROBIT:
        log_cdf, log_sf, _ = _probit_logs(eta)
        # 0 * -inf must stay 0 for y on the boundary
        ll = np.where(y > 0, y * log_cdf, 0.0) + np.where(y < 1, (1.0 - y) * log_sf, 0.0)
    elif k is Kind.NEGBIN:
        log_nu_mu = np.logaddexp(np.log(family.nu), eta)
        ll = y * (eta - log_nu_mu) - family.nu * log_nu_mu
    elif k is Kind.GAMMA_PML:
        ll = -y * np.exp(-eta) - eta
    elif k is Kind.GAUSSIAN_LOG:
        mu = np.exp(eta)
        ll = y * mu - 0.5 * mu * mu
    elif k is Kind.INVGAUSS_PML:
        ll = -0.5 * y * np.exp(-2.0 * eta) + np.exp(-eta)
    else:
        raise AssertionError(k)
    return alpha * ll


def score_contribution(family, y, eta, alpha=1.0):
    """Scalar ``alpha * (y - mu) * theta'(eta)`` multiplying ``x_mi`` in the score."""
    family = _as_family(family)
    y = _check_y(family, y)
    eta = _check_eta(eta)
    alpha = _check_alpha(alpha)
    mu = mean(family, eta)
    return alpha * (y - mu) * _dtheta(family, eta, mu)


def _dmu_deta(family: ModelFamily, eta, mu):
    k = family.kind
    if k is Kind.LOGIT:
        return mu * (1.0 - mu)
    if k is Kind.PROBIT:
        return np.exp(-0.5 * eta * eta - _LOG_SQRT_2PI)
    return mu


def _log_psi(family: ModelFamily, eta, mu):
    """log of b''(theta) * theta'(eta)**2, computed without underflow where possible."""
    k = family.kind
    if k is Kind.POISSON:
        return eta
    if k is Kind.LOGIT:
        return -np.logaddexp(0.0, eta) - np.logaddexp(0.0, -eta)
    if k is Kind.PROBIT:
        log_cdf, log_sf, log_pdf = _probit_logs(eta)
        return 2.0 * log_pdf - log_cdf - log_sf
    if k is Kind.NEGBIN:
        return eta - np.log1p(mu / family.nu)
    if k is Kind.GAMMA_PML:
        return np.zeros_like(eta)
    if k is Kind.GAUSSIAN_LOG:
        return 2.0 * eta
    if k is Kind.INVGAUSS_PML:
        return -eta
    raise AssertionError(k)


def irls_weight_and_response(family, y, eta, alpha=1.0, floor=1e-12):
    """IRLS weight ``psi`` and working dependent variable ``q``.

    ``psi = alpha * b''(theta) * theta'**2`` and
    ``q = (y - mu) / (b''(theta) * theta') + eta``.

    Raises
    ------
    DegenerateWeightError
        If any ``psi`` falls below ``floor``; the error lists those rows.
    """
    family = _as_family(family)
    y = _check_y(family, y)
    eta = _check_eta(eta)
    alpha = _check_alpha(alpha)
    mu = mean(family, eta)
    psi = alpha * np.exp(_log_psi(family, eta, mu))
    bad = np.flatnonzero(np.atleast_1d(psi < floor))
    if bad.size:
        raise DegenerateWeightError(
            f"IRLS weight below {floor:g} on {bad.size} row(s) (first: {bad[0]}); "
            "the mean is converging to its boundary, which usually means an "
            "undetected separated observation",
            rows=bad,
        )
    q = (y - mu) / _dmu_deta(family, eta, mu) + eta
    return psi, q
