"""Result types shared by the separation detectors."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Certificate", "SeparationReport", "RectifierHistory"]


@dataclass
class Certificate:
    """A separating direction and the observation-level values it induces.

    Attributes
    ----------
    z : ndarray, shape (n,)
        ``X @ gamma`` on every observation.
    gamma : dict or None
        ``{"dense": ndarray, "factors": [ndarray, ...]}`` when recovered.
    """

    z: np.ndarray
    gamma: dict | None = None

    @property
    def strictness(self) -> int:
        """Number of observations with ``z != 0``."""
        return int(np.count_nonzero(self.z))


@dataclass
class RectifierHistory:
    """Per-iteration diagnostics of one rectifier run.

    ``n_zero`` is the number of rows with ``y = 0`` in the run's sample,
    ``epsilon`` the final snapping threshold.
    """

    ssr: list = field(default_factory=list)
    r2: list = field(default_factory=list)
    max_abs_resid: list = field(default_factory=list)
    u_max: list = field(default_factory=list)
    n_zero: int = 0
    converged: bool = False
    epsilon: float | None = None


@dataclass
class SeparationReport:
    """Outcome of a separation check.

    ``separated`` holds 0-based row indices, sorted.  When a certificate is
    present, ``separated`` equals the rows where ``certificate.z != 0``.
    ``history`` covers the first rectifier run; ``pass_histories`` holds
    every run made (later passes and retries included).
    """

    n_obs: int
    separated: np.ndarray
    certificate: Certificate | None = None
    method: str = "rectifier"
    iterations: int = 0
    converged: bool = True
    epsilon: float | None = None
    K: int | None = None
    history: RectifierHistory | None = None
    diagnostics: dict = field(default_factory=dict)
    pass_histories: list = field(default_factory=list)

    def __post_init__(self):
        self.separated = np.unique(np.asarray(self.separated, dtype=np.int64))

    @property
    def has_separation(self) -> bool:
        return self.separated.size > 0

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.n_obs, dtype=bool)
        m[self.separated] = True
        return m
