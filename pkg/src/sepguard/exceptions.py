"""Exception hierarchy shared across sepguard."""


class SepguardError(Exception):
    """Base class for all library errors."""


class DomainError(SepguardError, ValueError):
    """An argument lies outside the admissible domain of a family function."""


class DegenerateWeightError(SepguardError, FloatingPointError):
    """IRLS weights collapsed below the floor for some rows.

    This is the usual symptom of a separated observation that was not
    dropped before fitting; the offending rows are kept in ``rows``.
    """

    def __init__(self, message, rows=()):
        super().__init__(message)
        self.rows = tuple(int(r) for r in rows)


class DataError(SepguardError, ValueError):
    """Invalid input data (CSV parsing, missing values, bad outcomes)."""


class ConvergenceError(SepguardError, RuntimeError):
    """An iterative routine hit its iteration cap or diverged."""

    def __init__(self, message, last_delta=None):
        super().__init__(message)
        self.last_delta = last_delta


class EmptyModelError(SepguardError, ValueError):
    """Every regressor was dropped as collinear and no factors remain."""


class DimensionError(SepguardError, ValueError):
    """Problem exceeds the size cap of the dense LP oracle."""


class CyclingError(SepguardError, RuntimeError):
    """The simplex pivot cap was reached (cycling guard)."""


class UnboundedLikelihoodError(SepguardError, ValueError):
    """The rectifier was asked to handle a family with unbounded likelihood."""


class CompleteSeparationError(SepguardError):
    """All observations are separated; no finite fit is possible."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NonExistenceError(SepguardError):
    """Gamma / Inverse Gaussian PML estimates do not exist for this data."""

    def __init__(self, message, verdict=None):
        super().__init__(message)
        self.verdict = verdict
