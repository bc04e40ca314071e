"""Separation detection and safe estimation for GLMs with high-dimensional fixed effects.

Typical use::

    from sepguard import Dataset, POISSON, detect, fit
    ds = Dataset.from_arrays(y, X)
    report = detect(ds, POISSON)
    result = fit(ds, POISSON)      # drops separated rows, then IRLS
"""
from .dataset import BoundaryPartition, Dataset, boundary_partition, load_csv, write_csv
from .exceptions import (CompleteSeparationError, ConvergenceError, CyclingError, DataError,
                         DegenerateWeightError, DimensionError, DomainError, EmptyModelError,
                         NonExistenceError, SepguardError, UnboundedLikelihoodError)
from .families import (GAMMA_PML, GAUSSIAN_LOG, INVGAUSS_PML, LOGIT, POISSON, PROBIT, Kind,
                       ModelFamily, family_from_name)
from .glm import FitResult, detect_separation, fit, irls_solve
from .logit_poisson import map_report_back, to_poisson_equivalent
from .lp import (ExistenceVerdict, existence_check, gamma_existence_check, invgauss_existence_check,
                 lp_detect, reduced_lp_detect)
from .rectifier import choose_K, detect, verify_certificate
from .report import Certificate, SeparationReport
from .simulate import simulate

__version__ = "0.1.0"

__all__ = [
    "BoundaryPartition", "Certificate", "CompleteSeparationError", "ConvergenceError", "CyclingError",
    "DataError", "Dataset", "DegenerateWeightError", "DimensionError", "DomainError", "EmptyModelError",
    "ExistenceVerdict", "FitResult", "GAMMA_PML", "GAUSSIAN_LOG", "INVGAUSS_PML", "Kind", "LOGIT",
    "ModelFamily", "NonExistenceError", "POISSON", "PROBIT", "SepguardError", "SeparationReport",
    "UnboundedLikelihoodError", "boundary_partition", "choose_K", "detect", "detect_separation",
    "existence_check", "family_from_name", "fit", "gamma_existence_check", "invgauss_existence_check",
    "irls_solve", "load_csv", "lp_detect", "map_report_back", "reduced_lp_detect", "simulate",
    "to_poisson_equivalent", "verify_certificate", "write_csv",
]
