"""Existence of Gamma and Inverse Gaussian PML estimates with zero outcomes.

Run with ``python3 demos/gamma_existence.py``.
"""
from sepguard import GAMMA_PML, Dataset, NonExistenceError, fit, gamma_existence_check, invgauss_existence_check

cases = {
    "x pushes the zero down": ([0, 1, 2], [[-1], [0], [0]]),
    "x pushes the zero up": ([0, 1, 2], [[1], [0], [0]]),
    "two zeros, opposite signs": ([0, 0, 1, 2], [[1], [-1], [0], [0]]),
    "overlap": ([0, 1, 2, 3], [[0], [1], [0], [2]]),
}
for label, (y, X) in cases.items():
    ds = Dataset.from_arrays(y, X)
    g = gamma_existence_check(ds, exact=True)
    ig = invgauss_existence_check(ds, exact=True)
    print(f"{label:28s} gamma: {g.reason:20s} invgauss exists: {ig.exists}")

# Unlike Poisson, a separated zero cannot simply be dropped for Gamma PML:
# the estimates fail to exist and fit() says so.
try:
    fit(Dataset.from_arrays([0, 1, 2], [[1], [0], [0]]), GAMMA_PML)
except NonExistenceError as err:
    print("\nfit raised NonExistenceError:", err)
