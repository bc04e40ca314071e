"""Walk through a small Poisson data set where three zeros are separated.

Run with ``python3 demos/nine_row_walkthrough.py``.
"""
import numpy as np

from sepguard import POISSON, Dataset, detect, fit, lp_detect, verify_certificate

y = [0, 0, 0, 0, 1, 2, 3, 4, 5]
X = [[-1, 5, 3], [2, 0, 1], [0, -6, -3], [0, 0, 0],
     [3, 3, 3], [6, 6, 6], [5, 5, 5], [7, 7, 7], [4, 4, 4]]
ds = Dataset.from_arrays(y, X, column_names=("x2", "x3", "x4"))

# On the positive rows x2 = x3 = x4, so any combination of x3 - x4 and
# x2 - x4 is free to move the zero rows.
rep = detect(ds)
print("rectifier: separated rows (1-based):", (rep.separated + 1).tolist())
print("  iterations:", rep.iterations, " converged:", rep.converged)
z = rep.certificate.z / np.max(np.abs(rep.certificate.z))
print("  certificate z:", np.round(z, 4).tolist())
print("  certificate verifies:", verify_certificate(ds, POISSON, rep.certificate)[0])

lp = lp_detect(ds, POISSON, exact=True)
print("exact LP:  separated rows (1-based):", (lp.separated + 1).tolist())

res = fit(ds, POISSON)
print("\nfit after dropping", (res.dropped + 1).tolist())
for name, b, status in zip(ds.column_names, res.coefficients, res.status()):
    print(f"  {name:5s} {b: .6f}  {status}")
for note in res.notes:
    print("  note:", note)
