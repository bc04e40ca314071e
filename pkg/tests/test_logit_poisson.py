import numpy as np
import pytest

from sepguard import Dataset, detect, map_report_back, to_poisson_equivalent
from sepguard.exceptions import DataError
from sepguard.families import LOGIT, POISSON
from sepguard.glm import irls_solve
from sepguard.report import Certificate, SeparationReport


class TestTransform:
    def test_two_rows(self):
        eq = to_poisson_equivalent(Dataset.from_arrays([0, 1], [[2.0], [3.0]]))
        d = eq.dataset
        assert d.y.tolist() == [0, 1, 1, 0]
        assert d.factors[:, -1].tolist() == [0, 0, 1, 1]
        # covariates zeroed on the artificial rows, constant included
        assert np.all(d.X[1::2] == 0)
        assert d.X[0::2].tolist() == [[1, 2], [1, 3]]
        assert eq.artificial.tolist() == [False, True, False, True]

    def test_fractional(self):
        eq = to_poisson_equivalent(Dataset.from_arrays([0.25], None, add_constant=True))
        assert eq.dataset.y.tolist() == [0.25, 0.75]

    def test_empty(self):
        ds = Dataset.from_arrays(np.zeros(0), np.zeros((0, 1)), add_constant=False)
        with pytest.raises(DataError):
            to_poisson_equivalent(ds)

    def test_out_of_range(self):
        with pytest.raises(DataError):
            to_poisson_equivalent(Dataset.from_arrays([0, 2], [[1.0], [0.0]]))

    def test_existing_factors_missing_on_artificial(self):
        eq = to_poisson_equivalent(Dataset.from_arrays([0, 1, 1], [[1.0], [0.0], [2.0]], [["a"], ["b"], ["a"]]))
        assert np.all(eq.dataset.factors[1::2, 0] == -1)
        assert eq.dataset.factor_names[-1] == "_pair"


class TestMapBack:
    def test_artificial_flag_maps_to_owner(self):
        eq = to_poisson_equivalent(Dataset.from_arrays([0, 1, 1, 0], [[0.0], [1.0], [2.0], [3.0]]))
        z = np.zeros(8)
        z[5] = -1.0  # artificial row of the third pair
        rep = SeparationReport(n_obs=8, separated=[5], certificate=Certificate(z=z))
        back = map_report_back(rep, eq)
        assert back.separated.tolist() == [2]
        assert back.certificate.z[2] == 1.0

    def test_empty(self):
        eq = to_poisson_equivalent(Dataset.from_arrays([0, 1], [[0.0], [1.0]]))
        back = map_report_back(SeparationReport(n_obs=4, separated=[]), eq)
        assert back.separated.size == 0 and back.certificate is None

    def test_size_mismatch(self):
        eq = to_poisson_equivalent(Dataset.from_arrays([0, 1], [[0.0], [1.0]]))
        with pytest.raises(ValueError):
            map_report_back(SeparationReport(n_obs=3, separated=[]), eq)

    def test_complete_separation_two_rows(self):
        rep = detect(Dataset.from_arrays([0, 1], [[-1.0], [1.0]], add_constant=False), LOGIT)
        assert rep.separated.tolist() == [0, 1]
        # the certificate points down on the zero and up on the one
        assert rep.certificate.z[0] < 0 < rep.certificate.z[1]


def test_poisson_equivalent_reproduces_logit_foc(rng):
    n = 40
    X = rng.normal(size=(n, 2))
    y = (rng.random(n) < 1 / (1 + np.exp(-X @ [0.7, -0.4]))).astype(float)
    ds = Dataset.from_arrays(y, X)
    fit_pp = irls_solve(to_poisson_equivalent(ds).dataset, POISSON, tol_dev=1e-14, tol_eta=1e-11)
    p = fit_pp.mu[0::2]
    # each pair's means sum to one, and the Logit score vanishes at p
    assert np.allclose(fit_pp.mu[0::2] + fit_pp.mu[1::2], 1.0, atol=1e-9)
    D = ds.design_matrix()
    assert np.max(np.abs(D.T @ (y - p))) < 1e-7
    direct = irls_solve(ds, LOGIT, tol_dev=1e-14, tol_eta=1e-11)
    assert np.allclose(direct.coefficients, fit_pp.coefficients, atol=1e-7)
