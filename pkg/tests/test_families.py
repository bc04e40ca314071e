import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import probit_cdf_quad
from sepguard import families as fam
from sepguard.exceptions import DegenerateWeightError, DomainError
from sepguard.families import (GAMMA_PML, GAUSSIAN_LOG, INVGAUSS_PML, LOGIT, POISSON, PROBIT, Kind,
                               ModelFamily, family_from_name)

NEGBIN1 = ModelFamily(Kind.NEGBIN, 1.0)
ALL = [POISSON, LOGIT, PROBIT, NEGBIN1, GAMMA_PML, GAUSSIAN_LOG, INVGAUSS_PML]


class TestMean:
    def test_poisson_at_zero(self):
        assert fam.mean(POISSON, 0.0) == 1.0

    def test_logit_symmetry(self):
        assert fam.mean(LOGIT, 0.0) == 0.5

    def test_probit_quantile(self):
        # oracle integrates the normal density numerically
        assert abs(probit_cdf_quad(1.959964) - 0.975) < 1e-6
        assert abs(fam.mean(PROBIT, 1.959964) - probit_cdf_quad(1.959964)) < 1e-10

    @pytest.mark.parametrize("family", ALL, ids=lambda f: f.name)
    def test_non_finite_eta(self, family):
        with pytest.raises(DomainError):
            fam.mean(family, np.array([0.0, np.nan]))

    @pytest.mark.parametrize("family", ALL, ids=lambda f: f.name)
    def test_increasing_and_limits(self, family):
        eta = np.linspace(-30, 3, 400)
        mu = fam.mean(family, eta)
        assert np.all(np.diff(mu) > 0)
        assert mu[0] < 1e-12
        if family.bounded:
            assert fam.mean(family, 40.0) == pytest.approx(1.0)


class TestLoglik:
    def test_poisson_zero(self):
        assert fam.loglik_contribution(POISSON, 0.0, 0.0) == -1.0

    def test_gamma_unit(self):
        assert fam.loglik_contribution(GAMMA_PML, 1.0, 0.0) == -1.0

    def test_logit_value(self):
        v = fam.loglik_contribution(LOGIT, 1.0, 2.0)
        assert abs(v - (-math.log1p(math.exp(-2.0)))) < 1e-12
        assert abs(v + 0.126928) < 1e-6

    def test_weights_scale(self):
        assert fam.loglik_contribution(POISSON, 2.0, 0.3, alpha=2.5) == pytest.approx(
            2.5 * fam.loglik_contribution(POISSON, 2.0, 0.3))

    @pytest.mark.parametrize("family,y", [(POISSON, -1.0), (LOGIT, 1.5), (PROBIT, -0.1), (GAMMA_PML, -2.0)])
    def test_outcome_domain(self, family, y):
        with pytest.raises(DomainError):
            fam.loglik_contribution(family, y, 0.0)

    def test_probit_tails_finite(self):
        v = fam.loglik_contribution(PROBIT, np.array([1.0, 0.0]), np.array([-30.0, 30.0]))
        assert np.all(np.isfinite(v))
        # Mills-ratio asymptote: log Phi(-x) ~ -x^2/2 - log(x sqrt(2 pi))
        approx = -450.0 - math.log(30.0 * math.sqrt(2 * math.pi))
        assert v[0] == pytest.approx(approx, abs=2e-3)
        assert v[1] == v[0]

    def test_bounded_families_nonpositive(self):
        eta = np.linspace(-5, 5, 11)
        for family in (POISSON, LOGIT, PROBIT, NEGBIN1):
            assert np.all(fam.loglik_contribution(family, 0.0, eta) <= 0)


class TestScore:
    def test_poisson_at_mean(self):
        assert fam.score_contribution(POISSON, 1.0, 0.0) == 0.0

    def test_gamma_zero_outcome(self):
        assert fam.score_contribution(GAMMA_PML, 0.0, -3.0) == pytest.approx(-1.0, abs=1e-14)

    def test_negbin(self):
        assert fam.score_contribution(NEGBIN1, 2.0, 0.0) == pytest.approx(0.5, abs=1e-14)

    @pytest.mark.parametrize("family", ALL, ids=lambda f: f.name)
    @pytest.mark.parametrize("eta", [-2.0, -0.3, 0.0, 0.7, 1.9])
    def test_matches_finite_difference(self, family, eta):
        y = 0.6 if family.bounded else 1.7
        h = 1e-6
        fd = (fam.loglik_contribution(family, y, eta + h) - fam.loglik_contribution(family, y, eta - h)) / (2 * h)
        assert fam.score_contribution(family, y, eta) == pytest.approx(fd, rel=1e-6, abs=1e-8)


class TestIrlsWeights:
    @pytest.mark.parametrize("family,y,eta,psi,q", [
        (POISSON, 1.0, 0.0, 1.0, 0.0),
        (POISSON, 0.0, 0.0, 1.0, -1.0),
        (LOGIT, 1.0, 0.0, 0.25, 2.0),
    ])
    def test_values(self, family, y, eta, psi, q):
        p, w = fam.irls_weight_and_response(family, y, eta)
        assert p == pytest.approx(psi, abs=1e-15)
        assert w == pytest.approx(q, abs=1e-15)

    def test_floor(self):
        with pytest.raises(DegenerateWeightError) as info:
            fam.irls_weight_and_response(POISSON, np.array([0.0, 1.0, 0.0]), np.array([-40.0, 0.0, 0.0]))
        assert info.value.rows == (0,)

    @pytest.mark.parametrize("family", ALL, ids=lambda f: f.name)
    def test_expected_information(self, family):
        # psi = -E[d2 l / d eta2]: the score is linear in y with slope theta', so psi = b'' theta'^2
        eta = 0.4
        h = 1e-5
        mu = fam.mean(family, eta)
        s_plus = fam.score_contribution(family, mu, eta + h)
        s_minus = fam.score_contribution(family, mu, eta - h)
        psi, q = fam.irls_weight_and_response(family, mu, eta)
        assert psi == pytest.approx(-(s_plus - s_minus) / (2 * h), rel=1e-5)
        assert q == pytest.approx(eta)


class TestFamilyFromName:
    @pytest.mark.parametrize("name,kind", [("poisson", Kind.POISSON), ("gamma-pml", Kind.GAMMA_PML),
                                           ("invgauss-pml", Kind.INVGAUSS_PML), ("gaussian-log", Kind.GAUSSIAN_LOG),
                                           ("Logit", Kind.LOGIT), ("probit", Kind.PROBIT)])
    def test_names(self, name, kind):
        assert family_from_name(name).kind is kind

    def test_negbin_needs_nu(self):
        assert family_from_name("negbin", 2.0).nu == 2.0
        with pytest.raises(ValueError):
            family_from_name("negbin")

    def test_unknown(self):
        with pytest.raises(ValueError):
            family_from_name("weibull")


@settings(max_examples=200, deadline=None)
@given(st.floats(-20, 20), st.floats(0, 1))
def test_binary_score_sign(eta, y):
    # the score pushes eta toward y
    s = fam.score_contribution(LOGIT, y, eta)
    mu = fam.mean(LOGIT, eta)
    assert s == 0 or np.sign(s) == np.sign(y - mu)
