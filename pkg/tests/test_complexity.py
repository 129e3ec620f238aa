import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pspin_saddles import (DomainError, ModelParams, sigma_derivative, sigma_ell, sigma_total,
                           threshold_E_ell, threshold_E_inf)
from pspin_saddles.complexity import c_coefficient, frak_S
from pspin_saddles.scalar import gamma_p, rate_I1


def test_thresholds():
    assert threshold_E_inf(3) == pytest.approx(1.6329932, abs=1e-7)
    assert threshold_E_inf(4) == pytest.approx(math.sqrt(3), abs=1e-15)
    for p in range(3, 11):
        assert gamma_p(p) * threshold_E_inf(p) == pytest.approx(2.0, abs=1e-15)
    with pytest.raises(DomainError):
        threshold_E_inf(2)


def test_model_params_validation():
    with pytest.raises(DomainError):
        ModelParams(2, 0)
    with pytest.raises(DomainError):
        ModelParams(3, -1)


class TestSigmaEll:
    def test_flat_branch(self):
        for ell in (0, 1, 4):
            assert sigma_ell(ModelParams(3, ell), -1.0) == pytest.approx(0.013241, abs=1e-6)
        assert sigma_ell(ModelParams(3, 0), 5.0) == pytest.approx(0.5 * math.log(2) - 1 / 3)

    def test_continuous_at_knee(self):
        e = threshold_E_inf(3)
        prm = ModelParams(3, 2)
        assert abs(sigma_ell(prm, -e) - (0.5 * math.log(2) - 1 / 3)) <= 1e-12
        assert abs(sigma_ell(prm, -e - 1e-12) - sigma_ell(prm, -e + 1e-12)) <= 1e-10

    def test_goes_to_minus_infinity(self):
        assert sigma_ell(ModelParams(3, 0), -5) < -1
        assert sigma_ell(ModelParams(3, 0), -50) < sigma_ell(ModelParams(3, 0), -5)

    @pytest.mark.parametrize("p", [3, 4, 5])
    @pytest.mark.parametrize("ell", [0, 1, 2, 5])
    def test_monotone(self, p, ell):
        prm = ModelParams(p, ell)
        e = threshold_E_inf(p)
        us = np.linspace(-4, 1, 1000)
        vals = np.array([sigma_ell(prm, u) for u in us])
        assert np.all(np.diff(vals) >= -1e-15)
        left = us < -e
        assert np.all(np.diff(vals[left]) > 0)

    @pytest.mark.parametrize("p", [3, 4])
    def test_index_ordering(self, p):
        e = threshold_E_inf(p)
        for u in np.linspace(-3, 0.5, 200):
            a, b = sigma_ell(ModelParams(p, 1), u), sigma_ell(ModelParams(p, 2), u)
            if u < -e - 1e-9:
                assert a > b
            elif u >= -e:
                assert a == b


class TestSigmaTotal:
    def test_branches(self):
        e = threshold_E_inf(3)
        assert sigma_total(3, 0.5) == pytest.approx(0.5 * math.log(2), abs=1e-15)
        assert abs(sigma_total(3, -e - 1e-13) - sigma_total(3, -e + 1e-13)) <= 1e-12
        assert abs(sigma_total(3, -1e-13) - sigma_total(3, 1e-13)) <= 1e-12

    def test_first_branch_definition(self):
        p, u = 4, -2.1
        expect = (0.5 * math.log(p - 1) - (p - 2) * u * u / (4 * (p - 1))
                  - rate_I1(gamma_p(p) * abs(u)))
        assert sigma_total(p, u) == pytest.approx(expect, abs=1e-15)

    def test_matches_ground_state_complexity(self):
        # below -E_inf only minima survive, so Sigma = Sigma_0
        for u in np.linspace(-2.5, -1.7, 9):
            assert sigma_total(3, u) == pytest.approx(sigma_ell(ModelParams(3, 0), u))

    @given(st.integers(3, 7), st.floats(-5, 3))
    def test_dominates_every_index(self, p, u):
        for ell in (0, 1, 3):
            assert sigma_total(p, u) >= sigma_ell(ModelParams(p, ell), u) - 1e-12


class TestThresholdEell:
    def test_root_and_bisection_oracle(self):
        prm = ModelParams(3, 0)
        E0 = threshold_E_ell(prm)
        assert abs(sigma_ell(prm, -E0)) <= 1e-12
        lo, hi = threshold_E_inf(3), 3.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if sigma_ell(prm, -mid) > 0:
                lo = mid
            else:
                hi = mid
        assert E0 == pytest.approx(0.5 * (lo + hi), abs=1e-10)

    def test_frozen_values(self):
        # regression values from this implementation
        assert threshold_E_ell(ModelParams(3, 0)) == pytest.approx(1.6569983635274739, abs=1e-12)
        assert threshold_E_ell(ModelParams(3, 1)) == pytest.approx(1.6528731981030431, abs=1e-12)
        assert threshold_E_ell(ModelParams(3, 2)) == pytest.approx(1.6502531274392727, abs=1e-12)

    def test_ordering(self):
        E = [threshold_E_ell(ModelParams(3, ell)) for ell in range(11)]
        assert all(a > b for a, b in zip(E, E[1:]))
        assert E[-1] > threshold_E_inf(3)
        e = threshold_E_inf(3)
        E50 = threshold_E_ell(ModelParams(3, 50))
        assert E50 - e < E[5] - e < E[0] - e

    @pytest.mark.parametrize("ell", [0, 1, 3])
    def test_bracketing(self, ell):
        prm = ModelParams(3, ell)
        E = threshold_E_ell(prm)
        assert sigma_ell(prm, -E + 1e-6) > 0 > sigma_ell(prm, -E - 1e-6)


class TestDerivative:
    def test_c_coefficient(self):
        assert c_coefficient(ModelParams(3, 1)) == 1.75

    def test_frak_S_chain(self):
        g = gamma_p(3)
        u = -2.5 / g
        assert u == pytest.approx(-2.041241, abs=1e-6)
        # with m(-2.5) = 0.5, the transform of the semicircle
        assert frak_S(ModelParams(3, 0), u) == pytest.approx(g * 0.5, abs=1e-14)
        assert frak_S(ModelParams(3, 0), u) == pytest.approx(0.612372, abs=1e-6)

    @pytest.mark.parametrize("p", [3, 4, 5])
    @pytest.mark.parametrize("ell", [0, 1, 2])
    @pytest.mark.parametrize("u", [-1.8, -2.2, -3.0])
    def test_finite_difference(self, p, ell, u):
        prm = ModelParams(p, ell)
        if u >= -threshold_E_inf(p):
            pytest.skip("flat branch")
        h = 1e-6
        fd = (sigma_ell(prm, u + h) - sigma_ell(prm, u - h)) / (2 * h)
        d = sigma_derivative(prm, u)
        assert d > 0
        assert d == pytest.approx(fd, abs=1e-6)

    def test_domain(self):
        with pytest.raises(DomainError):
            sigma_derivative(ModelParams(3, 0), -1.0)
