import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import cdf_tv, quadrature_tv
from mia_limits.core_types import DomainError, MiaLimitsError
from mia_limits.empmean_bounds import (
    EmpMeanBoundInput,
    Moments,
    SingularCovarianceError,
    empmean_security_bound,
    gaussian_tv_bound,
    leakage_term,
    min_n_epsilon,
    min_n_epsilon_exact,
    standardized_moments,
)

N_GRID = (2, 10, 100)
BETA_GRID = (0.0, 0.5, 1.0, 3.0)


class TestGaussianTv:
    def test_zero_shift(self):
        assert gaussian_tv_bound(50, 3, 0.0) == pytest.approx(math.sqrt(3) / 100)

    def test_hand_value(self):
        assert gaussian_tv_bound(100, 1, 1.0) == pytest.approx(0.055)

    def test_needs_two_points(self):
        with pytest.raises(DomainError):
            gaussian_tv_bound(1, 1, 0.0)

    @pytest.mark.parametrize("n", N_GRID)
    @pytest.mark.parametrize("beta", BETA_GRID)
    def test_dominates_quadrature(self, n, beta):
        tv, err = quadrature_tv(n, beta)
        assert err < 1e-8
        assert tv == pytest.approx(cdf_tv(n, beta), abs=1e-9)
        assert tv <= gaussian_tv_bound(n, 1, beta)

    @given(st.integers(2, 10**6), st.integers(1, 100), st.floats(0, 10))
    def test_monotone(self, n, d, beta):
        base = gaussian_tv_bound(n, d, beta)
        assert gaussian_tv_bound(n + 1, d, beta) < base
        assert gaussian_tv_bound(n, d + 1, beta) > base
        assert gaussian_tv_bound(n, d, beta + 0.1) > base


class TestSecurityBound:
    def test_direct_constant(self):
        res = empmean_security_bound(EmpMeanBoundInput(n=10_000, d=4, gamma=1.0, c_lp=1.0))
        assert res.value == pytest.approx(0.9899)
        assert res.c_lp_source == "direct" and not res.conditional_on_external_constant

    def test_limit(self):
        res = empmean_security_bound(EmpMeanBoundInput(n=10**14, d=4, gamma=1.0, c_lp=1.0))
        assert res.value == pytest.approx(1.0, abs=1e-6)

    def test_gamma_doubles_deficit(self):
        one = empmean_security_bound(EmpMeanBoundInput(n=400, d=2, gamma=1.0, c_lp=0.7))
        two = empmean_security_bound(EmpMeanBoundInput(n=400, d=2, gamma=2.0, c_lp=0.7))
        assert 1 - two.value == pytest.approx(2 * (1 - one.value))

    def test_assembled_constant(self):
        inp = EmpMeanBoundInput(n=900, d=1, gamma=0.5, moments=Moments(0.8, 1.6, 1000), c_d=0.1)
        res = empmean_security_bound(inp)
        assert res.c_lp == pytest.approx(0.1 * 2.6 + 0.4)
        assert res.c_lp_source == "assembled" and res.conditional_on_external_constant

    def test_vacuous_flag(self):
        res = empmean_security_bound(EmpMeanBoundInput(n=4, d=9, gamma=3.0, c_lp=2.0))
        assert res.value == 0.0 and res.bound.vacuous

    @pytest.mark.parametrize(
        "kwargs",
        [
            {},
            {"c_lp": 1.0, "c_d": 0.1, "moments": Moments(1, 1, 10)},
            {"c_d": 0.1},
            {"moments": Moments(1, 1, 10)},
        ],
    )
    def test_missing_or_conflicting_constants(self, kwargs):
        with pytest.raises(MiaLimitsError):
            EmpMeanBoundInput(n=10, d=1, gamma=1.0, **kwargs)


class TestSampleSize:
    def test_hand_value(self):
        assert min_n_epsilon(1.0, 1, 0.1) == 283

    def test_halving_eps(self):
        assert min_n_epsilon(1.0, 1, 0.05) == pytest.approx(4 * min_n_epsilon(1.0, 1, 0.1), abs=4)

    @pytest.mark.parametrize("c", [0.1, 0.5, 1.0, 3.0])
    @pytest.mark.parametrize("d", [1, 4, 25])
    @pytest.mark.parametrize("eps", [0.01, 0.1, 0.3])
    def test_sufficient_and_minimal(self, c, d, eps):
        n_suff = min_n_epsilon(c, d, eps)
        n_min = min_n_epsilon_exact(c, d, eps)
        assert leakage_term(c, d, n_suff) <= eps
        assert leakage_term(c, d, n_min) <= eps
        assert n_min == 1 or leakage_term(c, d, n_min - 1) > eps
        assert n_min <= n_suff

    def test_exact_hand_value(self):
        # 1/sqrt(n) + 1/(2n) <= 0.1  <=>  n >= 1 / x^2 with x = sqrt(1.2) - 1 (rounded up)
        assert min_n_epsilon_exact(1.0, 1, 0.1) == 110


class TestMoments:
    def test_half_normal_mean(self):
        rng = np.random.default_rng(1)
        m = standardized_moments(rng.standard_normal(10**6))
        assert m.m1 == pytest.approx(math.sqrt(2 / math.pi), abs=0.01)
        assert m.m3 == pytest.approx(2 * math.sqrt(2 / math.pi), abs=0.02)
        assert m.n_samples == 10**6

    def test_constant_samples(self):
        with pytest.raises(SingularCovarianceError, match="rank 0"):
            standardized_moments(np.ones((50, 2)))

    def test_rank_deficient(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((200, 1))
        with pytest.raises(SingularCovarianceError, match="rank 1 < dimension 2"):
            standardized_moments(np.hstack([x, 2 * x]))

    def test_too_few_samples(self):
        with pytest.raises(DomainError):
            standardized_moments(np.ones((2, 2)))

    def test_affine_invariance(self):
        rng = np.random.default_rng(3)
        x = rng.exponential(size=(20_000, 3))
        A = rng.standard_normal((3, 3)) + 3 * np.eye(3)
        base = standardized_moments(x)
        moved = standardized_moments(x @ A.T + np.array([5.0, -2.0, 1.0]))
        # the empirical whitening makes this exact up to rounding
        assert moved.m1 == pytest.approx(base.m1, rel=1e-8)
        assert moved.m3 == pytest.approx(base.m3, rel=1e-8)
