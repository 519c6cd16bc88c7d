import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mia_limits.core_types import AttackWeights, DomainError
from mia_limits.divergence import sec_from_accuracy
from mia_limits.overfit_sim import (
    LinearPredictor,
    OverfitConfig,
    OverfitParams,
    RegressionTask,
    Split,
    check_stopping_overfit,
    empirical_attack_accuracy,
    fit_1nn,
    fit_minnorm_linreg,
    fraction_below,
    fraction_curves_rows,
    generate_task,
    loss_threshold_attack,
    overfit_security_upper_bound,
    run_overfit_experiment,
    squared_losses,
)

BALANCED = AttackWeights(0.5, 1.0)


class TestTask:
    def test_beta_must_be_unit(self):
        with pytest.raises(DomainError):
            RegressionTask(d=2, n_train=3, n_val=3, beta=(1.0, 1.0))

    def test_default_beta(self):
        assert RegressionTask(d=3, n_train=1, n_val=1).beta == (1.0, 0.0, 0.0)

    def test_overfit_params(self):
        params = OverfitParams(epsilon=0.2, alpha=0.1)
        assert params.eta == pytest.approx(0.02)

    def test_deterministic(self):
        task = RegressionTask(d=5, n_train=20, n_val=10, seed=7)
        a, b = generate_task(task), generate_task(task)
        np.testing.assert_array_equal(a.train.x, b.train.x)
        np.testing.assert_array_equal(a.validation.y, b.validation.y)

    def test_inputs_on_sphere(self):
        data = generate_task(RegressionTask(d=8, n_train=50, n_val=50))
        np.testing.assert_allclose(np.linalg.norm(data.train.x, axis=1), 1.0, rtol=1e-14)

    def test_noiseless_linear_target(self):
        task = RegressionTask(d=4, n_train=30, n_val=5, noise_std=0.0)
        data = generate_task(task)
        np.testing.assert_array_equal(data.train.y, data.train.x @ np.array(task.beta))

    def test_sine_target(self):
        task = RegressionTask(d=3, n_train=30, n_val=5, noise_std=0.0, target="sine")
        data = generate_task(task)
        np.testing.assert_allclose(data.train.y, np.sin(np.pi * data.train.x[:, 0]))

    def test_mean_target_near_zero(self):
        task = RegressionTask(d=10, n_train=5000, n_val=1, seed=3)
        y = generate_task(task).train.y
        sd = math.sqrt(1 / task.d + task.noise_std**2)
        assert abs(y.mean()) <= 3 * sd / math.sqrt(len(y))


class TestRegressors:
    @pytest.mark.parametrize("seed", range(20))
    def test_minnorm_interpolates(self, seed):
        data = generate_task(RegressionTask(d=200, n_train=100, n_val=10, seed=seed))
        assert squared_losses(fit_minnorm_linreg(data.train), data.train).max() <= 1e-12

    def test_recovers_slope(self):
        train = Split(np.array([[1.0], [2.0]]), np.array([3.0, 6.0]))
        assert fit_minnorm_linreg(train).coef[0] == pytest.approx(3.0, rel=1e-14)

    def test_duplicates_do_not_raise(self):
        train = Split(np.array([[1.0, 0.0], [1.0, 0.0]]), np.array([1.0, 2.0]))
        assert fit_minnorm_linreg(train).coef == pytest.approx([1.5, 0.0])

    def test_least_squares_regime(self):
        task = RegressionTask(d=10, n_train=1000, n_val=4000, seed=11)
        data = generate_task(task)
        model = fit_minnorm_linreg(data.train)
        X, Y = data.train.x.T, data.train.y
        ols = np.linalg.solve(X @ X.T, X @ Y)
        np.testing.assert_allclose(model.coef, ols, rtol=1e-9, atol=1e-12)
        assert np.linalg.norm(model.coef - np.array(task.beta)) < 0.1
        val = squared_losses(model, data.validation)
        se = val.std(ddof=1) / math.sqrt(len(val))
        expected = task.noise_std**2 * (1 + task.d / task.n_train)
        assert abs(val.mean() - expected) <= 3 * se

    def test_1nn_returns_own_label(self):
        data = generate_task(RegressionTask(d=10, n_train=300, n_val=10, target="sine"))
        model = fit_1nn(data.train)
        np.testing.assert_array_equal(model.predict(data.train.x), data.train.y)

    def test_1nn_single_point(self):
        model = fit_1nn(Split(np.array([[0.0, 1.0]]), np.array([4.2])))
        assert np.all(model.predict(np.random.default_rng(0).standard_normal((5, 2))) == 4.2)

    def test_1nn_tie_goes_to_lower_index(self):
        model = fit_1nn(Split(np.array([[1.0], [-1.0]]), np.array([10.0, 20.0])))
        assert model.predict(np.array([[0.0]]))[0] == 10.0


class TestAttack:
    def test_member_of_interpolator(self):
        data = generate_task(RegressionTask(d=50, n_train=20, n_val=5))
        model = fit_minnorm_linreg(data.train)
        assert loss_threshold_attack(1e-6, model, data.train.x[0], data.train.y[0]) == 1

    def test_far_point(self):
        model = LinearPredictor(np.array([1.0]))
        assert loss_threshold_attack(1e-6, model, [1.0], 50.0) == 0

    def test_boundary_is_member(self):
        model = LinearPredictor(np.array([1.0]))
        assert loss_threshold_attack(0.25, model, [1.0], 1.5) == 1

    def test_fraction_monotone(self):
        data = generate_task(RegressionTask(d=5, n_train=200, n_val=200, seed=2))
        model = fit_minnorm_linreg(data.train)
        eps = [0.0, 1e-4, 1e-3, 1e-2, 0.1, 1.0, math.inf]
        fr = fraction_below(model, data.validation, eps)
        assert np.all(np.diff(fr) >= 0) and fr[-1] == 1.0 and np.all((fr >= 0) & (fr <= 1))

    def test_interpolator_train_fraction(self):
        data = generate_task(RegressionTask(d=200, n_train=100, n_val=100))
        model = fit_minnorm_linreg(data.train)
        assert np.all(fraction_below(model, data.train, [1e-6, 1e-4, 1.0]) == 1.0)


@pytest.fixture(scope="module")
def fitted():
    data = generate_task(RegressionTask(d=200, n_train=100, n_val=1000, seed=5))
    return data, fit_minnorm_linreg(data.train)


class TestAccuracy:
    def test_needs_enough_draws(self, fitted):
        data, model = fitted
        with pytest.raises(DomainError):
            empirical_attack_accuracy(BALANCED, model, data.train, data.validation, 1e-6, 10, 0)

    @pytest.mark.parametrize("nu,lam", [(0.5, 1.0), (0.3, 2.0)])
    def test_constant_attacks(self, fitted, nu, lam):
        data, model = fitted
        w = AttackWeights(nu, lam)
        never = empirical_attack_accuracy(
            w, model, data.train, data.validation, 0.0, 20_000, 1,
            attack=lambda losses: np.zeros(len(losses), dtype=bool),
        )
        always = empirical_attack_accuracy(
            w, model, data.train, data.validation, 0.0, 20_000, 1,
            attack=lambda losses: np.ones(len(losses), dtype=bool),
        )
        assert never.ci_low <= nu <= never.ci_high
        assert always.ci_low <= lam * (1 - nu) <= always.ci_high

    def test_interpolator_near_perfect(self, fitted):
        data, model = fitted
        acc = empirical_attack_accuracy(BALANCED, model, data.train, data.validation, 1e-6, 10_000, 2)
        assert acc.value >= 0.99 * BALANCED.max_accuracy
        assert sec_from_accuracy(BALANCED, acc.value) <= 0.05


class TestUpperBound:
    def test_perfect_overfit(self):
        assert overfit_security_upper_bound(0.0, 1.0, 0.0) == 0.0

    def test_hand_value(self):
        assert overfit_security_upper_bound(0.05, 1.0, 0.01) == pytest.approx(0.06)

    def test_small_gamma_factor(self):
        assert overfit_security_upper_bound(0.1, 0.5, 0.2) == pytest.approx(2 * (0.1 + 0.1))

    @pytest.mark.parametrize("seed", range(3))
    @pytest.mark.parametrize("gamma", [0.5, 1.0, 2.0])
    def test_empirical_sec_consistent(self, seed, gamma):
        w = AttackWeights.for_gamma(gamma)
        data = generate_task(RegressionTask(d=20, n_train=200, n_val=500, seed=seed, noise_std=0.3))
        model = fit_minnorm_linreg(data.train)
        eps = 0.05
        alpha = 1 - fraction_below(model, data.train, [eps])[0]
        p = fraction_below(model, data.validation, [eps])[0]
        acc = empirical_attack_accuracy(w, model, data.train, data.validation, eps, 50_000, seed)
        half = acc.half_width / min(w.nu, w.member_weight)
        # Monte Carlo over uniformly chosen points of the same splits
        assert sec_from_accuracy(w, acc.value) <= overfit_security_upper_bound(alpha, gamma, p) + half


class TestStoppingRule:
    def test_all_zero(self):
        res = check_stopping_overfit([0.0] * 10, 0.1, 0.2)
        assert (res.stopped, res.overfit) == (True, True)

    @pytest.mark.parametrize("n,alpha", [(10, 0.1), (20, 0.5), (8, 0.25), (40, 0.3)])
    def test_boundary_case(self, n, alpha):
        eps = 0.3
        losses = [eps * alpha * n] + [0.0] * (n - 1)
        res = check_stopping_overfit(losses, eps, alpha)
        assert res.stopped and res.overfit
        big = losses[0]
        assert res.fraction_below == pytest.approx((n - 1 + (big <= eps)) / n)

    def test_not_stopped(self):
        res = check_stopping_overfit([1.0, 1.0], 0.1, 0.5)
        assert not res.stopped and not res.overfit

    @given(
        st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=60),
        st.floats(1e-3, 5),
        st.floats(0.01, 0.99),
    )
    def test_implication(self, losses, eps, alpha):
        res = check_stopping_overfit(losses, eps, alpha)
        if res.stopped:
            assert sum(v <= eps for v in losses) >= len(losses) * (1 - alpha)

    def test_invalid_losses(self):
        with pytest.raises(DomainError):
            check_stopping_overfit([math.nan], 0.1, 0.1)


class TestExperiment:
    def test_thread_count_does_not_matter(self):
        config = OverfitConfig(
            task=RegressionTask(d=30, n_train=20, n_val=50), n_draws=2000, seeds=(0, 1, 2)
        )
        serial = run_overfit_experiment(config, threads=1)
        parallel = run_overfit_experiment(config, threads=3)
        assert serial == parallel
        rows = fraction_curves_rows(config, serial)
        assert len(rows) == 3 * 2 * len(config.eps_list)
        assert {r["split"] for r in rows} == {"train", "validation"}
