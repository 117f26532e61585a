import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import central_diff, dense_lml, dense_posterior, gram, rel_err, se_kernel
from sgddpg.exceptions import DimensionMismatchError, FactorizationError
from sgddpg.gp import (GpDataset, GpPosterior, KernelHyperparams, fit_hyperparams, gram_matrix,
                       jittered_cholesky, kernel_eval, kernel_matrix, log_marginal_likelihood,
                       log_marginal_likelihood_grad, posterior, posterior_grad)


def random_problem(rng, n, d, noise=0.3):
    hp = KernelHyperparams(signal_variance=rng.uniform(0.5, 2.0),
                           lengthscales=tuple(rng.uniform(0.5, 2.0, d)), noise_std=noise)
    X = rng.uniform(-2, 2, (n, d))
    y = rng.normal(size=n)
    return GpDataset(X, y, capacity=max(n, 1)), hp


class TestKernel:
    def test_zero_distance_is_signal_variance(self, rng):
        z = rng.normal(size=3)
        assert kernel_eval(z, z, KernelHyperparams.isotropic(3)) == 1.0
        hp = KernelHyperparams(2.5, (0.3, 1.0, 4.0))
        assert kernel_eval(z, z, hp) == 2.5

    def test_squared_distance_two(self):
        hp = KernelHyperparams.isotropic(2)
        assert kernel_eval([0.0, 0.0], [1.0, 1.0], hp) == pytest.approx(math.exp(-1.0), abs=1e-15)
        assert math.exp(-1.0) == pytest.approx(0.367879, abs=1e-6)

    @given(st.lists(st.floats(-5, 5), min_size=6, max_size=6))
    def test_symmetric_and_bounded(self, vals):
        hp = KernelHyperparams(1.7, (0.5, 1.0, 2.0))
        z, z2 = vals[:3], vals[3:]
        k = kernel_eval(z, z2, hp)
        assert k == kernel_eval(z2, z, hp)
        assert 0.0 <= k <= 1.7

    def test_dimension_mismatch(self):
        hp = KernelHyperparams.isotropic(2)
        with pytest.raises(DimensionMismatchError):
            kernel_eval([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], hp)
        with pytest.raises(DimensionMismatchError):
            kernel_eval([1.0, 2.0], [1.0], hp)

    def test_matrix_matches_scalar_loop(self, rng):
        hp = KernelHyperparams(1.3, (0.7, 1.9))
        A, B = rng.normal(size=(5, 2)), rng.normal(size=(4, 2))
        K = kernel_matrix(A, B, hp)
        for i in range(5):
            for j in range(4):
                assert K[i, j] == pytest.approx(se_kernel(A[i], B[j], 1.3, (0.7, 1.9)), rel=1e-13)


class TestHyperparams:
    @pytest.mark.parametrize("kwargs", [dict(signal_variance=0.0), dict(lengthscales=(1.0, -1.0)),
                                        dict(noise_std=0.0), dict(jitter=-1e-9)])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            KernelHyperparams(**kwargs)

    def test_log_param_roundtrip(self):
        hp = KernelHyperparams(3.0, (0.5, 2.0), noise_std=0.2)
        back = hp.with_log_params(hp.to_log_params())
        assert back.signal_variance == pytest.approx(3.0)
        assert back.lengthscales == pytest.approx((0.5, 2.0))
        assert back.noise_std == 0.2


class TestGram:
    def test_single_element(self):
        hp = KernelHyperparams(2.0, (1.0,))
        assert gram_matrix(GpDataset([[0.3]], [1.0]), hp).tolist() == [[2.0]]

    def test_identical_inputs(self):
        hp = KernelHyperparams.isotropic(2)
        K = gram_matrix(GpDataset([[1.0, 2.0], [1.0, 2.0]], [0.0, 1.0]), hp)
        assert K[0, 1] == K[0, 0] == K[1, 1]

    def test_matches_loop_oracle(self, rng):
        data, hp = random_problem(rng, 6, 3)
        K = gram_matrix(data, hp)
        np.testing.assert_allclose(K, gram(data.inputs, hp.signal_variance, hp.lengthscales),
                                   rtol=1e-13)
        np.testing.assert_array_equal(K, K.T)

    def test_jitter_escalation_then_failure(self):
        A = np.ones((3, 3))
        L, jitter = jittered_cholesky(A, 1.0)
        assert 0 < jitter <= 1e-4
        with pytest.raises(FactorizationError):
            jittered_cholesky(-np.eye(2), 1.0)


class TestPosterior:
    def test_empty_is_prior(self):
        stats = posterior(GpDataset.empty(2), KernelHyperparams.isotropic(2), [0.3, -1.0])
        assert stats.mean == 0.0 and stats.variance == 1.0

    def test_interpolation_limit(self):
        hp = KernelHyperparams.isotropic(1, noise_std=1e-6, jitter=0.0)
        stats = posterior(GpDataset([[0.5]], [1.7]), hp, [0.5])
        assert stats.mean == pytest.approx(1.7, abs=1e-9)
        assert stats.variance == pytest.approx(0.0, abs=1e-9)

    def test_matches_dense_oracle_n8(self, rng):
        data, hp = random_problem(rng, 8, 3)
        nv = hp.noise_std**2 + hp.jitter
        for _ in range(5):
            z = rng.uniform(-2, 2, 3)
            s = posterior(data, hp, z)
            m, v = dense_posterior(data.inputs, data.targets, z, hp.signal_variance,
                                   hp.lengthscales, nv)
            assert abs(s.mean - m) < 1e-8 and abs(s.variance - v) < 1e-8

    def test_dimension_mismatch(self, rng):
        data, hp = random_problem(rng, 4, 2)
        with pytest.raises(DimensionMismatchError):
            posterior(data, hp, [0.0, 0.0, 0.0])

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31), st.integers(1, 15), st.integers(1, 4))
    def test_variance_within_prior(self, seed, n, d):
        rng = np.random.default_rng(seed)
        data, hp = random_problem(rng, n, d)
        _, var = GpPosterior(data, hp).predict(rng.uniform(-3, 3, (10, d)))
        assert np.all(var >= 0) and np.all(var <= hp.signal_variance + 1e-9)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31), st.integers(1, 12))
    def test_adding_data_never_increases_variance(self, seed, n):
        rng = np.random.default_rng(seed)
        data, hp = random_problem(rng, n + 1, 2)
        Z = rng.uniform(-3, 3, (10, 2))
        _, v_small = GpPosterior(data.subset(range(n)), hp).predict(Z)
        _, v_big = GpPosterior(data, hp).predict(Z)
        assert np.all(v_big <= v_small + 1e-9)


class TestPosteriorGrad:
    def test_empty_dataset(self):
        dm, dv = posterior_grad(GpDataset.empty(3), KernelHyperparams.isotropic(3), [1.0, 2.0, 3.0])
        assert np.all(dm == 0) and np.all(dv == 0)

    def test_symmetric_midpoint(self):
        hp = KernelHyperparams.isotropic(2, noise_std=0.1)
        data = GpDataset([[-1.0, 0.0], [1.0, 0.0]], [0.8, 0.8])
        dm, _ = posterior_grad(data, hp, [0.0, 0.4])
        assert abs(dm[0]) < 1e-14

    def test_finite_differences(self, rng):
        for _ in range(5):
            data, hp = random_problem(rng, 10, 3)
            z = rng.uniform(-1.5, 1.5, 3)
            dm, dv = posterior_grad(data, hp, z)
            fm = central_diff(lambda x: posterior(data, hp, x).mean, z)
            fv = central_diff(lambda x: posterior(data, hp, x).variance, z)
            assert rel_err(dm, fm, floor=1e-6) < 1e-4
            assert rel_err(dv, fv, floor=1e-6) < 1e-4


class TestMarginalLikelihood:
    def test_empty(self):
        assert log_marginal_likelihood(GpDataset.empty(2), KernelHyperparams.isotropic(2)) == 0.0

    def test_single_point_value(self):
        hp = KernelHyperparams.isotropic(1, noise_std=0.5)
        val = log_marginal_likelihood(GpDataset([[0.0]], [0.0]), hp)
        expected = -0.5 * math.log(1.25) - 0.5 * math.log(2 * math.pi)
        assert expected == pytest.approx(-1.03051, abs=1e-5)
        assert val == pytest.approx(expected, abs=1e-9)

    def test_matches_dense_oracle(self, rng):
        data, hp = random_problem(rng, 12, 2)
        assert log_marginal_likelihood(data, hp) == pytest.approx(
            dense_lml(data.inputs, data.targets, hp.signal_variance, hp.lengthscales,
                      hp.noise_std**2 + hp.jitter), abs=1e-9)

    def test_gradient_finite_differences(self, rng):
        for _ in range(20):
            data, hp = random_problem(rng, int(rng.integers(3, 15)), int(rng.integers(1, 4)))
            _, g = log_marginal_likelihood_grad(data, hp)
            theta = np.concatenate([hp.to_log_params(), [math.log(hp.noise_std)]])

            assert rel_err(g, central_diff(lambda t: log_marginal_likelihood(
                data, KernelHyperparams(math.exp(t[0]), tuple(np.exp(t[1:-1])),
                                        math.exp(t[-1]), hp.jitter)), theta), floor=1e-6) < 1e-4


class TestFitHyperparams:
    def test_zero_steps_unchanged(self, rng):
        data, hp = random_problem(rng, 5, 2)
        assert fit_hyperparams(data, hp, 0) is hp

    def test_reaches_independent_optimum(self):
        from scipy.optimize import minimize
        rng = np.random.default_rng(7)
        true = KernelHyperparams(1.0, (0.5,), noise_std=0.1)
        X = rng.uniform(-2, 2, (40, 1))
        K = kernel_matrix(X, X, true) + 0.01 * np.eye(40)
        y = np.linalg.cholesky(K) @ rng.standard_normal(40)
        data = GpDataset(X, y, 40)
        nv = 0.01 + true.jitter
        res = minimize(lambda t: -dense_lml(X, y, math.exp(t[0]), (math.exp(t[1]),), nv),
                       x0=[0.0, math.log(2.0)], method="Nelder-Mead",
                       options=dict(xatol=1e-8, fatol=1e-10))
        fitted = fit_hyperparams(data, KernelHyperparams(1.0, (2.0,), noise_std=0.1), 500)
        assert fitted.lengthscales[0] == pytest.approx(math.exp(res.x[1]), rel=1e-2)
        assert fitted.signal_variance == pytest.approx(math.exp(res.x[0]), rel=1e-2)
        assert fitted.noise_std == 0.1

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**31))
    def test_never_decreases_likelihood(self, seed):
        rng = np.random.default_rng(seed)
        data, hp = random_problem(rng, int(rng.integers(2, 20)), 2)
        before = log_marginal_likelihood(data, hp)
        after_hp = fit_hyperparams(data, hp, 10)
        assert log_marginal_likelihood(data, after_hp) >= before - 1e-9
        assert after_hp.noise_std == hp.noise_std


class TestDataset:
    def test_shape_validation(self):
        with pytest.raises(DimensionMismatchError):
            GpDataset(np.zeros((3, 2)), np.zeros(2))
        with pytest.raises(ValueError):
            GpDataset(np.zeros((1, 2)), np.zeros(1), capacity=0)

    def test_concat_and_subset(self):
        d = GpDataset.empty(2, capacity=5).concat([[1.0, 2.0], [3.0, 4.0]], [0.5, 0.6])
        assert len(d) == 2 and d.capacity == 5
        assert d.subset([1]).inputs.tolist() == [[3.0, 4.0]]
