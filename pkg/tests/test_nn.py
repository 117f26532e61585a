import numpy as np
import pytest

from oracles import central_diff, rel_err
from sgddpg.exceptions import DimensionMismatchError, NonFiniteError
from sgddpg.nn import (MlpParams, OptimizerState, adam_step, backward, forward, init_mlp,
                       soft_update)


def identity_net(n):
    return MlpParams([np.eye(n)], [np.zeros(n)], ("identity",))


class TestForward:
    def test_identity_layer(self, rng):
        x = rng.normal(size=4)
        np.testing.assert_array_equal(forward(identity_net(4), x), x)

    def test_zero_weights_give_bias(self):
        net = MlpParams([np.zeros((3, 2))], [np.array([0.5, -1.0])], ("identity",))
        np.testing.assert_array_equal(forward(net, [1.0, 2.0, 3.0]), [0.5, -1.0])

    def test_batch_matches_rows(self, rng):
        net = init_mlp([3, 8, 8, 2], ["relu", "tanh", "identity"], rng)
        X = rng.normal(size=(5, 3))
        out = forward(net, X)
        for i in range(5):
            np.testing.assert_allclose(out[i], forward(net, X[i]), rtol=1e-14)

    def test_manual_two_layer(self, rng):
        net = init_mlp([2, 3, 1], ["relu", "identity"], rng)
        x = rng.normal(size=2)
        h = np.maximum(x @ net.weights[0] + net.biases[0], 0)
        assert forward(net, x)[0] == pytest.approx(float(h @ net.weights[1][:, 0] + net.biases[1][0]))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            forward(identity_net(3), np.zeros(2))

    def test_non_finite_output(self):
        net = MlpParams([np.array([[np.inf]])], [np.zeros(1)], ("identity",))
        with pytest.raises(NonFiniteError):
            forward(net, [1.0])

    def test_bad_construction(self):
        with pytest.raises(ValueError):
            MlpParams([np.eye(2)], [np.zeros(2)], ("softmax",))
        with pytest.raises(DimensionMismatchError):
            MlpParams([np.eye(2), np.eye(3)], [np.zeros(2), np.zeros(3)], ("relu", "relu"))


class TestBackward:
    def test_identity_input_gradient(self, rng):
        u = rng.normal(size=3)
        _, dx = backward(identity_net(3), rng.normal(size=3), u)
        np.testing.assert_array_equal(dx, u)

    def test_relu_kink_blocks_gradient(self):
        net = MlpParams([np.array([[1.0]]), np.array([[1.0]])], [np.zeros(1), np.zeros(1)],
                        ("relu", "identity"))
        grads, dx = backward(net, [0.0], [1.0])
        assert dx[0] == 0.0 and grads[0][0, 0] == 0.0

    def test_finite_differences(self, rng):
        for _ in range(10):
            net = init_mlp([3, 6, 5, 2], ["tanh", "relu", "identity"], rng)
            X = rng.normal(size=(4, 3))
            U = rng.normal(size=(4, 2))
            grads, dx = backward(net, X, U)
            for k, p in enumerate(net.params):
                def f(v, k=k):
                    flat = [q.copy() for q in net.params]
                    flat[k] = v.reshape(p.shape)
                    return float(np.sum(U * forward(net.with_params(flat), X)))
                assert rel_err(grads[k].ravel(), central_diff(f, p.ravel()), floor=1e-6) < 1e-4
            fx = central_diff(lambda v: float(np.sum(U * forward(net, v.reshape(X.shape)))), X.ravel())
            assert rel_err(dx.ravel(), fx, floor=1e-6) < 1e-4


class TestAdam:
    def test_zero_gradient_keeps_params(self, rng):
        net = init_mlp([2, 2], ["identity"], rng)
        new, new_opt = adam_step(net, [np.zeros_like(p) for p in net.params],
                                 OptimizerState.for_net(net))
        for a, b in zip(new.params, net.params):
            np.testing.assert_array_equal(a, b)
        assert new_opt.t == 1

    def test_zero_gradient_decays_moments(self, rng):
        net = init_mlp([2, 2], ["identity"], rng)
        opt = OptimizerState.for_net(net)
        opt.m[0][:] = 1.0
        opt.v[0][:] = 1.0
        _, new_opt = adam_step(net, [np.zeros_like(p) for p in net.params], opt)
        np.testing.assert_allclose(new_opt.m[0], 0.9)
        np.testing.assert_allclose(new_opt.v[0], 0.999)

    def test_first_step_bounded(self, rng):
        net = init_mlp([3, 2], ["identity"], rng)
        opt = OptimizerState.for_net(net, lr=0.01)
        grads = [rng.normal(size=p.shape) for p in net.params]
        new, _ = adam_step(net, grads, opt)
        for a, b, g in zip(new.params, net.params, grads):
            step = a - b
            assert np.all(np.abs(step) <= 0.01 + 1e-9)
            assert np.all(np.sign(step) == -np.sign(g))

    def test_quadratic_convergence(self):
        net = MlpParams([np.array([[1.0]])], [np.zeros(1)], ("identity",))
        opt = OptimizerState.for_net(net, lr=0.1)
        for _ in range(100):
            w = net.weights[0]
            net, opt = adam_step(net, [2 * w, np.zeros(1)], opt)
        assert abs(net.weights[0][0, 0]) < 0.1

    def test_non_finite_skipped(self, rng):
        net = init_mlp([2, 1], ["identity"], rng)
        opt = OptimizerState.for_net(net)
        bad = [np.full(p.shape, np.nan) for p in net.params]
        new, new_opt = adam_step(net, bad, opt)
        assert new is net and new_opt.skipped == 1 and new_opt.t == 0

    def test_shape_mismatch(self, rng):
        net = init_mlp([2, 1], ["identity"], rng)
        with pytest.raises(DimensionMismatchError):
            adam_step(net, [np.zeros(3)], OptimizerState.for_net(net))


class TestSoftUpdate:
    def scalar(self, w):
        return MlpParams([np.array([[w]])], [np.array([w])], ("identity",))

    @pytest.mark.parametrize("tau,expected", [(1.0, 2.0), (0.0, 0.0), (0.5, 1.0)])
    def test_mixing(self, tau, expected):
        out = soft_update(self.scalar(0.0), self.scalar(2.0), tau)
        assert out.weights[0][0, 0] == expected and out.biases[0][0] == expected

    def test_architecture_mismatch(self, rng):
        with pytest.raises(DimensionMismatchError):
            soft_update(init_mlp([2, 1], ["identity"], rng), init_mlp([3, 1], ["identity"], rng), 0.1)

    def test_tau_range(self):
        with pytest.raises(ValueError):
            soft_update(self.scalar(0.0), self.scalar(1.0), 1.5)
