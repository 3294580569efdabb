"""Numeric-core tests: forward oracles, finite-difference gradients, Adam,
and checkpoint round-trips."""

import json

import numpy as np
import pytest

from ela.nn import Mlp, ParamStore, Tensor, adam_update, load_params, save_params
from ela.nn import tensor as T
from ela.nn.gradcheck import max_gradient_error
from ela.nn.layers import GruCell


def make_mlp(sizes, rng, **kwargs):
    store = ParamStore()
    return store, Mlp(store, "net", sizes, rng, **kwargs)


def mlp_reference(weights, biases, x, activation=np.tanh):
    """Straight-line reimplementation of the affine/activation stack."""
    out = x
    for i, (w, b) in enumerate(zip(weights, biases)):
        out = out @ w + b
        if i != len(weights) - 1:
            out = activation(out)
    return out


class TestMlpForward:
    def test_zero_weights_give_zero_output(self):
        store, mlp = make_mlp([4, 3], np.random.default_rng(0))
        mlp.weights[0].data[:] = 0.0
        out = mlp.forward(T.constant(np.random.default_rng(1).normal(size=(5, 4))))
        np.testing.assert_array_equal(out.data, np.zeros((5, 3)))

    def test_identity_configuration(self):
        store, mlp = make_mlp([3, 3], np.random.default_rng(0))
        mlp.weights[0].data[:] = np.eye(3)
        x = np.random.default_rng(2).normal(size=(4, 3))
        np.testing.assert_array_equal(mlp.forward(T.constant(x)).data, x)

    def test_matches_straight_line_oracle(self):
        rng = np.random.default_rng(3)
        store, mlp = make_mlp([5, 7, 2], rng)
        x = rng.normal(size=(6, 5))
        expected = mlp_reference(
            [w.data for w in mlp.weights], [b.data for b in mlp.biases], x
        )
        np.testing.assert_allclose(mlp.forward(T.constant(x)).data, expected, atol=1e-12)

    def test_shape_mismatch_reports_layer(self):
        store, mlp = make_mlp([5, 2], np.random.default_rng(0))
        with pytest.raises(ValueError, match="layer 0"):
            mlp.forward(T.constant(np.zeros((3, 4))))


def gru_reference(x, h, w, u, b):
    """Step-by-step gate equations, independent of the fused op."""
    hid = h.shape[1]
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    r = sig(x @ w[:, :hid] + h @ u[:, :hid] + b[:hid])
    z = sig(x @ w[:, hid : 2 * hid] + h @ u[:, hid : 2 * hid] + b[hid : 2 * hid])
    n = np.tanh(x @ w[:, 2 * hid :] + r * (h @ u[:, 2 * hid :]) + b[2 * hid :])
    return z * h + (1.0 - z) * n


class TestGruStep:
    def test_saturated_update_gate_carries_state(self):
        rng = np.random.default_rng(4)
        store = ParamStore()
        cell = GruCell(store, "gru", 3, 4, rng)
        cell.b.data[4:8] = 50.0  # update-gate bias block
        h = rng.normal(size=(2, 4))
        out = cell.step(T.constant(h), T.constant(rng.normal(size=(2, 3))))
        np.testing.assert_allclose(out.data, h, atol=1e-12)

    def test_zero_params_zero_state_fixed_point(self):
        store = ParamStore()
        cell = GruCell(store, "gru", 3, 4, np.random.default_rng(0))
        for p in (cell.w, cell.u, cell.b):
            p.data[:] = 0.0
        out = cell.step(T.constant(np.zeros((2, 4))), T.constant(np.ones((2, 3))))
        np.testing.assert_array_equal(out.data, np.zeros((2, 4)))

    def test_matches_gate_equation_oracle(self):
        rng = np.random.default_rng(5)
        store = ParamStore()
        cell = GruCell(store, "gru", 4, 3, rng)
        x, h = rng.normal(size=(6, 4)), rng.normal(size=(6, 3))
        expected = gru_reference(x, h, cell.w.data, cell.u.data, cell.b.data)
        np.testing.assert_allclose(
            cell.step(T.constant(h), T.constant(x)).data, expected, atol=1e-12
        )

    def test_output_bounded_when_state_is(self):
        rng = np.random.default_rng(6)
        store = ParamStore()
        cell = GruCell(store, "gru", 2, 5, rng)
        h = rng.uniform(-1, 1, size=(8, 5))
        out = cell.step(T.constant(h), T.constant(rng.normal(size=(8, 2))))
        assert np.all(np.abs(out.data) < 1.0 + 1e-12)


def kl_numerical_1d(mu_q, sig_q, mu_p, sig_p):
    """Quadrature oracle for one-dimensional Gaussian KL."""
    lo = min(mu_q - 12 * sig_q, mu_p - 12 * sig_p)
    hi = max(mu_q + 12 * sig_q, mu_p + 12 * sig_p)
    x = np.linspace(lo, hi, 200_001)
    log_q = -0.5 * ((x - mu_q) / sig_q) ** 2 - np.log(sig_q * np.sqrt(2 * np.pi))
    log_p = -0.5 * ((x - mu_p) / sig_p) ** 2 - np.log(sig_p * np.sqrt(2 * np.pi))
    return np.trapezoid(np.exp(log_q) * (log_q - log_p), x)


class TestDiagGaussianKl:
    def _kl(self, mu_q, ls_q, mu_p, ls_p):
        args = [T.constant(np.atleast_2d(np.asarray(a, dtype=float))) for a in (mu_q, ls_q, mu_p, ls_p)]
        return float(T.diag_gaussian_kl(*args).data[0])

    def test_identical_distributions_give_zero(self):
        rng = np.random.default_rng(7)
        mu, ls = rng.normal(size=4), rng.normal(size=4)
        assert self._kl(mu, ls, mu, ls) == 0.0

    def test_standard_pair_is_half(self):
        # KL(N(0,1) || N(1,1)) = 0.5; cross-checked by quadrature.
        assert self._kl([0.0], [0.0], [1.0], [0.0]) == pytest.approx(0.5, abs=1e-12)
        assert kl_numerical_1d(0.0, 1.0, 1.0, 1.0) == pytest.approx(0.5, abs=1e-6)

    def test_nonnegative_on_random_pairs(self):
        rng = np.random.default_rng(8)
        for _ in range(1000):
            mu_q, mu_p = rng.normal(size=(2, 3))
            ls_q, ls_p = rng.uniform(-1.5, 1.5, size=(2, 3))
            assert self._kl(mu_q, ls_q, mu_p, ls_p) >= 0.0

    def test_matches_quadrature_on_random_pairs(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            mu_q, mu_p = rng.normal(size=2)
            sig_q, sig_p = np.exp(rng.uniform(-1, 1, size=2))
            ours = self._kl([mu_q], [np.log(sig_q)], [mu_p], [np.log(sig_p)])
            oracle = kl_numerical_1d(mu_q, sig_q, mu_p, sig_p)
            assert ours == pytest.approx(oracle, abs=1e-6)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            T.diag_gaussian_kl(
                T.constant(np.zeros((1, 2))),
                T.constant(np.zeros((1, 2))),
                T.constant(np.zeros((1, 3))),
                T.constant(np.zeros((1, 3))),
            )


class TestCrossEntropy:
    def test_uniform_logits_give_log_action_count(self):
        logits = T.constant(np.zeros((2, 3)))
        target = T.constant(np.array([[1.0, 0, 0], [0, 0, 1.0]]))
        np.testing.assert_allclose(
            T.softmax_cross_entropy(logits, target).data, np.log(3.0), atol=1e-12
        )

    def test_confident_correct_prediction_vanishes(self):
        logits = T.constant(np.array([[200.0, 0.0, 0.0]]))
        target = T.constant(np.array([[1.0, 0.0, 0.0]]))
        assert float(T.softmax_cross_entropy(logits, target).data[0]) < 1e-12

    def test_matches_log_sum_exp_oracle(self):
        rng = np.random.default_rng(10)
        logits = rng.normal(size=(20, 5))
        targets = rng.integers(5, size=20)
        onehot = np.eye(5)[targets]
        expected = np.log(np.exp(logits).sum(axis=1)) - logits[np.arange(20), targets]
        got = T.softmax_cross_entropy(T.constant(logits), T.constant(onehot)).data
        np.testing.assert_allclose(got, expected, atol=1e-10)

    def test_rejects_non_onehot_target(self):
        with pytest.raises(ValueError, match="one-hot"):
            T.softmax_cross_entropy(
                T.constant(np.zeros((1, 3))), T.constant(np.array([[0.5, 0.5, 0.0]]))
            )

    def test_probability_floor_bounds_loss(self):
        logits = T.constant(np.array([[0.0, 2000.0]]))
        target = T.constant(np.array([[1.0, 0.0]]))
        loss = float(T.softmax_cross_entropy(logits, target).data[0])
        assert loss == pytest.approx(-np.log(1e-12))


class TestBackward:
    def test_constant_loss_leaves_zero_gradients(self):
        store = ParamStore()
        w = store.add("w", np.ones(3))
        store.zero_grad()
        loss = T.sum_all(T.mul(T.constant(np.zeros(3)), T.constant(np.ones(3))))
        loss.backward()
        np.testing.assert_array_equal(w.grad, np.zeros(3))

    def test_quadratic_gradient_is_identity(self):
        w = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
        loss = T.scale(T.sum_all(T.mul(w, w)), 0.5)
        loss.backward()
        np.testing.assert_allclose(w.grad, w.data, atol=1e-15)

    def test_backward_requires_scalar(self):
        w = Tensor(np.zeros((2, 2)), requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            T.tanh(w).backward()

    def test_gradient_accumulates_across_shared_use(self):
        w = Tensor(np.array([2.0]), requires_grad=True)
        loss = T.sum_all(T.add(w, w))
        loss.backward()
        np.testing.assert_allclose(w.grad, [2.0])

    def test_non_finite_values_are_trapped(self):
        with np.errstate(over="ignore"), pytest.raises(FloatingPointError):
            T.exp(T.constant(np.array([1e4])))

    def test_primitive_gradients_match_finite_differences(self):
        rng = np.random.default_rng(11)
        x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        w = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
        b = Tensor(rng.normal(size=2), requires_grad=True)

        def build():
            out = T.tanh(T.affine(x, w, b))
            out = T.softplus(T.slice_cols(out, 0, 1))
            return T.mean_all(T.exp(T.scale(out, 0.3)))

        assert max_gradient_error(build, {"x": x, "w": w, "b": b}) < 1e-6


class TestAdam:
    def test_zero_gradient_keeps_parameters(self):
        store = ParamStore()
        w = store.add("w", np.array([1.0, 2.0]))
        store.zero_grad()
        adam_update(store, lr=0.1)
        np.testing.assert_array_equal(w.data, [1.0, 2.0])

    def test_constant_gradient_step_magnitude_approaches_lr(self):
        # With a constant gradient g, bias correction makes the update
        # exactly lr * g / (|g| + eps) from the very first step.
        store = ParamStore()
        w = store.add("w", np.zeros(3))
        g = np.array([0.5, -2.0, 7.0])
        lr = 0.01
        previous = w.data.copy()
        for _ in range(5):
            w.grad = g.copy()
            adam_update(store, lr=lr)
            delta = w.data - previous
            np.testing.assert_allclose(
                np.abs(delta), lr * np.abs(g) / (np.abs(g) + 1e-8), rtol=1e-9
            )
            previous = w.data.copy()

    def test_identical_stores_update_identically(self):
        def run():
            store = ParamStore()
            w = store.add("w", np.array([1.0, -1.0]))
            for step in range(5):
                w.grad = np.array([0.3, 0.7]) * (step + 1)
                adam_update(store, lr=0.05)
            return w.data.copy()

        np.testing.assert_array_equal(run(), run())

    def test_missing_gradient_is_an_error(self):
        store = ParamStore()
        store.add("w", np.zeros(2))
        with pytest.raises(ValueError, match="no gradient"):
            adam_update(store)


class TestCheckpoint:
    def test_round_trip_preserves_values_and_meta(self, tmp_path):
        rng = np.random.default_rng(12)
        store = ParamStore()
        store.add("a.w", rng.normal(size=(3, 2)))
        store.add("a.b", rng.normal(size=2))
        path = tmp_path / "model.ckpt"
        save_params(store, path, {"kind": "test", "width": 3})
        loaded, meta = load_params(path)
        assert meta == {"kind": "test", "width": 3}
        for name in store.names():
            np.testing.assert_array_equal(loaded[name].data, store[name].data)

    def test_serialization_is_byte_stable(self, tmp_path):
        store = ParamStore()
        store.add("w", np.array([[0.1, -2.5e-7], [3.0, 4.0]]))
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_params(store, p1, {"kind": "t"})
        save_params(store, p2, {"kind": "t"})
        assert p1.read_bytes() == p2.read_bytes()

    def test_version_check(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_text(json.dumps({"format_version": 99, "params": {}}))
        with pytest.raises(ValueError, match="format_version"):
            load_params(path)
