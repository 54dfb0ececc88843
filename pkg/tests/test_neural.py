import math

import numpy as np
import pytest

from marginkit.neural import (BIPOLAR, SIGMOID, MlpModel, RpropConfig, backprop_gradient,
                              dumps_mlp, flatten_weights, forward, init_nguyen_widrow,
                              init_uniform, load_mlp, loads_mlp, mlp_classify, mlp_predict, mse,
                              mse_and_gradient,
                              nguyen_widrow_scale, one_of_c, rprop_minimize, rprop_train,
                              save_mlp, with_weights)

XOR_X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
XOR_SIGMOID_T = np.array([[0.0], [0.0], [1.0], [1.0]])
# XOR in bipolar coding: inputs and targets in {-1, +1}
XOR_BIPOLAR_X = 2 * XOR_X - 1
XOR_BIPOLAR_T = 2 * XOR_SIGMOID_T - 1


def fd_gradient(model, X, T, step=1e-5):
    theta = flatten_weights(model)
    grad = np.empty_like(theta)
    for k in range(len(theta)):
        up, down = theta.copy(), theta.copy()
        up[k] += step
        down[k] -= step
        grad[k] = (mse(with_weights(model, up), X, T) - mse(with_weights(model, down), X, T)) / (2 * step)
    return grad


def constant_model(n, h, m, value, activation=SIGMOID):
    return MlpModel(n, h, m, np.full((h, n + 1), value), np.full((m, h + 1), value), activation)


class TestInit:
    @pytest.mark.parametrize("n,h,beta", [(2, 4, 1.4), (1, 1, 0.7)])
    def test_nguyen_widrow_beta(self, n, h, beta):
        assert nguyen_widrow_scale(n, h) == pytest.approx(beta, abs=1e-12)

    @pytest.mark.parametrize("dims", [(2, 4, 1), (1, 1, 1), (16, 30, 5)])
    def test_nguyen_widrow_norms(self, dims):
        n, h, _ = dims
        model = init_nguyen_widrow(dims, seed=4)
        beta = nguyen_widrow_scale(n, h)
        norms = np.linalg.norm(model.hidden_weights[:, :-1], axis=1)
        np.testing.assert_allclose(norms, beta, rtol=0, atol=1e-12)
        assert np.all(np.abs(model.hidden_weights[:, -1]) <= beta)
        assert np.all(np.abs(model.output_weights) <= 0.5)

    def test_uniform_bounds_and_determinism(self):
        a = init_uniform((5, 7, 3), 0.5, seed=9)
        b = init_uniform((5, 7, 3), 0.5, seed=9)
        assert np.all(np.abs(flatten_weights(a)) <= 0.5)
        np.testing.assert_array_equal(flatten_weights(a), flatten_weights(b))

    def test_uniform_zero_range_rejected(self):
        with pytest.raises(ValueError):
            init_uniform((2, 2, 1), 0.0)

    def test_layer_sizes_validated(self):
        with pytest.raises(ValueError):
            init_nguyen_widrow((0, 2, 1))


class TestForward:
    def test_zero_sigmoid(self):
        np.testing.assert_array_equal(forward(constant_model(3, 4, 2, 0.0), [1, 2, 3]), [0.5, 0.5])

    def test_zero_bipolar(self):
        np.testing.assert_array_equal(forward(constant_model(3, 4, 2, 0.0, BIPOLAR), [1, 2, 3]), [0.0, 0.0])

    def test_hand_propagation(self):
        sig = lambda z: 1 / (1 + math.exp(-z))
        out = forward(constant_model(1, 1, 1, 1.0), [0.0])
        assert out[0] == pytest.approx(sig(sig(1) + 1), abs=1e-15)
        assert out[0] == pytest.approx(0.8495, abs=1e-4)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            forward(constant_model(2, 2, 1, 0.1), [1.0])

    @pytest.mark.parametrize("activation", [SIGMOID, BIPOLAR])
    def test_range(self, activation, rng):
        for _ in range(20):
            model = init_uniform((3, 5, 2), 20.0, seed=int(rng.integers(1000)), activation=activation)
            out = forward(model, rng.normal(scale=50, size=3))
            lo, hi = model.output_range
            assert np.all((out >= lo) & (out <= hi))


class TestGradient:
    @pytest.mark.parametrize("seed", range(20))
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        n, h, m = (int(v) for v in rng.integers(1, 5, size=3))
        activation = SIGMOID if seed % 2 else BIPOLAR
        model = init_uniform((n, h, m), 1.0, seed=seed, activation=activation)
        batch = int(rng.integers(1, 6))
        X = rng.normal(size=(batch, n))
        lo, hi = model.output_range
        T = rng.uniform(lo, hi, size=(batch, m))
        analytic = backprop_gradient(model, X, T)
        numeric = fd_gradient(model, X, T)
        assert len(analytic) == h * (n + 1) + m * (h + 1)
        big = np.abs(analytic) > 1e-8
        rel = np.abs(analytic[big] - numeric[big]) / np.abs(analytic[big])
        assert np.all(rel < 1e-4)

    def test_zero_at_exact_targets(self):
        model = init_uniform((2, 3, 2), 0.5, seed=1)
        X = np.array([[0.2, -0.4], [1.0, 0.5]])
        T = np.array([forward(model, x) for x in X])
        np.testing.assert_array_equal(backprop_gradient(model, X, T), np.zeros(model.weight_count))

    def test_target_out_of_range(self):
        model = init_uniform((1, 1, 1), 0.5)
        with pytest.raises(ValueError, match="range"):
            backprop_gradient(model, [[0.0]], [[1.5]])


class TestRprop:
    def test_delta_trace_on_quadratic(self):
        # one weight, loss (w - 3)^2: steps grow by 1.2 until w overshoots, then halve
        config = RpropConfig(max_epochs=40, mse_tolerance=1e-12)
        positions = []
        theta, report = rprop_minimize(
            [0.0], lambda w: ((w[0] - 3) ** 2, np.array([2 * (w[0] - 3)])), config,
            callback=lambda e, th, loss: positions.append(th[0]), record_steps=True)
        deltas = [float(d[0]) for d in report.step_trace]
        assert deltas[0] == 0.1
        overshoot = next(k for k, w in enumerate(positions) if w > 3)
        for k in range(1, overshoot + 1):
            assert deltas[k] == pytest.approx(deltas[k - 1] * 1.2, rel=1e-12)
        assert deltas[overshoot + 1] == pytest.approx(deltas[overshoot] * 0.5, rel=1e-12)
        assert abs(theta[0] - 3) < 1e-3

    def test_sign_only_trajectory(self, rng):
        model = init_nguyen_widrow((3, 4, 2), seed=2)
        X = rng.normal(size=(12, 3))
        T = one_of_c(rng.integers(0, 2, size=12), 2)
        config = RpropConfig(max_epochs=200, mse_tolerance=1e-300)

        def run(scale):
            trajectory = []

            def objective(th):
                loss, grad = mse_and_gradient(with_weights(model, th), X, T)
                return scale * loss, scale * grad

            rprop_minimize(flatten_weights(model), objective, config,
                           callback=lambda e, th, loss: trajectory.append(th.copy()))
            return trajectory

        a, b = run(1.0), run(1000.0)
        assert len(a) == len(b) == 200
        for wa, wb in zip(a, b):
            np.testing.assert_array_equal(wa, wb)

    def test_delta_bounds(self, rng):
        config = RpropConfig(delta_max=0.3, delta_min=1e-3, max_epochs=300, mse_tolerance=1e-300)
        model = init_uniform((2, 3, 1), 0.5, seed=0)
        _, report = rprop_train(model, XOR_X, XOR_SIGMOID_T, config, record_steps=True)
        for d in report.step_trace:
            assert np.all((d >= config.delta_min) & (d <= config.delta_max))

    def test_zero_epochs_is_noop(self):
        model = init_nguyen_widrow((2, 2, 1), seed=0)
        trained, report = rprop_train(model, XOR_X, XOR_SIGMOID_T, RpropConfig(max_epochs=0))
        np.testing.assert_array_equal(flatten_weights(trained), flatten_weights(model))
        assert report.epochs_run == 0 and not report.converged and report.mse_trace == []

    def test_trace_length(self):
        model = init_nguyen_widrow((2, 2, 1), seed=0)
        _, report = rprop_train(model, XOR_X, XOR_SIGMOID_T, RpropConfig(max_epochs=50))
        assert len(report.mse_trace) == report.epochs_run
        assert report.final_mse == report.mse_trace[-1]

    def test_non_finite_loss_names_epoch(self):
        calls = iter(range(100))

        def objective(w):
            k = next(calls)
            return (math.nan if k == 3 else 1.0 / (k + 1)), np.ones(1)

        with pytest.raises(FloatingPointError, match="epoch 3"):
            rprop_minimize([0.0], objective, RpropConfig())

    def test_config_validation(self):
        with pytest.raises(ValueError):
            RpropConfig(delta_init=100.0)
        with pytest.raises(ValueError):
            RpropConfig(eta_plus=1.0)

    def test_xor_bipolar(self):
        wins = 0
        for seed in range(10):
            model = init_nguyen_widrow((2, 2, 1), seed=seed, activation=BIPOLAR)
            _, report = rprop_train(model, XOR_BIPOLAR_X, XOR_BIPOLAR_T, RpropConfig(max_epochs=1000))
            wins += report.final_mse < 0.01
        assert wins >= 8

    @pytest.mark.xfail(strict=True, reason="2-2-1 sigmoid XOR with 0/1 targets reaches MSE < 0.01 "
                                           "on 4 of seeds 0-9; the rest settle in local minima")
    def test_xor_sigmoid(self):
        wins = 0
        for seed in range(10):
            model = init_nguyen_widrow((2, 2, 1), seed=seed)
            _, report = rprop_train(model, XOR_X, XOR_SIGMOID_T, RpropConfig(max_epochs=1000))
            wins += report.final_mse < 0.01
        assert wins >= 8


class TestClassify:
    def make(self, outputs):
        # zero hidden weights; output biases chosen so sigmoid(bias) = desired output
        m = len(outputs)
        out = np.zeros((m, 2))
        out[:, -1] = [math.log(p / (1 - p)) for p in outputs]
        return MlpModel(1, 1, m, np.zeros((1, 2)), out)

    def test_argmax(self):
        assert mlp_classify(self.make([0.1, 0.9, 0.3]), [0.0], 3) == 1

    def test_tie_lowest(self):
        assert mlp_classify(self.make([0.5, 0.5]), [0.0], 2) == 0

    def test_wrong_class_count(self):
        with pytest.raises(ValueError):
            mlp_classify(self.make([0.5, 0.5]), [0.0], 3)

    def test_three_point_round_trip(self):
        X = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 3.0]])
        labels = np.array([0, 1, 2])
        model = init_nguyen_widrow((2, 4, 3), seed=1)
        trained, report = rprop_train(model, X, one_of_c(labels, 3), RpropConfig())
        assert report.final_mse < 1e-3
        np.testing.assert_array_equal(mlp_predict(trained, X), labels)
        assert [mlp_classify(trained, x, 3) for x in X] == labels.tolist()


class TestTargets:
    def test_soft_sigmoid(self):
        np.testing.assert_array_equal(one_of_c([1, 0], 2), [[0.1, 0.9], [0.9, 0.1]])

    def test_strict_bipolar(self):
        np.testing.assert_array_equal(one_of_c([1], 3, BIPOLAR, soft=False), [[-1, 1, -1]])


class TestSerialization:
    def test_round_trip(self, tmp_path):
        model = init_nguyen_widrow((4, 3, 2), seed=8, activation=BIPOLAR)
        save_mlp(model, tmp_path / "net.txt")
        back = load_mlp(tmp_path / "net.txt")
        np.testing.assert_array_equal(flatten_weights(back), flatten_weights(model))
        assert back.activation == BIPOLAR
        assert dumps_mlp(back) == dumps_mlp(model)

    def test_header(self):
        lines = dumps_mlp(init_uniform((4, 3, 2))).splitlines()
        assert lines[:2] == ["marginkit-mlp 1", "4 3 2 sigmoid"]
        assert len(lines) == 2 + 3 + 2

    def test_malformed(self):
        with pytest.raises(ValueError):
            loads_mlp("marginkit-mlp 1\n2 2 1 sigmoid\n1 2\n")
