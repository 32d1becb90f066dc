import numpy as np
import pytest

from gradcheck import max_relative_error, numeric_gradients, random_toy_net
from bindetect import evaluation as ev
from bindetect import nn


def gaussian_clouds(n_per_class, dim=1024, separation=6.0, seed=0):
    rng = np.random.default_rng(seed)
    shift = separation / np.sqrt(dim)
    X = np.vstack([rng.normal(0, 1, (n_per_class, dim)), rng.normal(shift, 1, (n_per_class, dim))])
    y = np.r_[np.zeros(n_per_class), np.ones(n_per_class)]
    return X, y


class TestInit:
    def test_deterministic(self):
        a, b = nn.init_glorot(seed=3), nn.init_glorot(seed=3)
        for k, v in a.params().items():
            assert np.array_equal(v, b.params()[k])

    def test_variance(self):
        w = nn.init_glorot(seed=1).weights[0]
        assert w.size >= 10**6
        target = 2.0 / (1024 + 1024)
        assert abs(w.var() / target - 1.0) < 0.10

    def test_biases_zero_slopes_quarter(self):
        m = nn.init_glorot(seed=0)
        assert all((b == 0).all() for b in m.biases)
        assert all((a == 0.25).all() for a in m.prelu_slopes)
        assert [w.shape for w in m.weights] == [(1024, 1024), (1024, 1024), (1, 1024)]

    @pytest.mark.parametrize("sizes", [(0, 4, 1), (4,), (4, -1, 1)])
    def test_bad_sizes(self, sizes):
        with pytest.raises(ValueError):
            nn.init_glorot(sizes)


class TestForward:
    def test_sigmoid_at_zero(self):
        m = nn.init_glorot((3, 2, 2, 1), seed=0)
        m.weights[2][:] = 0.0
        y, _ = nn.forward(m, np.ones((4, 3)))
        assert (y == 0.5).all()

    def test_prelu_cases(self):
        a = np.array([0.25])
        assert nn.prelu(np.array([-2.0]), a)[0] == -0.5
        assert nn.prelu(np.array([2.0]), a)[0] == 2.0

    def test_keep_prob_one_train_equals_eval(self):
        m = nn.init_glorot((16, 8, 8, 1), seed=2, keep_prob=1.0)
        X = np.random.default_rng(0).normal(size=(10, 16))
        a, _ = nn.forward(m, X, training=True, rng=np.random.default_rng(1))
        b, _ = nn.forward(m, X, training=False)
        assert np.array_equal(a, b)

    def test_shape_mismatch(self):
        m = nn.init_glorot((16, 8, 8, 1), seed=2)
        with pytest.raises(ValueError):
            nn.forward(m, np.zeros((3, 15)))

    def test_outputs_in_open_interval(self):
        m = nn.init_glorot((16, 8, 8, 1), seed=2)
        y = nn.predict(m, np.random.default_rng(0).normal(size=(50, 16)))
        assert ((y > 0) & (y < 1)).all()

    def test_dropout_expectation(self):
        m = nn.init_glorot((1, 1, 1, 1), seed=0, keep_prob=0.8)
        rng = np.random.default_rng(5)
        y = np.linspace(0.5, 2.0, 64)
        draws = np.stack([y * nn.sample_masks(m, 1, rng)[0][0, 0] for _ in range(20000)])
        np.testing.assert_allclose(draws.mean(axis=0), y, rtol=0.01)


class TestLoss:
    def test_half(self):
        assert nn.loss([0.5], [1]) == pytest.approx(0.693147, abs=1e-6)

    def test_point_nine(self):
        assert nn.loss([0.9], [1]) == pytest.approx(0.105361, abs=1e-6)

    def test_clamped_perfect(self):
        l = nn.loss([1.0, 0.0], [1, 0])
        assert l > 0
        assert l == pytest.approx(2e-7, rel=1e-3)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            nn.loss([0.5, 0.5], [1])


class TestBackward:
    @pytest.mark.parametrize("seed", range(20))
    def test_finite_differences(self, seed):
        m, X, y, masks = random_toy_net(seed)
        _, cache = nn.forward(m, X, masks=masks)
        analytic = nn.backward(m, y, cache)
        assert max_relative_error(analytic, numeric_gradients(m, X, y, masks)) < 1e-4

    def test_all_positive_preactivations_zero_slope_grad(self):
        m = nn.init_glorot((4, 3, 3, 1), seed=0, keep_prob=1.0)
        for w in m.weights:
            w[:] = np.abs(w)
        X = np.abs(np.random.default_rng(0).normal(size=(6, 4))) + 0.1
        _, cache = nn.forward(m, X)
        g = nn.backward(m, np.ones(6), cache)
        assert (g["a1"] == 0).all() and (g["a2"] == 0).all()

    def test_duplicate_sample_doubles_gradient(self):
        m = nn.init_glorot((1024, 1024, 1024, 1), seed=4, keep_prob=1.0)
        x = np.random.default_rng(3).normal(size=(1, 1024))
        g1 = nn.backward(m, [1.0], nn.forward(m, x)[1])
        g2 = nn.backward(m, [1.0, 1.0], nn.forward(m, np.vstack([x, x]))[1])
        for k in g1:
            assert np.array_equal(2 * g1[k], g2[k]), k

    def test_dropped_units_get_no_weight_gradient(self):
        m, X, y, masks = random_toy_net(0)
        masks[0][:, 2] = 0.0   # input unit 2 dropped for every sample
        g = nn.backward(m, y, nn.forward(m, X, masks=masks)[1])
        assert (g["W1"][:, 2] == 0).all()


class TestAdam:
    def _one_param_model(self, values):
        m = nn.init_glorot((2, 1, 1, 1), seed=0)
        m.weights[0][:] = values
        return m

    def _grads(self, m, w1):
        g = {k: np.zeros_like(v) for k, v in m.params().items()}
        g["W1"] = np.asarray(w1, dtype=float).reshape(m.weights[0].shape)
        return g

    def test_first_step_is_lr_times_sign(self):
        m = self._one_param_model([[1.0, -1.0]])
        before = m.weights[0].copy()
        nn.adam_step(m, nn.AdamState(), self._grads(m, [[0.3, -2.0]]))
        delta = m.weights[0] - before
        np.testing.assert_allclose(delta, [[-1e-3, 1e-3]], atol=1e-9)
        assert np.round(delta, 6).tolist() == [[-0.001, 0.001]]

    def test_zero_gradient(self):
        m = self._one_param_model([[1.0, 2.0]])
        state = nn.AdamState()
        before = {k: v.copy() for k, v in m.params().items()}
        nn.adam_step(m, state, self._grads(m, [[0.0, 0.0]]))
        assert state.t == 1
        for k, v in m.params().items():
            assert np.array_equal(v, before[k])
        nn.adam_step(m, state, self._grads(m, [[0.0, 0.0]]))
        assert state.t == 2

    def test_per_parameter_normalisation(self):
        m = self._one_param_model([[0.0, 0.0]])
        nn.adam_step(m, nn.AdamState(), self._grads(m, [[0.01, 1.0]]))
        a, b = m.weights[0][0]
        assert abs(a) == pytest.approx(abs(b), rel=1e-5)

    def test_second_moment_nonnegative(self):
        m = self._one_param_model([[0.0, 0.0]])
        state = nn.AdamState()
        rng = np.random.default_rng(0)
        for _ in range(10):
            nn.adam_step(m, state, self._grads(m, rng.normal(size=(1, 2))))
        assert all((v >= 0).all() for v in state.v.values())

    def test_shape_mismatch(self):
        m = self._one_param_model([[0.0, 0.0]])
        g = self._grads(m, [[0.0, 0.0]])
        g["W1"] = np.zeros((2, 2))
        with pytest.raises(ValueError):
            nn.adam_step(m, nn.AdamState(), g)


class TestTrain:
    def test_xor_embedded(self):
        X = np.zeros((4, 1024))
        X[:, :2] = [[0, 0], [0, 1], [1, 0], [1, 1]]
        y = np.array([0.0, 1.0, 1.0, 0.0])
        m = nn.init_glorot(seed=0, keep_prob=1.0)
        result = nn.train(m, X, y, epochs=2000, stop_train_error=0.0025, batch_size=4, seed=0)
        assert result.epochs_run <= 2000
        assert nn.loss(nn.predict(result.model, X), y) < 0.01

    def test_gaussian_clouds_training_auc(self):
        X, y = gaussian_clouds(500, seed=1)
        result = nn.train(nn.init_glorot(seed=1), X, y, seed=1)
        roc = ev.roc_curve(nn.predict(result.model, X), y)
        assert roc.auc >= 0.999

    def test_deterministic_history(self):
        X, y = gaussian_clouds(60, dim=32, seed=2)
        runs = [nn.train(nn.init_glorot((32, 16, 16, 1), seed=5), X, y, epochs=5, seed=5)
                for _ in range(2)]
        assert runs[0].loss_history == runs[1].loss_history
        for k, v in runs[0].model.params().items():
            assert np.array_equal(v, runs[1].model.params()[k])

    def test_loss_decreases_first_50_steps(self):
        # trainer's batching, objective measured on the full set without dropout
        X, y = gaussian_clouds(500, seed=0)
        m = nn.init_glorot(seed=0)
        rng = np.random.default_rng([0, 1])
        state = nn.AdamState()
        losses = []
        while len(losses) < 50:
            order = rng.permutation(len(X))
            for start in range(0, len(X), 256):
                idx = order[start:start + 256]
                _, cache = nn.forward(m, X[idx], training=True, rng=rng)
                nn.adam_step(m, state, nn.backward(m, y[idx], cache))
                losses.append(nn.loss(nn.predict(m, X), y))
                if len(losses) == 50:
                    break
        smooth = np.convolve(losses, np.ones(10) / 10, mode="valid")
        assert (np.diff(smooth) <= 0).all()
        assert smooth[-1] < 0.01 * smooth[0]

    def test_single_class_refused(self):
        with pytest.raises(ValueError, match="single class"):
            nn.train(nn.init_glorot((4, 3, 3, 1)), np.zeros((5, 4)), np.ones(5))

    def test_stop_rule(self):
        X, y = gaussian_clouds(200, dim=64, separation=20, seed=4)
        result = nn.train(nn.init_glorot((64, 32, 32, 1), seed=4), X, y, seed=4)
        assert result.stopped_early
        assert result.loss_history[-1] < 0.02
        assert all(h >= 0.02 for h in result.loss_history[:-1])

    def test_parameters_finite(self):
        X, y = gaussian_clouds(100, dim=64, seed=6)
        result = nn.train(nn.init_glorot((64, 32, 32, 1), seed=6), X * 50, y, epochs=20, seed=6)
        assert result.model.all_finite()


class TestPredict:
    def test_matches_eval_forward(self):
        m = nn.init_glorot((32, 16, 16, 1), seed=7)
        rng = np.random.default_rng(0)
        for _ in range(3):
            X = rng.normal(size=(20, 32))
            assert np.array_equal(nn.predict(m, X), nn.forward(m, X, training=False)[0])

    def test_monotone_in_output_bias(self):
        m = nn.init_glorot((32, 16, 16, 1), seed=7)
        X = np.random.default_rng(1).normal(size=(20, 32))
        prev = nn.predict(m, X)
        for _ in range(5):
            m.biases[-1] += 0.5
            cur = nn.predict(m, X)
            assert (cur > prev).all()
            prev = cur

    def test_row_independent(self):
        m = nn.init_glorot(seed=8)
        X = np.random.default_rng(2).normal(size=(40, 1024))
        full = nn.predict(m, X)
        for i in range(40):
            assert nn.predict(m, X[i:i + 1])[0] == full[i]
