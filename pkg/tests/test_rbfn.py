import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sigkit.errors import DuplicateConflict, FileNotFound, NonFiniteCost, NonPositiveWidth
from sigkit.rbfn import (
    REJECTED,
    RBFNClassifier,
    RbfnModel,
    activation,
    classify,
    cost_gradients,
    fit_exact,
    forward,
    init_model,
    load_model,
    model_from_json,
    model_to_json,
    mse,
    one_hot,
    save_model,
    train_gradient,
)


def cost_oracle(centers, widths, weights, X, D):
    """Half the summed squared error, by explicit loops."""
    total = 0.0
    for x, d in zip(X, D):
        for k in range(len(d)):
            y = 0.0
            for t, s, w in zip(centers, widths, weights):
                r2 = sum((a - b) ** 2 for a, b in zip(x, t))
                y += w[k] * math.exp(-r2 / (2 * s * s))
            total += (d[k] - y) ** 2
    return 0.5 * total


def random_instance(rng, m=2, n=4, d=3, classes=2):
    centers = rng.normal(0, 1, (m, d))
    widths = rng.uniform(0.6, 1.5, m)
    weights = rng.normal(0, 1, (m, classes))
    X = rng.normal(0, 1, (n, d))
    D = np.eye(classes)[rng.integers(0, classes, n)]
    return RbfnModel(centers, widths, weights, tuple(range(classes))), X, D


def finite_differences(model, X, D, h=1e-5):
    def cost(c, s, w):
        return cost_oracle(c, s, w, X, D)

    c0, s0, w0 = model.centers.copy(), model.widths.copy(), model.weights.copy()
    out = []
    for arr_index, base in enumerate((w0, c0, s0)):
        g = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            plus = [w0.copy(), c0.copy(), s0.copy()]
            minus = [w0.copy(), c0.copy(), s0.copy()]
            plus[arr_index][idx] += h
            minus[arr_index][idx] -= h
            g[idx] = (cost(plus[1], plus[2], plus[0]) - cost(minus[1], minus[2], minus[0])) / (2 * h)
        out.append(g)
    return out


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12)


class TestActivation:
    def test_at_center(self):
        assert activation([1.0, 2.0], [1.0, 2.0], 0.3) == 1.0

    def test_sigma_root_two(self):
        s = 0.7
        x = np.array([s * math.sqrt(2), 0.0])
        assert activation(x, [0.0, 0.0], s) == pytest.approx(math.exp(-1), abs=1e-12)

    def test_random_vs_formula(self, rng):
        for _ in range(20):
            x, t = rng.normal(0, 1, (2, 5))
            s = rng.uniform(0.1, 3)
            r2 = sum((a - b) ** 2 for a, b in zip(x, t))
            assert activation(x, t, s) == pytest.approx(math.exp(-r2 / (2 * s * s)), rel=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-3, 3), min_size=3, max_size=3),
           st.lists(st.floats(-3, 3), min_size=3, max_size=3),
           st.floats(0.05, 5))
    def test_range(self, x, t, s):
        g = activation(x, t, s)
        assert 0.0 <= g <= 1.0
        assert (g == 1.0) == (np.sum((np.array(x) - t) ** 2) / (2 * s * s) < 1e-16)

    def test_rejects_width(self):
        with pytest.raises(NonPositiveWidth):
            activation([0.0], [0.0], 0.0)


class TestForward:
    def test_single_unit(self):
        m = RbfnModel([[0.5, 0.5]], [1.0], [[3.0, -2.0]], ("a", "b"))
        assert forward(m, [0.5, 0.5]).tolist() == [3.0, -2.0]

    def test_zero_weights(self, rng):
        m = RbfnModel(rng.normal(0, 1, (3, 4)), [1, 1, 1], np.zeros((3, 2)), (0, 1))
        assert np.all(forward(m, rng.normal(0, 1, 4)) == 0)

    def test_two_units_by_hand(self):
        m = RbfnModel([[0.0], [2.0]], [1.0, 0.5], [[1.0, 2.0], [3.0, -1.0]], (0, 1))
        g1 = math.exp(-1 / 2)
        g2 = math.exp(-1 / (2 * 0.25))
        expected = [g1 * 1 + g2 * 3, g1 * 2 - g2 * 1]
        assert np.allclose(forward(m, [1.0]), expected, atol=1e-12)

    def test_linear_in_weights(self, rng):
        c = rng.normal(0, 1, (4, 3))
        s = rng.uniform(0.5, 1.5, 4)
        wa, wb = rng.normal(0, 1, (2, 4, 2))
        x = rng.normal(0, 1, 3)
        f = lambda w: forward(RbfnModel(c, s, w, (0, 1)), x)  # noqa: E731
        assert np.max(np.abs(f(wa + wb) - (f(wa) + f(wb)))) <= 1e-12

    def test_model_validation(self):
        with pytest.raises(NonPositiveWidth):
            RbfnModel([[0.0]], [0.0], [[1.0]], (0,))
        with pytest.raises(ValueError):
            RbfnModel([[0.0]], [1.0], [[1.0, 1.0]], (0, 0))


class TestFitExact:
    def test_three_points(self):
        samples = [([0.0], "a"), ([0.5], "b"), ([1.0], "c")]
        m = fit_exact(samples, 0.5)
        for x, label in samples:
            target = one_hot([label], m.class_labels)[0]
            assert np.max(np.abs(forward(m, x) - target)) <= 1e-6

    def test_interpolation_classifies(self, rng):
        X = rng.uniform(0, 1, (6, 64))
        m = fit_exact(list(zip(X, range(6))), 0.5)
        for i, x in enumerate(X):
            assert classify(m, x) == i

    def test_mse_tiny(self, rng):
        X = rng.uniform(0, 1, (100, 64))
        samples = list(zip(X, rng.integers(0, 10, 100).tolist()))
        assert mse(fit_exact(samples, 0.5), samples) <= 1e-10

    def test_duplicate_conflict(self):
        with pytest.raises(DuplicateConflict):
            fit_exact([([1.0, 2.0], "a"), ([1.0, 2.0], "b"), ([0.0, 0.0], "a")])

    def test_fewer_centers(self, rng):
        X = rng.uniform(0, 1, (12, 5))
        m = fit_exact(list(zip(X, [0, 1] * 6)), 0.8, n_centers=4)
        assert m.n_units == 4
        assert np.array_equal(m.centers, X[[0, 3, 6, 9]])


class TestGradients:
    def test_toy_vs_finite_differences(self, rng):
        model, X, D = random_instance(rng)
        cost, gw, gt, gs = cost_gradients(model, X, D)
        assert cost == pytest.approx(cost_oracle(model.centers, model.widths, model.weights, X, D),
                                     rel=1e-12)
        fw, ft, fs = finite_differences(model, X, D)
        assert rel_err(gw, fw) <= 1e-4
        assert rel_err(gt, ft) <= 1e-4
        assert rel_err(gs, fs) <= 1e-4

    def test_random_instances(self, rng):
        for _ in range(5):
            model, X, D = random_instance(rng, m=3, n=5, d=2, classes=3)
            _, gw, gt, gs = cost_gradients(model, X, D)
            for a, b in zip((gw, gt, gs), finite_differences(model, X, D)):
                assert rel_err(a, b) <= 1e-4


class TestTraining:
    def _problem(self, rng):
        X = rng.uniform(0, 1, (10, 4))
        return list(zip(X, [0, 1] * 5))

    def test_weights_only_monotone(self, rng):
        samples = self._problem(rng)
        m0 = init_model(samples, 0.5)
        _, state = train_gradient(m0, samples, (0.05, 0.0, 0.0), 200)
        h = [mse(m0, samples)] + state.history
        assert all(b < a for a, b in zip(h, h[1:]))
        assert state.epoch == 200 and state.mse == h[-1]

    def test_more_epochs_not_worse(self, rng):
        samples = self._problem(rng)
        m0 = init_model(samples, 0.5, seed=3, weight_scale=0.01)
        rates = (0.05, 0.005, 0.005)
        _, short = train_gradient(m0, samples, rates, 5)
        _, long = train_gradient(m0, samples, rates, 500)
        assert long.mse <= short.mse
        assert long.history[:5] == short.history

    def test_divergence_detected(self, rng):
        samples = self._problem(rng)
        with pytest.raises(NonFiniteCost):
            train_gradient(init_model(samples, 0.5), samples, (1e3, 1e3, 1e3), 50)

    def test_rates_validated(self, rng):
        samples = self._problem(rng)
        m0 = init_model(samples)
        with pytest.raises(ValueError):
            train_gradient(m0, samples, (0, 0, 0), 5)
        with pytest.raises(ValueError):
            train_gradient(m0, samples, (0.1, 0, 0), 0)


class TestClassifyAndMse:
    def test_zero_weights_rejected(self):
        m = RbfnModel([[0.0, 0.0]], [1.0], [[0.0, 0.0]], ("a", "b"))
        assert classify(m, [0.0, 0.0]) is REJECTED

    def test_far_probe_rejected(self, rng):
        X = rng.uniform(0, 1, (5, 8))
        m = fit_exact(list(zip(X, range(5))), 0.5)
        far = np.full(8, 50.0)
        assert np.max(forward(m, far)) < 0.5
        assert classify(m, far) is REJECTED

    def test_scale_invariance(self, rng):
        X = rng.uniform(0, 1, (5, 8))
        m = fit_exact(list(zip(X, range(5))), 0.5)
        scaled = RbfnModel(m.centers, m.widths, m.weights * 3.0, m.class_labels)
        for x in rng.uniform(0, 1, (10, 8)):
            assert classify(m, x, 0.2) == classify(scaled, x, 0.6)

    def test_zero_model_mse(self):
        samples = [([0.0], "a"), ([1.0], "b"), ([2.0], "a")]
        m = RbfnModel([[0.0]], [1.0], [[0.0, 0.0]], ("a", "b"))
        assert mse(m, samples) == 1.0

    def test_mse_vs_loops(self, rng):
        model, X, D = random_instance(rng, m=3, n=6, d=2, classes=3)
        labels = [int(np.argmax(d)) for d in D]
        expected = 2 * cost_oracle(model.centers, model.widths, model.weights, X, D) / len(X)
        assert mse(model, list(zip(X, labels))) == pytest.approx(expected, rel=1e-12)


class TestSerialization:
    def test_round_trip(self, rng, tmp_path):
        X = rng.uniform(0, 1, (6, 64))
        m = fit_exact(list(zip(X, [f"s{i:03d}" for i in range(6)])), 0.5)
        save_model(m, tmp_path / "m.json")
        back = load_model(tmp_path / "m.json")
        for x in rng.uniform(0, 1, (5, 64)):
            assert np.max(np.abs(forward(m, x) - forward(back, x))) <= 1e-12
        assert back.class_labels == m.class_labels
        assert model_to_json(back) == model_to_json(m)

    def test_format_field(self):
        m = RbfnModel([[0.0]], [1.0], [[1.0]], ("a",))
        assert '"format": 1' in model_to_json(m)
        with pytest.raises(ValueError):
            model_from_json(model_to_json(m).replace('"format": 1', '"format": 2'))

    def test_missing(self, tmp_path):
        with pytest.raises(FileNotFound):
            load_model(tmp_path / "none.json")


class TestClassifier:
    def test_fit_predict(self, rng):
        X = rng.uniform(0, 1, (9, 64))
        y = ["a", "b", "c"] * 3
        clf = RBFNClassifier().fit(X, y)
        assert list(clf.predict(X)) == y
        assert clf.decision_function(X).shape == (9, 3)

    def test_with_epochs(self, rng):
        X = rng.uniform(0, 1, (6, 4))
        clf = RBFNClassifier(epochs=3, rates=(0.01, 0.0, 0.0)).fit(X, [0, 1] * 3)
        assert clf.train_state_.epoch == 3
