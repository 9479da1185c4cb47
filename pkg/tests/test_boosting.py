import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ugbdt.boosting import (
    Bernoulli,
    GBMModel,
    LossSpec,
    Normal,
    TrainConfig,
    distribution_from_raw,
    gradient_logistic,
    natural_gradient_normal,
    nll,
    normal_nll,
    normal_nll_gradient,
    predict_distribution,
    predict_raw,
    train,
)
from ugbdt.errors import DataError, ValidationError
from ugbdt.tree import DecisionTree

LOGISTIC = LossSpec("logistic")
NORMAL = LossSpec("normal_nll")


def constant_tree(value, n_features=1):
    value = np.atleast_1d(np.asarray(value, dtype=float))
    return DecisionTree(
        np.array([-1], dtype=np.int32), np.zeros(1), np.array([-1], dtype=np.int32),
        np.array([-1], dtype=np.int32), value.reshape(1, -1), np.array([1]), n_features,
    )


def toy_model(tree_values, epsilon, gamma, f0=0.0):
    trees = tuple(constant_tree(v) for v in tree_values)
    return GBMModel(LOGISTIC, trees, epsilon, gamma, np.array([f0]), 1)


def regression_data(n=300, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 2, size=(n, 3))
    y = np.sin(X[:, 0]) + 0.1 * (1 + np.abs(X[:, 1])) * rng.standard_normal(n)
    return X, y


class TestLossSpec:
    def test_task_mapping(self):
        assert LossSpec.for_task("regression") == NORMAL
        assert LossSpec.for_task("binary_classification") == LOGISTIC
        assert NORMAL.d_out == 2 and LOGISTIC.d_out == 1


class TestTrainConfig:
    def test_sglb_defaults(self):
        cfg = TrainConfig().resolved(400)
        assert (cfg.T, cfg.beta, cfg.gamma, cfg.sample_rate) == (1000, 400.0, 1 / 800, 1.0)

    def test_sgb_defaults(self):
        cfg = TrainConfig(mode="sgb").resolved(400)
        assert cfg.sample_rate == 0.5 and cfg.gamma == 0.0

    def test_invalid(self):
        with pytest.raises(ValidationError):
            TrainConfig(mode="sgb", sample_rate=1.5).resolved(10)
        with pytest.raises(ValidationError):
            TrainConfig(mode="sgb", gamma=0.1).resolved(10)
        with pytest.raises(ValidationError):
            TrainConfig(mode="sglb", sample_rate=0.5).resolved(10)
        with pytest.raises(ValidationError):
            TrainConfig(mode="sglb", epsilon=1.0, gamma=1.0).resolved(10)
        with pytest.raises(ValidationError):
            TrainConfig(mode="other")
        with pytest.raises(ValidationError):
            TrainConfig(epsilon=0.0)

    def test_dict_round_trip(self):
        cfg = TrainConfig(beta=math.inf, gamma=0.0, seed=4)
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg
        assert cfg.digest() == TrainConfig.from_dict(cfg.to_dict()).digest()


class TestGradients:
    def test_natural_gradient_examples(self):
        np.testing.assert_allclose(natural_gradient_normal(0.0, 0.0, 2.0), [-2.0, -1.5], atol=1e-15)
        assert natural_gradient_normal(1.3, 0.4, 1.3)[0] == 0.0
        sigma = math.exp(0.4)
        assert natural_gradient_normal(1.0, 0.4, 1.0 + sigma)[1] == pytest.approx(0.0, abs=1e-15)
        assert natural_gradient_normal(1.0, 0.4, 1.0 - sigma)[1] == pytest.approx(0.0, abs=1e-15)

    def test_logistic_examples(self):
        assert gradient_logistic(0.0, 1.0) == -0.5
        assert gradient_logistic(0.0, 0.0) == 0.5
        assert abs(gradient_logistic(20.0, 1.0)) < 1e-6

    @settings(max_examples=100, deadline=None)
    @given(
        st.floats(-5, 5), st.floats(-2, 2), st.floats(-5, 5),
    )
    def test_ordinary_gradient_finite_difference(self, mu, log_sigma, y):
        h = 1e-5
        f = lambda m, s: normal_nll(m, np.exp(s), y)
        fd = np.array([(f(mu + h, log_sigma) - f(mu - h, log_sigma)) / (2 * h),
                       (f(mu, log_sigma + h) - f(mu, log_sigma - h)) / (2 * h)])
        g = normal_nll_gradient(mu, log_sigma, y)
        np.testing.assert_allclose(fd, g, rtol=1e-4, atol=1e-6)


class TestPredictRaw:
    def test_plain_sum(self):
        assert predict_raw(toy_model([1, 1], 0.1, 0.0), np.zeros(1))[0] == pytest.approx(0.2, abs=1e-15)

    def test_single_shrunk_tree(self):
        # gamma * eps = 0.5
        assert predict_raw(toy_model([1], 0.1, 5.0), np.zeros(1))[0] == pytest.approx(0.1, abs=1e-15)

    def test_two_shrunk_trees(self):
        # 0.1 * (0.5 * 1 + 1 * 1)
        assert predict_raw(toy_model([1, 1], 0.1, 5.0), np.zeros(1))[0] == pytest.approx(0.15, abs=1e-15)

    def test_f0_decays(self):
        m = toy_model([0, 0, 0], 0.5, 1.0, f0=2.0)
        assert predict_raw(m, np.zeros(1))[0] == pytest.approx(2.0 * 0.5**3)

    def test_matches_training_trajectory(self):
        X, y = regression_data(200)
        seen = {}
        model = train(X, y, TrainConfig(T=30, epsilon=0.2, max_depth=3, seed=5), callback=lambda t, F: seen.__setitem__(t, F.copy()))
        np.testing.assert_allclose(predict_raw(model, X), seen[30], rtol=0, atol=1e-10)


class TestDistributions:
    def test_raw_to_params(self):
        d = distribution_from_raw(np.array([0.0, 0.0]), NORMAL)
        assert (d.mu, d.sigma) == (0.0, 1.0)
        d = distribution_from_raw(np.array([1.2, math.log(2.0)]), NORMAL)
        assert d.mu == 1.2 and d.sigma == pytest.approx(2.0, abs=1e-15)
        assert distribution_from_raw(np.array([0.0]), LOGISTIC).p == 0.5

    def test_nll_values(self):
        assert nll(Normal(0.0, 1.0), 0.0) == pytest.approx(0.9189385332046727, abs=1e-15)
        assert nll(Bernoulli(0.5), 1.0) == pytest.approx(math.log(2), abs=1e-15)
        assert nll(Bernoulli(0.5), 0.0) == pytest.approx(math.log(2), abs=1e-15)
        assert nll(Normal(3.0, 2.5), 3.0) == pytest.approx(0.5 * math.log(2 * math.pi * 6.25), abs=1e-15)


class TestTrain:
    def test_zero_trees_predict_f0(self):
        X, y = regression_data(50)
        model = train(X, y, TrainConfig(T=0))
        np.testing.assert_array_equal(predict_raw(model, X), np.tile(model.f0, (50, 1)))

    def test_sglb_zero_noise_equals_full_sgb(self):
        X, y = regression_data(150, seed=3)
        a = train(X, y, TrainConfig(mode="sglb", T=40, epsilon=0.1, max_depth=3, beta=math.inf, gamma=0.0, seed=9))
        b = train(X, y, TrainConfig(mode="sgb", T=40, epsilon=0.1, max_depth=3, sample_rate=1.0, seed=9))
        np.testing.assert_allclose(predict_raw(a, X), predict_raw(b, X), rtol=0, atol=1e-9)

    def test_constant_target(self):
        X = np.random.default_rng(0).normal(size=(100, 2))
        c = 3.7
        model = train(X, np.full(100, c), TrainConfig(mode="sgb", T=200, epsilon=0.1))
        mu = predict_distribution(model, X).mu
        assert np.all(np.abs(mu - c) <= abs(c) * 1e-3 + 1e-3)

    def test_training_nll_decreases_without_noise(self):
        X, y = regression_data(300)
        losses = []
        cfg = TrainConfig(mode="sgb", T=50, epsilon=0.1, max_depth=3, sample_rate=1.0)

        def track(t, F):
            losses.append(normal_nll(F[:, 0], np.exp(F[:, 1]), y).mean())

        train(X, y, cfg, callback=track)
        assert losses[-1] < losses[0]
        assert np.all(np.diff(losses) <= 1e-12)

    def test_deterministic(self):
        X, y = regression_data(120)
        for mode in ("sgb", "sglb"):
            cfg = TrainConfig(mode=mode, T=20, max_depth=3, seed=2)
            np.testing.assert_array_equal(predict_raw(train(X, y, cfg), X), predict_raw(train(X, y, cfg), X))

    def test_seed_changes_sglb(self):
        X, y = regression_data(120)
        a = predict_raw(train(X, y, TrainConfig(T=10, max_depth=3, seed=0)), X)
        b = predict_raw(train(X, y, TrainConfig(T=10, max_depth=3, seed=1)), X)
        assert not np.array_equal(a, b)

    def test_classification(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(400, 2))
        y = (X[:, 0] + 0.3 * rng.normal(size=400) > 0).astype(float)
        model = train(X, y, TrainConfig(T=100, max_depth=3), LOGISTIC)
        p = predict_distribution(model, X).p
        assert np.mean((p >= 0.5) == (y == 1)) > 0.9
        assert model.d_out == 1 and all(t.d_out == 1 for t in model.trees)

    def test_bad_inputs(self):
        X, y = regression_data(10)
        with pytest.raises(DataError):
            train(X, y[:5], TrainConfig(T=1))
        with pytest.raises(DataError):
            train(X, y, TrainConfig(T=1), LOGISTIC)
        with pytest.raises(DataError):
            train(X[:0], y[:0], TrainConfig(T=1))

    def test_provenance(self):
        X, y = regression_data(40)
        cfg = TrainConfig(T=3, max_depth=2, seed=8)
        model = train(X, y, cfg)
        assert model.provenance["mode"] == "sglb" and model.provenance["seed"] == 8
        assert model.provenance["config_digest"] == cfg.resolved(40).digest()
