"""Objective families: closed-form values, gradients, smoothness bounds."""

import math

import numpy as np
import pytest

from fedsim.errors import ConfigError, NumericError
from fedsim.objectives import (
    Dataset,
    Logistic,
    Quadratic,
    SmallNet,
    eval_grad,
    eval_loss,
    lipschitz_bound,
    make_batch,
    placeholder_dataset,
    quadratic_consensus_optimum,
)

from helpers import fd_gradient, rel_grad_error, tiny_dataset


class TestQuadratic:
    def test_loss_at_minimizer_is_zero(self):
        obj = Quadratic(np.array([1.0]), np.array([3.0]))
        assert eval_loss(obj, np.array([3.0]), placeholder_dataset()) == 0.0

    def test_loss_closed_form(self):
        # 0.5 * (1 - 3)^2 = 2.0
        obj = Quadratic(np.array([1.0]), np.array([3.0]))
        assert eval_loss(obj, np.array([1.0]), placeholder_dataset()) == pytest.approx(2.0)

    def test_grad_closed_form(self):
        # A (w - c) = 1 * (1.5 - 3) = -1.5
        obj = Quadratic(np.array([1.0]), np.array([3.0]))
        g = eval_grad(obj, np.array([1.5]), placeholder_dataset())
        assert g == pytest.approx(np.array([-1.5]))

    def test_full_matrix_curvature_matches_diagonal(self):
        rng = np.random.default_rng(0)
        diag = np.array([0.5, 2.0, 3.0])
        center = rng.normal(size=3)
        w = rng.normal(size=3)
        as_vec = Quadratic(diag, center)
        as_mat = Quadratic(np.diag(diag), center)
        data = placeholder_dataset()
        assert eval_loss(as_vec, w, data) == pytest.approx(eval_loss(as_mat, w, data))
        assert eval_grad(as_vec, w, data) == pytest.approx(eval_grad(as_mat, w, data))

    def test_weight_decay_enters_loss_and_grad(self):
        obj = Quadratic(np.array([1.0]), np.array([0.0]), lam=0.5)
        w = np.array([2.0])
        data = placeholder_dataset()
        assert eval_loss(obj, w, data) == pytest.approx(0.5 * 4.0 + 0.25 * 4.0)
        assert eval_grad(obj, w, data) == pytest.approx(np.array([2.0 + 1.0]))

    def test_lipschitz_is_max_eigenvalue(self):
        obj = Quadratic(np.array([2.0, 5.0]), np.zeros(2))
        assert lipschitz_bound(obj) == pytest.approx(5.0)

    def test_lipschitz_full_matrix(self):
        a = np.array([[2.0, 1.0], [1.0, 2.0]])  # eigenvalues 1 and 3
        obj = Quadratic(a, np.zeros(2), lam=0.25)
        assert lipschitz_bound(obj) == pytest.approx(3.25)

    def test_gradient_is_lipschitz(self):
        rng = np.random.default_rng(1)
        obj = Quadratic(rng.uniform(0.5, 4.0, size=6), rng.normal(size=6), lam=0.1)
        data = placeholder_dataset()
        bound = lipschitz_bound(obj)
        for _ in range(100):
            w1, w2 = rng.normal(size=6), rng.normal(size=6)
            lhs = np.linalg.norm(eval_grad(obj, w1, data) - eval_grad(obj, w2, data))
            assert lhs <= bound * np.linalg.norm(w1 - w2) * (1 + 1e-12)

    def test_rejects_asymmetric_or_indefinite_curvature(self):
        with pytest.raises(ConfigError):
            Quadratic(np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros(2))
        with pytest.raises(ConfigError):
            Quadratic(np.array([[1.0, 2.0], [2.0, 1.0]]), np.zeros(2))  # eigenvalue -1
        with pytest.raises(ConfigError):
            Quadratic(np.array([-1.0]), np.zeros(1))

    def test_consensus_optimum_closed_form(self):
        # theta* = (A1 + A2)^-1 (A1 c1 + A2 c2) = (0 + 12) / 4 = 3
        objs = [
            Quadratic(np.array([1.0]), np.array([0.0])),
            Quadratic(np.array([3.0]), np.array([4.0])),
        ]
        theta_star, f_star = quadratic_consensus_optimum(objs)
        assert theta_star == pytest.approx(np.array([3.0]))
        # f1(3) + f2(3) = 0.5*9 + 0.5*3*1 = 6.0
        assert f_star == pytest.approx(6.0)

    def test_consensus_optimum_is_stationary(self):
        rng = np.random.default_rng(2)
        objs = [
            Quadratic(rng.uniform(0.5, 2.0, size=4), rng.normal(size=4)) for _ in range(5)
        ]
        theta_star, f_star = quadratic_consensus_optimum(objs)
        data = placeholder_dataset()
        total_grad = sum(eval_grad(o, theta_star, data) for o in objs)
        assert np.linalg.norm(total_grad) <= 1e-10
        # any perturbation increases the total loss
        for _ in range(10):
            probe = theta_star + rng.normal(scale=0.1, size=4)
            assert sum(eval_loss(o, probe, data) for o in objs) >= f_star


class TestLogistic:
    def test_loss_at_zero_weights_is_log_classes(self):
        data = tiny_dataset(seed=3, n=16, p=4, classes=2)
        obj = Logistic(4, 2)
        w = np.zeros(obj.dim)
        assert eval_loss(obj, w, data) == pytest.approx(math.log(2.0), rel=1e-12)
        obj10 = Logistic(4, 10)
        data10 = tiny_dataset(seed=4, n=16, p=4, classes=10)
        assert eval_loss(obj10, np.zeros(obj10.dim), data10) == pytest.approx(
            math.log(10.0), rel=1e-12
        )

    def test_loss_matches_manual_nll(self):
        rng = np.random.default_rng(5)
        data = tiny_dataset(seed=5, n=10, p=3, classes=4)
        obj = Logistic(3, 4, lam=0.2)
        w = rng.normal(size=obj.dim)
        logits = data.features @ w.reshape(3, 4)
        probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        nll = -np.log(probs[np.arange(10), data.labels]).mean()
        expected = nll + 0.1 * float(w @ w)
        assert eval_loss(obj, w, data) == pytest.approx(expected, rel=1e-12)

    def test_zero_grad_for_symmetric_balanced_batch(self):
        # same feature row with both labels: softmax errors cancel exactly
        data = Dataset(np.array([[1.0, -2.0], [1.0, -2.0]]), np.array([0, 1]), 2)
        obj = Logistic(2, 2)
        g = eval_grad(obj, np.zeros(obj.dim), data)
        assert np.linalg.norm(g) == 0.0

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        data = tiny_dataset(seed=6, n=20, p=4, classes=3)
        obj = Logistic(4, 3, lam=0.05)
        for _ in range(5):
            w = rng.normal(size=obj.dim)
            g = eval_grad(obj, w, data)
            assert rel_grad_error(g, fd_gradient(obj, w, data)) <= 1e-5

    def test_batch_evaluation_subsets(self):
        data = tiny_dataset(seed=7, n=12, p=3, classes=2)
        obj = Logistic(3, 2)
        rng = np.random.default_rng(7)
        w = rng.normal(size=obj.dim)
        batch = make_batch(data, [0, 5, 7])
        sub = Dataset(data.features[batch], data.labels[batch], 2)
        assert eval_loss(obj, w, data, batch) == pytest.approx(eval_loss(obj, w, sub))

    def test_loss_nonnegative(self):
        rng = np.random.default_rng(8)
        data = tiny_dataset(seed=8, n=15, p=3, classes=3)
        obj = Logistic(3, 3)
        for _ in range(20):
            assert eval_loss(obj, rng.normal(size=obj.dim), data) >= 0.0

    def test_lipschitz_identity_features(self):
        # X = I_2, n = p = 2: second moment I/2, bound = 0.5 * 0.5 = 0.25
        data = Dataset(np.eye(2), np.array([0, 1]), 2)
        assert lipschitz_bound(Logistic(2, 2), data) == pytest.approx(0.25)
        assert lipschitz_bound(Logistic(2, 2, lam=0.1), data) == pytest.approx(0.35)

    def test_lipschitz_bounds_observed_curvature(self):
        rng = np.random.default_rng(9)
        data = tiny_dataset(seed=9, n=30, p=4, classes=3)
        obj = Logistic(4, 3)
        bound = lipschitz_bound(obj, data)
        for _ in range(50):
            w1, w2 = rng.normal(size=obj.dim), rng.normal(size=obj.dim)
            lhs = np.linalg.norm(eval_grad(obj, w1, data) - eval_grad(obj, w2, data))
            assert lhs <= bound * np.linalg.norm(w1 - w2) * (1 + 1e-9)

    def test_large_logits_stay_finite(self):
        data = Dataset(np.array([[1e4, -1e4]]), np.array([0]), 2)
        obj = Logistic(2, 2)
        w = np.ones(obj.dim)
        assert np.isfinite(eval_loss(obj, w, data))
        assert np.isfinite(eval_grad(obj, w, data)).all()

    def test_dimension_mismatch_is_config_error(self):
        data = tiny_dataset(seed=10)
        with pytest.raises(ConfigError):
            eval_loss(Logistic(3, 2), np.zeros(5), data)

    def test_predict_argmax(self):
        data = Dataset(np.array([[2.0, 0.0], [0.0, 2.0]]), np.array([0, 1]), 2)
        obj = Logistic(2, 2)
        w = np.eye(2).ravel()  # class j scores feature j
        assert obj.predict(w, data.features).tolist() == [0, 1]


class TestSmallNet:
    def test_parameter_count(self):
        obj = SmallNet(3, 4, 2)
        assert obj.dim == 3 * 4 + 4 + 4 * 2 + 2

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        data = tiny_dataset(seed=11, n=14, p=3, classes=3)
        obj = SmallNet(3, 5, 3, lam=0.02)
        for _ in range(5):
            w = rng.normal(scale=0.5, size=obj.dim)
            g = eval_grad(obj, w, data)
            assert rel_grad_error(g, fd_gradient(obj, w, data)) <= 1e-5

    def test_loss_nonnegative(self):
        rng = np.random.default_rng(12)
        data = tiny_dataset(seed=12, n=10, p=3, classes=2)
        obj = SmallNet(3, 4, 2)
        for _ in range(20):
            assert eval_loss(obj, rng.normal(size=obj.dim), data) >= 0.0

    def test_declared_smoothness_passthrough_with_heuristic_flag(self):
        obj = SmallNet(3, 4, 2, declared_lipschitz=10.0)
        assert lipschitz_bound(obj) == pytest.approx(10.0)
        assert obj.heuristic_smoothness is True
        assert Quadratic(np.ones(1), np.zeros(1)).heuristic_smoothness is False
        assert Logistic(3, 2).heuristic_smoothness is False


class TestDatasetAndBatches:
    def test_label_range_validated(self):
        with pytest.raises(ConfigError):
            Dataset(np.zeros((2, 2)), np.array([0, 2]), 2)
        with pytest.raises(ConfigError):
            Dataset(np.zeros((2, 2)), np.array([-1, 0]), 2)

    def test_feature_shape_validated(self):
        with pytest.raises(ConfigError):
            Dataset(np.zeros(4), np.zeros(4, dtype=np.int64), 1)
        with pytest.raises(ConfigError):
            Dataset(np.zeros((3, 2)), np.zeros(2, dtype=np.int64), 1)

    def test_nonfinite_feature_row_is_named(self):
        feats = np.zeros((3, 2))
        feats[1, 0] = np.nan
        with pytest.raises(ConfigError, match="row at index 1"):
            Dataset(feats, np.zeros(3, dtype=np.int64), 1)

    def test_make_batch_validation(self):
        data = tiny_dataset(seed=13, n=5)
        assert make_batch(data, [0, 2, 4]).tolist() == [0, 2, 4]
        with pytest.raises(ConfigError):
            make_batch(data, [])
        with pytest.raises(ConfigError):
            make_batch(data, [1, 1])
        with pytest.raises(ConfigError):
            make_batch(data, [5])

    def test_nonfinite_loss_names_offending_sample(self):
        # row 2 overflows the logits into nan; rows 0-1 stay finite
        feats = np.array([[1.0, 0.0], [0.5, 0.5], [1e308, 1e308]])
        data = Dataset(feats, np.array([0, 1, 0]), 2)
        obj = Logistic(2, 2)
        w = np.full(obj.dim, 2.0)
        with pytest.raises(NumericError, match="sample index 2"):
            with np.errstate(over="ignore", invalid="ignore"):
                eval_loss(obj, w, data)
