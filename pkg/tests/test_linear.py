import math

import numpy as np
import pytest

from queryfeat.errors import DataError
from queryfeat.extract import FeatureMatrix
from queryfeat.linear import (
    LinearModel,
    TrainConfig,
    decision_logits,
    explain,
    loss_gradient,
    predict_proba,
    prune,
    regularized_loss,
    train,
)
from queryfeat.metrics import auroc

# independently evaluated at 60-digit precision, rounded to float64
SIGMOID_1 = 0.7310585786300049


def model_with(weights, intercept=0.0, ids=None):
    ids = ids or tuple(f"q{i}" for i in range(len(weights)))
    return LinearModel(
        query_ids=tuple(ids),
        weights=np.asarray(weights, dtype=np.float64),
        intercept=intercept,
        task="t",
        train_fingerprint="test",
    )


class TestLossAndGradient:
    def test_gradient_at_origin_single_sample(self):
        # d/dw log(1+exp(-y~ w.f)) at w=0 is (sigma(0) - y) f = (0.5 - y) f
        f = np.array([[0.3, 0.8]])
        for y in (0, 1):
            grad_w, grad_b = loss_gradient(np.zeros(2), 0.0, f, np.array([y]), 0.0)
            np.testing.assert_allclose(grad_w, (0.5 - y) * f[0], rtol=1e-12)
            assert grad_b == pytest.approx(0.5 - y, rel=1e-12)

    def test_analytic_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2024)
        h = 1e-6
        for _ in range(50):
            n, d = int(rng.integers(2, 20)), int(rng.integers(1, 6))
            X = rng.random((n, d))
            y = rng.integers(0, 2, size=n).astype(float)
            w = rng.normal(scale=2.0, size=d)
            b = float(rng.normal(scale=2.0))
            lam = float(rng.uniform(0, 0.01))
            grad_w, grad_b = loss_gradient(w, b, X, y, lam)
            for j in range(d):
                e = np.zeros(d)
                e[j] = h
                numeric = (
                    regularized_loss(w + e, b, X, y, lam)
                    - regularized_loss(w - e, b, X, y, lam)
                ) / (2 * h)
                assert abs(grad_w[j] - numeric) <= 1e-5 * max(1.0, abs(numeric))
            numeric_b = (
                regularized_loss(w, b + h, X, y, lam)
                - regularized_loss(w, b - h, X, y, lam)
            ) / (2 * h)
            assert abs(grad_b - numeric_b) <= 1e-5 * max(1.0, abs(numeric_b))

    def test_penalty_has_no_half_factor(self):
        w = np.array([2.0])
        X = np.zeros((1, 1))
        y = np.array([1.0])
        base = regularized_loss(w, 0.0, X, y, 0.0)
        assert regularized_loss(w, 0.0, X, y, 0.1) == pytest.approx(base + 0.1 * 4.0)


class TestTrain:
    def test_separable_feature_recovered(self):
        rng = np.random.default_rng(0)
        y = rng.integers(0, 2, size=100).astype(float)
        X = y.reshape(-1, 1).astype(float)
        model = train(X, y, TrainConfig(seed=1), task="t", query_ids=["signal"])
        assert model.coefficients()["signal"] > 0
        assert auroc(predict_proba(model, X), y.astype(int)) == 1.0

    def test_constant_features_learn_base_rate_intercept(self):
        rng = np.random.default_rng(3)
        y = (rng.random(400) < 0.3).astype(float)
        X = np.full((400, 2), 0.5)
        model = train(X, y, TrainConfig(seed=2), task="t", query_ids=["a", "b"])
        # closed-form optimum concentrates on the intercept: b* = logit(mean(y))
        b_star = math.log(y.mean() / (1 - y.mean()))
        preds = predict_proba(model, X)
        assert np.all(np.abs(preds - y.mean()) < 0.02)
        # early stopping leaves a small penalty-shrunk residual on the weights
        assert all(abs(w) < 0.2 for w in model.coefficients().values())
        assert abs(model.intercept + float(model.weights @ np.full(2, 0.5)) - b_star) < 0.1

    def test_seed_determinism_bitwise(self):
        rng = np.random.default_rng(5)
        X = rng.random((60, 3))
        y = (rng.random(60) < 0.5).astype(float)
        y[:2] = [0, 1]
        cfg = TrainConfig(seed=11)
        a = train(X, y, cfg, task="t", query_ids=["x", "y", "z"])
        b = train(X, y, cfg, task="t", query_ids=["x", "y", "z"])
        np.testing.assert_array_equal(a.weights, b.weights)
        assert a.intercept == b.intercept
        assert a.train_fingerprint == b.train_fingerprint

    def test_column_permutation_equivariance(self):
        rng = np.random.default_rng(8)
        X = rng.random((80, 4))
        y = (X[:, 0] + 0.3 * rng.random(80) > 0.6).astype(float)
        y[:2] = [0, 1]
        ids = ["a", "b", "c", "d"]
        cfg = TrainConfig(seed=4)
        base = train(X, y, cfg, task="t", query_ids=ids)
        perm = [2, 0, 3, 1]
        permuted = train(
            X[:, perm], y, cfg, task="t", query_ids=[ids[i] for i in perm]
        )
        # w.x rounds differently per column order; equivariance holds to ~ulp scale
        for q in ids:
            assert base.coefficients()[q] == pytest.approx(
                permuted.coefficients()[q], rel=1e-9, abs=1e-9
            )
        assert base.intercept == pytest.approx(permuted.intercept, rel=1e-9)

    def test_single_class_rejected(self):
        with pytest.raises(DataError, match="both classes"):
            train(np.ones((5, 1)), np.ones(5), task="t", query_ids=["q"])

    def test_nonfinite_features_rejected(self):
        X = np.array([[1.0], [np.nan]])
        with pytest.raises(DataError, match="finite"):
            train(X, np.array([0.0, 1.0]), task="t", query_ids=["q"])

    def test_stops_before_epoch_cap(self):
        rng = np.random.default_rng(1)
        X = rng.random((50, 2))
        y = (rng.random(50) < 0.5).astype(float)
        y[:2] = [0, 1]
        import time

        start = time.time()
        train(X, y, TrainConfig(seed=0, epochs=100000), task="t", query_ids=["a", "b"])
        assert time.time() - start < 30


class TestPredict:
    def test_zero_model_outputs_half(self):
        model = model_with([0.0, 0.0])
        np.testing.assert_array_equal(
            predict_proba(model, np.array([[0.1, 0.9], [1.0, 0.0]])), [0.5, 0.5]
        )

    def test_weight_and_intercept_cancel(self):
        model = model_with([2.0], intercept=-1.0)
        assert predict_proba(model, np.array([[0.5]]))[0] == 0.5

    def test_sigmoid_of_unit_logit(self):
        model = model_with([1.0, 1.0])
        assert predict_proba(model, np.array([[0.75, 0.25]]))[0] == pytest.approx(
            SIGMOID_1, abs=1e-15
        )

    def test_matrix_columns_aligned_by_id(self):
        model = model_with([1.0, -1.0], ids=("a", "b"))
        matrix = FeatureMatrix(["d"], ["b", "a"], np.array([[0.25, 0.75]]), {})
        # column order in the matrix differs; alignment must be by id
        assert decision_logits(model, matrix)[0] == pytest.approx(0.75 - 0.25)

    def test_missing_column_rejected(self):
        model = model_with([1.0, -1.0], ids=("a", "zz"))
        matrix = FeatureMatrix(["d"], ["a", "b"], np.array([[0.25, 0.75]]), {})
        with pytest.raises(DataError, match="missing query columns"):
            predict_proba(model, matrix)


class TestExplain:
    def test_hand_arithmetic(self):
        model = model_with([2.0, -1.0], ids=("q1", "q2"))
        result = explain(model, {"q1": 0.9, "q2": 0.8})
        assert result.items == (("q1", 0.9, 1.8), ("q2", 0.8, -0.8))
        assert result.predicted_probability == pytest.approx(SIGMOID_1, abs=1e-15)

    def test_invariant_probability_equals_sigmoid_of_sum(self):
        rng = np.random.default_rng(13)
        model = model_with(rng.normal(size=6), intercept=0.3)
        row = {q: float(v) for q, v in zip(model.query_ids, rng.random(6))}
        result = explain(model, row)
        logit = result.intercept + sum(score for _, _, score in result.items)
        expected = 1.0 / (1.0 + math.exp(-logit))
        assert abs(result.predicted_probability - expected) < 1e-12

    def test_all_zero_features(self):
        model = model_with([1.5, -2.0], intercept=0.7)
        result = explain(model, {"q0": 0.0, "q1": 0.0})
        assert all(score == 0.0 for _, _, score in result.items)
        assert result.predicted_probability == pytest.approx(
            1.0 / (1.0 + math.exp(-0.7)), rel=1e-15
        )

    def test_single_feature_score_is_logit_minus_intercept(self):
        model = model_with([1.7], intercept=0.4)
        result = explain(model, {"q0": 0.6})
        logit = result.intercept + result.items[0][2]
        assert result.items[0][2] == pytest.approx(logit - 0.4, rel=1e-15)

    def test_scores_sorted_descending(self):
        model = model_with([1.0, 3.0, -2.0])
        result = explain(model, {"q0": 1.0, "q1": 1.0, "q2": 1.0})
        scores = [s for _, _, s in result.items]
        assert scores == sorted(scores, reverse=True)


class TestPrune:
    def test_drop_nothing_is_identity(self):
        model = model_with([1.0, 2.0])
        assert prune(model, set()) is model

    def test_drop_all_leaves_intercept_only(self):
        model = model_with([1.0, 2.0], intercept=-0.3)
        pruned = prune(model, {"q0", "q1"})
        assert np.all(pruned.weights == 0.0)
        rng = np.random.default_rng(0)
        rows = rng.random((5, 2))
        np.testing.assert_array_equal(
            predict_proba(pruned, rows), np.full(5, 1.0 / (1.0 + math.exp(0.3)))
        )

    def test_logit_drops_by_exactly_the_removed_scores(self):
        rng = np.random.default_rng(21)
        model = model_with(rng.normal(size=5), intercept=0.2)
        rows = rng.random((20, 5))
        dropped = {"q1", "q3"}
        pruned = prune(model, dropped)
        before = decision_logits(model, rows)
        after = decision_logits(pruned, rows)
        removed = rows[:, [1, 3]] @ model.weights[[1, 3]]
        np.testing.assert_allclose(before - after, removed, atol=1e-12)

    def test_untouched_weights_bit_identical(self):
        model = model_with([0.1, 0.2, 0.3])
        pruned = prune(model, {"q1"})
        assert pruned.weights[0] == model.weights[0]
        assert pruned.weights[2] == model.weights[2]
        assert pruned.weights[1] == 0.0
        assert pruned.intercept == model.intercept

    def test_unknown_id_rejected(self):
        with pytest.raises(DataError, match="unknown"):
            prune(model_with([1.0]), {"zz"})

    def test_retrain_requires_data(self):
        with pytest.raises(DataError, match="retrain"):
            prune(model_with([1.0, 2.0]), {"q0"}, retrain=True)

    def test_retrain_refits_on_kept_columns(self):
        rng = np.random.default_rng(6)
        X = rng.random((120, 3))
        y = (X[:, 0] > 0.5).astype(float)
        y[:2] = [0, 1]
        cfg = TrainConfig(seed=3)
        model = train(X, y, cfg, task="t", query_ids=["keep", "drop1", "drop2"])
        retrained = prune(
            model, {"drop1", "drop2"}, retrain=True, features=X, labels=y, cfg=cfg
        )
        assert retrained.query_ids == ("keep",)
        assert retrained.coefficients()["keep"] > 0


class TestModelIO:
    def test_json_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(17)
        model = model_with(rng.normal(size=4), intercept=float(rng.normal()))
        path = tmp_path / "model.json"
        model.save(path)
        again = LinearModel.load(path)
        np.testing.assert_array_equal(again.weights, model.weights)
        assert again.intercept == model.intercept
        assert again.query_ids == model.query_ids
        assert again.config == model.config

    def test_weights_must_align(self):
        with pytest.raises(DataError, match="align"):
            LinearModel(
                query_ids=("a",),
                weights=np.array([1.0, 2.0]),
                intercept=0.0,
                task="t",
                train_fingerprint="x",
            )
