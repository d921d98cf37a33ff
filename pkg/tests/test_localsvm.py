"""Squared-hinge SVM numerics and the domain feature engineering."""

import numpy as np
import pytest

from edgealloc.localsvm import (FeatureSchema, SvmModel, SvmSample, TaskFeatureRow,
                                TrainingRow, build_features, dataset_loss,
                                load_svm_model, load_svm_training_csv,
                                prediction_accuracy, predict_scores, save_svm_model,
                                save_svm_training_csv, svm_grad, svm_loss, train_svm)


def sample(x, y):
    return SvmSample(np.asarray(x, dtype=float), y)


def loss_by_hand(w, x, y):
    # independent formula evaluation with explicit loops
    sq = sum(wi * wi for wi in w)
    dot = sum(wi * xi for wi, xi in zip(w, x))
    hinge = max(0.0, 1.0 - y * dot)
    return 0.5 * sq + 0.5 * hinge * hinge


class TestLoss:
    def test_zero_weights(self):
        assert svm_loss(np.zeros(3), sample([1, 2, 3], 1)) == 0.5

    def test_margin_boundary(self):
        w = np.array([0.5, 0.5])
        x = np.array([1.0, 1.0])  # y w.x = 1 exactly
        assert svm_loss(w, sample(x, 1)) == pytest.approx(0.5 * float(w @ w))

    def test_matches_independent_formula(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            d = int(rng.integers(1, 8))
            w = rng.normal(0, 2, d)
            x = rng.normal(0, 2, d)
            y = int(rng.choice([-1, 1]))
            assert svm_loss(w, sample(x, y)) == pytest.approx(loss_by_hand(w, x, y))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            svm_loss(np.zeros(2), sample([1, 2, 3], 1))

    def test_convexity_interpolation(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            d = int(rng.integers(1, 6))
            w1, w2 = rng.normal(0, 2, (2, d))
            s = sample(rng.normal(0, 2, d), int(rng.choice([-1, 1])))
            t = float(rng.uniform(0, 1))
            mix = svm_loss(t * w1 + (1 - t) * w2, s)
            assert mix <= t * svm_loss(w1, s) + (1 - t) * svm_loss(w2, s) + 1e-12


class TestGrad:
    def test_margin_satisfied_gives_weight_vector(self):
        w = np.array([2.0, 0.0])
        s = sample([1.0, 0.0], 1)  # y w.x = 2 >= 1
        assert svm_grad(w, s) == pytest.approx(w)

    def test_zero_weights(self):
        s = sample([1.0, -2.0], -1)
        assert svm_grad(np.zeros(2), s) == pytest.approx(np.array([1.0, -2.0]))

    def test_finite_differences(self):
        rng = np.random.default_rng(2)
        worst = 0.0
        for _ in range(300):
            d = int(rng.integers(2, 8))
            w = rng.normal(0, 1.5, d)
            s = sample(rng.normal(0, 1.5, d), int(rng.choice([-1, 1])))
            g = svm_grad(w, s)
            h = 1e-6
            fd = np.empty(d)
            for k in range(d):
                wp, wm = w.copy(), w.copy()
                wp[k] += h
                wm[k] -= h
                fd[k] = (svm_loss(wp, s) - svm_loss(wm, s)) / (2 * h)
            rel = np.linalg.norm(g - fd) / max(np.linalg.norm(g),
                                               np.linalg.norm(fd), 1e-12)
            worst = max(worst, rel)
        assert worst < 1e-6


def separable_toy(margin=1.0):
    # 10 points split by x0 = 0 with a wide margin
    pts = [(-3.0, 0.5), (-2.5, -1.0), (-2.0, 2.0), (-3.5, 1.5), (-2.2, -0.4),
           (3.0, 0.3), (2.5, -1.2), (2.0, 1.8), (3.5, -0.5), (2.1, 0.9)]
    labels = [-1] * 5 + [1] * 5
    X = np.array([(x, y, 1.0) for x, y in pts])
    return [SvmSample(x, y) for x, y in zip(X, labels)], X, np.array(labels)


def exhaustive_separator_exists(X, y):
    # grid over directions and offsets certifies linear separability
    for theta in np.linspace(0, np.pi, 181):
        w = np.array([np.cos(theta), np.sin(theta)])
        proj = X[:, :2] @ w
        lo = proj[y == 1].min()
        hi = proj[y == -1].max()
        if lo > hi:
            return True
        if proj[y == -1].min() > proj[y == 1].max():
            return True
    return False


class TestTraining:
    def test_separable_toy_reaches_full_accuracy(self):
        samples, X, y = separable_toy()
        assert exhaustive_separator_exists(X, y)
        model = train_svm(samples, lr=0.05, epochs=500, seed=0)
        scores = predict_scores(model, X)
        assert ((scores > 0) == (y > 0)).all()

    def test_single_sample_drives_margin(self):
        # regularized one-point optimum has margin |x|^2/(1+|x|^2), so the
        # hinge only vanishes to 1e-3 for |x|^2 >= 999
        s = sample([40.0, 20.0, 10.0], 1)
        model = train_svm([s], lr=4e-4, epochs=3000, seed=0)
        assert s.y * float(model.w @ s.x) >= 1 - 1e-3

    def test_never_worse_than_zero_init(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            samples = [sample(rng.normal(0, 1, 4), int(rng.choice([-1, 1])))
                       for _ in range(20)]
            model = train_svm(samples, lr=0.1, epochs=30, seed=1)
            assert dataset_loss(model.w, samples) <= dataset_loss(
                np.zeros(4), samples) + 1e-12

    def test_best_iterate_running_minimum(self):
        # more epochs can only improve the returned (best) iterate's loss
        samples, _, _ = separable_toy()
        losses = [dataset_loss(train_svm(samples, lr=0.05, epochs=e, seed=2).w,
                               samples) for e in (5, 20, 80, 320)]
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_seed_determinism(self):
        samples, _, _ = separable_toy()
        a = train_svm(samples, epochs=50, seed=5)
        b = train_svm(samples, epochs=50, seed=5)
        assert np.array_equal(a.w, b.w)

    def test_empty_dataset(self):
        with pytest.raises(ValueError):
            train_svm([])


def make_row(**kw):
    defaults = dict(past_success=3, prediction_accuracy=0.8, building="B0",
                    model_type="MT1", operating_power_kw=120.0,
                    weather_condition="warm", outdoor_temp_c=25.0,
                    latest_cooling_load_kw=300.0, water_mass_flow_kg_s=14.0,
                    water_temp_diff_c=5.0)
    defaults.update(kw)
    return TaskFeatureRow(**defaults)


class TestFeatures:
    def _history(self):
        rng = np.random.default_rng(4)
        rows = []
        for i in range(30):
            rows.append(make_row(
                past_success=int(rng.integers(0, 10)),
                prediction_accuracy=float(rng.uniform(0, 1)),
                building=f"B{i % 3}", model_type=f"MT{i % 2}",
                operating_power_kw=float(rng.uniform(80, 200)),
                weather_condition=["cold", "mild", "warm"][i % 3],
                outdoor_temp_c=float(rng.uniform(5, 35)),
                latest_cooling_load_kw=float(rng.uniform(100, 600)),
                water_mass_flow_kg_s=float(rng.uniform(5, 25)),
                water_temp_diff_c=float(rng.uniform(4, 6))))
        return rows

    def test_vector_length_bookkeeping(self):
        rows = self._history()
        schema = FeatureSchema.from_rows(rows)
        # independent count: 2 general + one-hots + 5 domain numerics + bias
        expected = (2 + len(schema.buildings) + len(schema.model_types)
                    + len(schema.weather_conditions) + 5 + 1)
        vec = build_features(schema, rows[0])
        assert vec.size == expected
        assert schema.feature_length() == expected

    def test_never_selected_task_scales_from_zero(self):
        rows = self._history()
        schema = FeatureSchema.from_rows(rows)
        vec = build_features(schema, make_row(past_success=0))
        expected = (0.0 - schema.numeric_mean[0]) / schema.numeric_std[0]
        assert vec[0] == pytest.approx(expected)

    def test_perfect_predictions_accuracy(self):
        actual = [3.0, 4.0, 5.0]
        assert prediction_accuracy(actual, actual) == 1.0

    def test_accuracy_is_error_normalized(self):
        assert prediction_accuracy([2.0], [4.0]) == pytest.approx(0.5)
        assert prediction_accuracy([8.0], [4.0]) == 0.0  # capped at zero
        assert prediction_accuracy([], []) == 0.0

    def test_unseen_category_zero_block(self):
        rows = self._history()
        schema = FeatureSchema.from_rows(rows)
        vec = build_features(schema, make_row(building="UNSEEN"))
        block = vec[2:2 + len(schema.buildings)]
        assert (block == 0).all()

    def test_bias_slot_is_one(self):
        rows = self._history()
        schema = FeatureSchema.from_rows(rows)
        assert build_features(schema, rows[3])[-1] == 1.0


class TestPredict:
    def test_zero_model(self):
        model = SvmModel(np.zeros(4))
        assert (predict_scores(model, np.ones((3, 4))) == 0).all()

    def test_sign_flip(self):
        model = SvmModel(np.array([1.0, -2.0]))
        x = np.array([[3.0, 1.0]])
        assert predict_scores(model, -x) == pytest.approx(-predict_scores(model, x))

    def test_linearity(self):
        rng = np.random.default_rng(5)
        model = SvmModel(rng.normal(0, 1, 5))
        x1, x2 = rng.normal(0, 1, (2, 5))
        lhs = predict_scores(model, (x1 + x2)[None, :])[0]
        rhs = predict_scores(model, x1[None, :])[0] + predict_scores(model, x2[None, :])[0]
        assert lhs == pytest.approx(rhs)

    def test_trained_scores_rank_positives_first(self):
        samples, X, y = separable_toy()
        model = train_svm(samples, lr=0.05, epochs=500, seed=0)
        scores = predict_scores(model, X)
        assert scores[y == 1].min() > scores[y == -1].max()


class TestSerialization:
    def test_model_json_round_trip(self, tmp_path):
        rows = [make_row(building=f"B{i}") for i in range(3)]
        schema = FeatureSchema.from_rows(rows)
        model = SvmModel(np.array([1.0, -0.5, 0.25]))
        save_svm_model(tmp_path / "m.json", model, schema)
        back_model, back_schema = load_svm_model(tmp_path / "m.json")
        assert np.array_equal(back_model.w, model.w)
        assert back_schema.buildings == schema.buildings
        assert np.allclose(back_schema.numeric_mean, schema.numeric_mean)

    def test_training_csv_round_trip(self, tmp_path):
        rows = [TrainingRow(0, 1, make_row(), 1), TrainingRow(1, 2, make_row(), -1)]
        save_svm_training_csv(tmp_path / "t.csv", rows)
        back = load_svm_training_csv(tmp_path / "t.csv")
        assert back == rows
