import numpy as np
import pandas as pd
import pytest

from src.downstream import (
    ClassifyConfig,
    LinearDWDModel,
    ShapeSplit,
    accuracy,
    average_precision,
    classify_shapes,
    cross_validate_lambda,
    dwd_loss,
    dwd_objective,
    dwd_predict,
    dwd_train,
    feature_columns,
    gpa,
    importance_histogram,
    landmark_importance,
    landmark_shapes,
    load_dwd,
    save_dwd,
    shape_features,
    similarity_align,
    topk_curve,
    with_labels,
)
from src.errors import DataError, ShapeMismatchError


def rotation_2d(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def dwd_model(weights, intercept: float = 0.0) -> LinearDWDModel:
    weights = np.asarray(weights, dtype=float)
    return LinearDWDModel(weights, intercept, 1e-3, np.zeros_like(weights), np.ones_like(weights))


@pytest.fixture
def separable(rng):
    x = np.concatenate([rng.uniform(0.5, 2.0, size=15), -rng.uniform(0.5, 2.0, size=15)])
    labels = np.array([1] * 15 + [0] * 15)
    return x[:, None], labels


class TestGpa:
    def test_identical_shapes(self, rng):
        shape = rng.normal(size=(8, 2))
        result = gpa([shape, shape.copy()])
        assert result.residual == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(result.aligned[0], result.aligned[1], atol=1e-12)

    def test_similarity_copy_aligns_exactly(self, rng):
        shape = rng.normal(size=(10, 2))
        moved = 2.5 * shape @ rotation_2d(0.7) + np.array([4.0, -1.0])
        result = gpa([shape, moved])
        np.testing.assert_allclose(result.aligned[0], result.aligned[1], atol=1e-8)

    def test_mean_is_centered_unit_size(self, rng):
        result = gpa([rng.normal(size=(6, 2)) for _ in range(4)])
        np.testing.assert_allclose(result.mean.mean(axis=0), 0.0, atol=1e-12)
        assert np.linalg.norm(result.mean) == pytest.approx(1.0)

    def test_mean_is_a_fixed_point(self, rng):
        shapes = [rng.normal(size=(7, 2)) for _ in range(3)]
        result = gpa(shapes)
        realigned = np.stack([similarity_align(s, result.mean)[0] for s in shapes]).mean(axis=0)
        realigned = realigned - realigned.mean(axis=0)
        realigned = similarity_align(realigned / np.linalg.norm(realigned), result.mean)[0]
        np.testing.assert_allclose(realigned / np.linalg.norm(realigned), result.mean, atol=1e-8)

    def test_common_similarity_transform_invariance(self, rng):
        shapes = [rng.normal(size=(9, 2)) for _ in range(5)]
        moved = [0.5 * s @ rotation_2d(-1.1) + np.array([3.0, 2.0]) for s in shapes]
        first, second = gpa(shapes), gpa(moved)
        np.testing.assert_allclose(first.mean, second.mean, atol=1e-6)
        np.testing.assert_allclose(first.aligned, second.aligned, atol=1e-6)

    def test_three_dimensional_shapes(self, rng):
        shape = rng.normal(size=(12, 3))
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        if np.linalg.det(q) < 0:
            q[:, 0] *= -1
        result = gpa([shape, 0.8 * shape @ q + 1.0])
        np.testing.assert_allclose(result.aligned[0], result.aligned[1], atol=1e-8)

    def test_degenerate_shape(self, rng):
        with pytest.raises(DataError, match="degenerate"):
            gpa([rng.normal(size=(5, 2)), np.ones((5, 2))])

    def test_needs_two_shapes(self, rng):
        with pytest.raises(DataError):
            gpa([rng.normal(size=(5, 2))])

    def test_landmark_count_mismatch(self, rng):
        with pytest.raises(ShapeMismatchError):
            gpa([rng.normal(size=(5, 2)), rng.normal(size=(6, 2))])


class TestDwdLoss:
    def test_continuous_at_the_knee(self):
        assert dwd_loss(np.array([0.5]))[0] == 0.5
        assert dwd_loss(np.array([0.5 + 1e-12]))[0] == pytest.approx(0.5)

    def test_branches(self):
        np.testing.assert_allclose(dwd_loss(np.array([-1.0, 0.0, 1.0, 2.0])), [2.0, 1.0, 0.25, 0.125])


class TestDwdTrain:
    def test_separable_one_dimensional(self, separable):
        x, labels = separable
        model = dwd_train(x, labels)
        _, predictions = dwd_predict(model, x)
        assert accuracy(predictions, labels) == 1.0
        assert model.weights[0] > 0

    def test_duplicated_points_keep_direction(self, rng):
        x = rng.normal(size=(20, 3))
        labels = (x[:, 0] + 0.5 * x[:, 1] > 0).astype(int)
        single = dwd_train(x, labels)
        double = dwd_train(np.vstack([x, x]), np.concatenate([labels, labels]))
        cosine = single.weights @ double.weights / (np.linalg.norm(single.weights) * np.linalg.norm(double.weights))
        assert cosine == pytest.approx(1.0, abs=1e-6)

    def test_flipped_labels_flip_predictions(self, rng):
        x = rng.normal(size=(24, 2))
        labels = (x[:, 0] - x[:, 1] > 0.1).astype(int)
        original = dwd_predict(dwd_train(x, labels), x)[0]
        flipped = dwd_predict(dwd_train(x, 1 - labels), x)[0]
        np.testing.assert_allclose(flipped, -original, atol=1e-5)

    def test_objective_improves_on_zero_start(self, rng):
        x = rng.normal(size=(30, 4))
        labels = (x[:, 2] > 0).astype(int)
        model = dwd_train(x, labels)
        zero = LinearDWDModel(np.zeros(4), 0.0, model.lam, model.mean, model.scale)
        assert dwd_objective(model, x, labels) < dwd_objective(zero, x, labels)

    def test_converged_on_small_gradient(self, separable, mocker):
        warn = mocker.patch("src.downstream.dwd.logger")
        model = dwd_train(*separable, ClassifyConfig(tol=1e-3))
        assert model.converged
        warn.warning.assert_not_called()

    def test_stalled_descent_is_not_converged(self, separable, mocker):
        warn = mocker.patch("src.downstream.dwd.logger")
        model = dwd_train(*separable, ClassifyConfig(tol=1e-300))
        assert not model.converged
        warn.warning.assert_called_once()

    def test_single_class_raises(self, rng):
        with pytest.raises(DataError, match="each class"):
            dwd_train(rng.normal(size=(5, 2)), np.ones(5, dtype=int))

    def test_label_count_mismatch(self, rng):
        with pytest.raises(ShapeMismatchError):
            dwd_train(rng.normal(size=(5, 2)), np.array([0, 1, 0]))


class TestDwdPredict:
    def test_zero_score_goes_positive(self):
        scores, predictions = dwd_predict(dwd_model([1.0, -1.0]), np.array([[2.0, 2.0]]))
        assert scores[0] == 0.0
        assert predictions[0] == 1

    def test_deterministic(self, separable):
        x, labels = separable
        model = dwd_train(x, labels)
        assert np.array_equal(dwd_predict(model, x)[0], dwd_predict(model, x)[0])

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            dwd_predict(dwd_model([1.0, 2.0]), np.ones((3, 3)))

    def test_save_and_load(self, separable, tmp_path):
        x, labels = separable
        model = dwd_train(x, labels)
        loaded = load_dwd(save_dwd(model, tmp_path / "dwd"))
        assert loaded.intercept == pytest.approx(model.intercept)
        np.testing.assert_allclose(dwd_predict(loaded, x)[0], dwd_predict(model, x)[0], rtol=1e-6)


class TestCrossValidation:
    def test_picks_a_grid_value(self, rng):
        x = rng.normal(size=(30, 3))
        labels = (x[:, 0] > 0).astype(int)
        config = ClassifyConfig(folds=3, lambda_grid=[1e-3, 1.0])
        lam, table = cross_validate_lambda(x, labels, config)
        assert lam in (1e-3, 1.0)
        assert list(table["lam"]) == [1e-3, 1.0]
        assert table["accuracy"].between(0, 1).all()


class TestScoring:
    def test_hand_computed_average_precision(self):
        assert average_precision([0.9, 0.8, 0.1], [0, 1, 1]) == pytest.approx(7 / 12)

    def test_perfect_ranking(self):
        assert average_precision([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0]) == 1.0

    def test_ties_keep_input_order(self):
        assert average_precision([0.5, 0.5], [0, 1]) == pytest.approx(0.5)
        assert average_precision([0.5, 0.5], [1, 0]) == 1.0

    def test_no_positives(self):
        with pytest.raises(DataError, match="positives"):
            average_precision([0.1, 0.2], [0, 0])

    def test_accuracy(self):
        assert accuracy([1, 0, 1, 1], [1, 0, 0, 1]) == 0.75

    def test_labels_must_be_binary(self):
        with pytest.raises(DataError):
            accuracy([1, 2], [1, 2])


class TestLandmarkImportance:
    def test_single_landmark_weights(self):
        num_landmarks, dim = 10, 2
        weights = np.zeros(2 * num_landmarks * dim)
        weights[feature_columns([7], num_landmarks, dim)] = [0.5, -0.5, 0.25, -1.0]
        ranking = landmark_importance(dwd_model(weights), num_landmarks, dim)
        assert ranking.order[0] == 7
        assert ranking.importance[7] == pytest.approx(2.25)

    def test_zero_weights_keep_index_order(self):
        ranking = landmark_importance(dwd_model(np.zeros(24)), 4, 3)
        assert np.all(ranking.importance == 0.0)
        assert list(ranking.order) == [0, 1, 2, 3]

    def test_feature_columns_layout(self):
        assert list(feature_columns([1], 3, 2)) == [2, 3, 8, 9]

    def test_layout_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            landmark_importance(dwd_model(np.zeros(10)), 4, 2)

    def test_histogram(self):
        ranking = landmark_importance(dwd_model(np.arange(16, dtype=float)), 4, 2)
        frame = importance_histogram(ranking, bins=4)
        assert list(frame.columns) == ["weight_low", "weight_high", "frequency"]
        assert frame["frequency"].sum() == 4


class TestPipeline:
    def test_feature_layout(self, rng):
        t0, t1 = rng.normal(size=(3, 50, 2)), rng.normal(size=(3, 50, 2))
        features = shape_features(t0, t1)
        assert features.shape == (3, 50 * 2 * 2)
        np.testing.assert_array_equal(features[1, :100], t0[1].ravel())
        np.testing.assert_array_equal(features[1, 100:], t1[1].ravel())

    def test_ground_truth_shapes(self, cohort):
        split = landmark_shapes(cohort, cohort.train_subjects)
        assert split.subject_ids == [s.subject_id for s in cohort.train_subjects]
        assert np.array_equal(split.t1[0], cohort.train_subjects[0].landmarks(1).points)
        assert list(split.labels) == [s.label for s in cohort.train_subjects]

    def test_with_labels_replaces_and_checks(self, cohort):
        split = landmark_shapes(cohort, cohort.test_subjects)
        table = pd.DataFrame({"subject_id": split.subject_ids, "label": [1] * len(split.subject_ids)})
        assert list(with_labels(split, table).labels) == [1] * len(split.subject_ids)
        with pytest.raises(DataError, match="labels missing"):
            with_labels(split, table.iloc[:1])

    def test_split_lengths_checked(self):
        with pytest.raises(DataError):
            ShapeSplit(["a"], [np.zeros((2, 2))], [], np.array([0]))

    def test_classify_ground_truth_shapes(self, cohort):
        train = landmark_shapes(cohort, cohort.train_subjects)
        test = landmark_shapes(cohort, cohort.test_subjects)
        test = ShapeSplit(test.subject_ids, test.t0, test.t1, np.array([1, 0]))
        result = classify_shapes(train, test)

        dim = cohort.grid.dim
        num_landmarks = len(train.t0[0])
        assert result.train_features.shape == (len(train.subject_ids), 2 * num_landmarks * dim)
        assert 0.0 <= result.accuracy <= 1.0 and 0.0 <= result.ap <= 1.0
        assert list(result.report_frame().columns) == ["subject_id", "label", "score", "prediction"]
        assert sorted(result.importance_frame()["landmark"]) == list(range(num_landmarks))
        assert result.summary()["train_objective"] == dwd_objective(result.model, result.train_features, train.labels)

    def test_top_k_retrains_on_selected_landmarks(self, cohort):
        train = landmark_shapes(cohort, cohort.train_subjects)
        test = landmark_shapes(cohort, cohort.test_subjects)
        test = ShapeSplit(test.subject_ids, test.t0, test.t1, np.array([0, 1]))
        result = classify_shapes(train, test, ClassifyConfig(top_k=2))
        assert result.num_features == 2 * 2 * cohort.grid.dim
        assert len(result.landmarks) == 2

    def test_topk_curve_rows(self, rng):
        num_landmarks, dim = 6, 2
        train_x = rng.normal(size=(20, 2 * num_landmarks * dim))
        train_y = (train_x[:, 0] > 0).astype(int)
        test_x = rng.normal(size=(10, 2 * num_landmarks * dim))
        test_y = np.array([0, 1] * 5)
        ranking = landmark_importance(dwd_train(train_x, train_y), num_landmarks, dim)
        frame = topk_curve(train_x, train_y, test_x, test_y, ranking, num_landmarks, dim, ks=[1, 3, 50])
        assert list(frame["k"]) == [1, 3, 6]
        assert list(frame["features"]) == [4, 12, 24]
