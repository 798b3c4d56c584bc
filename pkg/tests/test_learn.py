import numpy as np
import pytest

from chatterkit.dataset import FeatureMatrix, SplitPlan, make_splits, split_digest
from chatterkit.errors import DimensionMismatch, FeatureMismatch, InvalidConfiguration, SingleClassTrainingSet
from chatterkit.learn import (
    ClassifierKind,
    ClassifierSpec,
    evaluate_realizations,
    predict,
    scores,
    summarize,
    train,
)


def _matrix(values, labels, names=None, tag="t"):
    values = np.asarray(values, dtype=float)
    names = names or [f"x{i}" for i in range(values.shape[1])]
    return FeatureMatrix([f"{tag}{i}" for i in range(len(labels))], names, values, labels, tag)


@pytest.fixture
def separable(rng):
    values = np.vstack([rng.normal(-2.0, 0.5, size=(20, 2)), rng.normal(2.0, 0.5, size=(20, 2))])
    return _matrix(values, [0] * 20 + [1] * 20)


def test_classifier_names_and_defaults():
    assert ClassifierSpec.from_name("SVM").kind is ClassifierKind.SVM_RBF
    assert ClassifierSpec.from_name("knn", k=3).name == "knn3"
    spec = ClassifierSpec.from_name("rf", n_estimators=10)
    assert spec.hyperparameters == {"n_estimators": 10, "max_depth": 2}
    with pytest.raises(InvalidConfiguration):
        ClassifierSpec.from_name("xgboost")


def test_svm_fits_xor():
    points = np.array([[0, 0], [1, 1], [0, 1], [1, 0]] * 5, dtype=float)
    labels = [0, 0, 1, 1] * 5
    X = _matrix(points, labels)
    model = train(ClassifierSpec.from_name("svm", gamma=1.0, C=10.0), X)
    assert scores(X.labels, predict(model, X))[0] == 1.0


def test_random_forest_shape(separable):
    model = train(ClassifierSpec.from_name("rf"), separable, seed=3)
    forest = model.steps[-1][1]
    assert len(forest.estimators_) == 100
    assert max(tree.tree_.max_depth for tree in forest.estimators_) <= 2


def test_mlp_architecture(separable):
    model = train(ClassifierSpec.from_name("mlp", epochs=5), separable)
    mlp = model.steps[-1][1]
    assert [w.shape for w in mlp.coefs_] == [(2, 25), (25, 12), (12, 25), (25, 1)]
    assert mlp.activation == "tanh"


def test_single_class_training_set():
    X = _matrix(np.arange(8.0).reshape(4, 2), [1, 1, 1, 1])
    with pytest.raises(SingleClassTrainingSet):
        train(ClassifierSpec.from_name("lr"), X)
    # the forest tolerates it and predicts the only class
    model = train(ClassifierSpec.from_name("rf"), X)
    assert predict(model, X).tolist() == [1, 1, 1, 1]


def test_knn_is_not_a_feature_classifier(separable):
    with pytest.raises(InvalidConfiguration):
        train(ClassifierSpec.from_name("knn"), separable)


def test_predict_checks_dimension(separable):
    model = train(ClassifierSpec.from_name("lr"), separable)
    with pytest.raises(DimensionMismatch):
        predict(model, np.zeros((2, 3)))


def test_scores_zero_division():
    assert scores([1, 0, 1], [0, 0, 0]) == (pytest.approx(1 / 3), 0.0)
    assert scores([1, 0], [1, 0]) == (1.0, 1.0)


def test_summary_statistics():
    summary = summarize([(0.8, 0.7, 1.0, 1.0), (1.0, 0.9, 1.0, 1.0)], "d")
    assert summary.n_realizations == 2
    assert summary.metric("accuracy") == (pytest.approx(0.9), pytest.approx(0.1))
    assert summary.metric("f1") == (pytest.approx(0.8), pytest.approx(0.1))
    with pytest.raises(InvalidConfiguration):
        summary.metric("auc")


@pytest.mark.parametrize("name", ["lr", "svm", "rf", "gb"])
def test_separable_self_pair(name, separable):
    plan = SplitPlan(seeds=(0, 1, 2))
    summary = evaluate_realizations(ClassifierSpec.from_name(name), separable, separable, plan,
                                    disjoint=True, n_jobs=1)
    assert summary.n_realizations == 3
    assert summary.mean_accuracy >= 0.95


def test_shared_splits(separable, rng):
    target = _matrix(rng.normal(size=(10, 2)) + np.repeat([[-2.0], [2.0]], 5, axis=0), [0] * 5 + [1] * 5, tag="u")
    plan = SplitPlan(seeds=(4, 5))
    splits = make_splits(separable.record_ids, target.record_ids, plan)
    a = evaluate_realizations(ClassifierSpec.from_name("lr"), separable, target, plan, splits=splits, n_jobs=1)
    b = evaluate_realizations(ClassifierSpec.from_name("svm"), separable, target, plan, splits=splits, n_jobs=1)
    assert a.split_digest == b.split_digest == split_digest(splits)


def test_feature_mismatch(separable):
    other = _matrix(separable.values, separable.labels.tolist(), names=["a", "b"])
    with pytest.raises(FeatureMismatch):
        evaluate_realizations(ClassifierSpec.from_name("lr"), separable, other, SplitPlan(seeds=(0,)))


@pytest.mark.parametrize("y_pred,expected", [
    # TP 3, FN 1, FP 2, TN 2
    ([1, 1, 1, 0, 1, 1, 0, 0], (5 / 8, 6 / 9)),
    # TP 4, FN 0, FP 0, TN 4
    ([1, 1, 1, 1, 0, 0, 0, 0], (1.0, 1.0)),
    # TP 1, FN 3, FP 0, TN 4
    ([1, 0, 0, 0, 0, 0, 0, 0], (5 / 8, 2 / 5)),
    # TP 0, FN 4, FP 4, TN 0
    ([0, 0, 0, 0, 1, 1, 1, 1], (0.0, 0.0)),
])
def test_scores_on_confusion_matrices(y_pred, expected):
    y_true = [1, 1, 1, 1, 0, 0, 0, 0]
    acc, f1 = scores(y_true, y_pred)
    assert acc == pytest.approx(expected[0])
    assert f1 == pytest.approx(expected[1])


@pytest.mark.parametrize("name", ["lr", "svm"])
def test_affine_rescaling_keeps_predictions(name, separable, rng):
    scale, offset = np.array([1e3, 0.01]), np.array([50.0, -7.0])
    query = np.vstack([rng.normal(-2.0, 0.5, size=(10, 2)), rng.normal(2.0, 0.5, size=(10, 2))])
    rescaled = _matrix(separable.values * scale + offset, separable.labels.tolist())
    plain_model = train(ClassifierSpec.from_name(name), separable)
    scaled_model = train(ClassifierSpec.from_name(name), rescaled)
    np.testing.assert_array_equal(predict(plain_model, query), predict(scaled_model, query * scale + offset))
