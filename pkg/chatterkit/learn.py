"""Classifier suite, realization loop and accuracy/F1 summaries."""
import logging
import warnings
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np
from sklearn.ensemble import GradientBoostingClassifier, RandomForestClassifier
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import accuracy_score, f1_score
from sklearn.neural_network import MLPClassifier
from sklearn.pipeline import Pipeline, make_pipeline
from sklearn.preprocessing import StandardScaler
from sklearn.svm import SVC

from .dataset import FeatureMatrix, SplitPlan, make_splits, split_digest
from .errors import (
    DimensionMismatch,
    FeatureMismatch,
    InvalidConfiguration,
    SingleClassTrainingSet,
)
from .parallel import parallel_map

logger = logging.getLogger(__name__)


class ClassifierKind(Enum):
    LOGISTIC_REGRESSION = "lr"
    SVM_RBF = "svm"
    RANDOM_FOREST = "rf"
    GRADIENT_BOOST = "gb"
    MLP = "mlp"
    KNN_PRECOMPUTED = "knn"


DEFAULT_HYPERPARAMETERS: dict[ClassifierKind, dict[str, Any]] = {
    ClassifierKind.LOGISTIC_REGRESSION: {"tol": 1e-6, "max_iter": 10000, "C": 1.0},
    # gamma "scale" = 1 / (n_features * X.var())
    ClassifierKind.SVM_RBF: {"gamma": "scale", "C": 1.0, "tol": 1e-3},
    ClassifierKind.RANDOM_FOREST: {"n_estimators": 100, "max_depth": 2},
    ClassifierKind.GRADIENT_BOOST: {"n_estimators": 100, "max_depth": 1, "learning_rate": 0.1},
    ClassifierKind.MLP: {"hidden_layer_sizes": (25, 12, 25), "epochs": 100, "batch_size": 5,
                         "learning_rate_init": 1e-3},
    ClassifierKind.KNN_PRECOMPUTED: {"k": 1},
}


@dataclass(frozen=True)
class ClassifierSpec:
    kind: ClassifierKind
    hyperparameters: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        kind = ClassifierKind(self.kind)
        object.__setattr__(self, "kind", kind)
        merged = dict(DEFAULT_HYPERPARAMETERS[kind])
        merged.update(self.hyperparameters or {})
        object.__setattr__(self, "hyperparameters", merged)

    @classmethod
    def from_name(cls, name: str, **hyperparameters) -> "ClassifierSpec":
        try:
            kind = ClassifierKind(name.lower())
        except ValueError as exc:
            choices = ", ".join(k.value for k in ClassifierKind)
            raise InvalidConfiguration(f"unknown classifier {name!r}; expected one of {choices}") from exc
        return cls(kind, hyperparameters)

    @property
    def name(self) -> str:
        if self.kind is ClassifierKind.KNN_PRECOMPUTED:
            return f"knn{self.hyperparameters['k']}"
        return self.kind.value


def _estimator(spec: ClassifierSpec, seed: int):
    hp = spec.hyperparameters
    if spec.kind is ClassifierKind.LOGISTIC_REGRESSION:
        return LogisticRegression(C=hp["C"], tol=hp["tol"], max_iter=hp["max_iter"])
    if spec.kind is ClassifierKind.SVM_RBF:
        return SVC(kernel="rbf", gamma=hp["gamma"], C=hp["C"], tol=hp["tol"])
    if spec.kind is ClassifierKind.RANDOM_FOREST:
        return RandomForestClassifier(n_estimators=hp["n_estimators"], max_depth=hp["max_depth"],
                                      random_state=seed)
    if spec.kind is ClassifierKind.GRADIENT_BOOST:
        return GradientBoostingClassifier(n_estimators=hp["n_estimators"], max_depth=hp["max_depth"],
                                          learning_rate=hp["learning_rate"], random_state=seed)
    if spec.kind is ClassifierKind.MLP:
        # logistic output with log-loss; fixed epoch count, no early stopping
        return MLPClassifier(hidden_layer_sizes=tuple(hp["hidden_layer_sizes"]), activation="tanh",
                             solver="adam", batch_size=hp["batch_size"], max_iter=hp["epochs"],
                             learning_rate_init=hp["learning_rate_init"], tol=0.0,
                             n_iter_no_change=hp["epochs"] + 1, shuffle=True, random_state=seed)
    raise InvalidConfiguration("KNN works on distance matrices; use dtw.knn_predict")


def train(spec: ClassifierSpec, X: FeatureMatrix, seed: int = 0) -> Pipeline:
    """Standardize on the training rows and fit one classifier.

    Args:
        spec: Classifier kind and hyperparameters.
        X: Training features with binary labels.
        seed: Seed for the stochastic learners.

    Returns:
        Fitted scaler + classifier pipeline.
    """
    classes = np.unique(X.labels)
    if classes.size < 2 and spec.kind is not ClassifierKind.RANDOM_FOREST:
        raise SingleClassTrainingSet(f"{spec.name}: training set holds only class {classes.tolist()}")
    model = make_pipeline(StandardScaler(), _estimator(spec, seed))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=ConvergenceWarning)
        model.fit(X.values, X.labels)
    return model


def predict(model: Pipeline, X: FeatureMatrix | np.ndarray) -> np.ndarray:
    values = X.values if isinstance(X, FeatureMatrix) else np.atleast_2d(np.asarray(X, dtype=float))
    if values.shape[1] != model.n_features_in_:
        raise DimensionMismatch(f"model expects {model.n_features_in_} features, got {values.shape[1]}")
    return model.predict(values).astype(int)


def scores(y_true: Sequence[int], y_pred: Sequence[int]) -> tuple[float, float]:
    """Accuracy and F1 with Unstable (1) positive; F1 is 0 when nothing is predicted positive."""
    return (float(accuracy_score(y_true, y_pred)),
            float(f1_score(y_true, y_pred, pos_label=1, zero_division=0)))


@dataclass
class EvalSummary:
    """Scores of one classifier over all seeded realizations."""
    accuracies: np.ndarray
    f1s: np.ndarray
    train_accuracies: np.ndarray
    train_f1s: np.ndarray
    split_digest: str = ""

    def __post_init__(self):
        for name in ("accuracies", "f1s", "train_accuracies", "train_f1s"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))

    @property
    def n_realizations(self) -> int:
        return self.accuracies.size

    @property
    def mean_accuracy(self) -> float:
        return float(self.accuracies.mean())

    @property
    def std_accuracy(self) -> float:
        return float(self.accuracies.std())

    @property
    def mean_f1(self) -> float:
        return float(self.f1s.mean())

    @property
    def std_f1(self) -> float:
        return float(self.f1s.std())

    def metric(self, name: str) -> tuple[float, float]:
        """(mean, std) of ``accuracy`` or ``f1``."""
        if name == "accuracy":
            return self.mean_accuracy, self.std_accuracy
        if name == "f1":
            return self.mean_f1, self.std_f1
        raise InvalidConfiguration(f"unknown metric {name!r}")


def summarize(per_seed: Sequence[tuple[float, float, float, float]], digest: str = "") -> EvalSummary:
    arr = np.asarray(per_seed, dtype=float).reshape(-1, 4)
    return EvalSummary(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], digest)


def _realization(split: tuple[np.ndarray, np.ndarray], spec: ClassifierSpec, source: FeatureMatrix,
                 target: FeatureMatrix, seed: int) -> tuple[float, float, float, float]:
    train_idx, test_idx = split
    train_set = source.subset(train_idx)
    model = train(spec, train_set, seed)
    test_set = target.subset(test_idx)
    acc, f1 = scores(test_set.labels, predict(model, test_set))
    train_acc, train_f1 = scores(train_set.labels, predict(model, train_set))
    return acc, f1, train_acc, train_f1


def evaluate_realizations(
    spec: ClassifierSpec,
    source: FeatureMatrix,
    target: FeatureMatrix,
    plan: SplitPlan = SplitPlan(),
    *,
    splits: Sequence[tuple[np.ndarray, np.ndarray]] | None = None,
    disjoint: bool = False,
    n_jobs: int | None = None,
) -> EvalSummary:
    """Train on each seeded source draw, test on the matching target draw.

    ``splits`` overrides the draws from ``plan`` so several methods can share
    one set of index draws.
    """
    if source.feature_names != target.feature_names:
        raise FeatureMismatch(f"source and target features differ ({source.n_features} vs {target.n_features} columns)")
    if splits is None:
        splits = make_splits(source.record_ids, target.record_ids, plan,
                             source_labels=source.labels, target_labels=target.labels, disjoint=disjoint)
    per_seed = parallel_map(
        lambda item: _realization(item[1], spec, source, target, item[0]),
        list(zip(plan.seeds, splits)), n_jobs=n_jobs, prefer="threads",
    )
    return summarize(per_seed, split_digest(splits))
