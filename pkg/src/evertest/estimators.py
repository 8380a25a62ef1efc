"""Fit-then-test wrappers following the scikit-learn estimator conventions.

``fit`` trains a clone of the wrapped classifier on offline data, the
``test``/``detect`` methods run the sequential procedures on raw samples.
Labels must be the integers ``0..L`` with ``0`` the null class.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.utils.validation import check_is_fitted, check_X_y

from .classifiers import NearestCentroidClassifier
from .detector import DetectionRecord, run_detector
from .sequential import TestConfig, TestResult, run_test
from .stats import ConfusionMatrix, gaps, is_separable


class _FitMixin:
    def fit(self, X, y):
        X, y = check_X_y(X, y)
        y = y.astype(np.int64)
        classes = np.unique(y)
        if not np.array_equal(classes, np.arange(classes.size)) or classes.size < 2:
            raise ValueError("labels must be the integers 0..L with L >= 1, all present")
        base = self.classifier if self.classifier is not None else NearestCentroidClassifier()
        self.classifier_ = clone(base).fit(X, y)
        self.n_labels_ = classes.size
        pred = np.asarray(self.classifier_.predict(X), dtype=np.int64)
        counts = np.zeros((self.n_labels_, self.n_labels_))
        np.add.at(counts, (y, pred), 1.0)
        # in-sample estimate; pass held-out data to confusion() for an honest one
        self.confusion_ = ConfusionMatrix(counts / counts.sum(axis=1, keepdims=True))
        self.separable_ = is_separable(self.confusion_)
        return self

    def confusion(self, X, y) -> ConfusionMatrix:
        check_is_fitted(self, "classifier_")
        X, y = check_X_y(X, y)
        pred = np.asarray(self.classifier_.predict(X), dtype=np.int64)
        counts = np.zeros((self.n_labels_, self.n_labels_))
        np.add.at(counts, (y.astype(np.int64), pred), 1.0)
        return ConfusionMatrix(counts / counts.sum(axis=1, keepdims=True))

    def _labels(self, X) -> np.ndarray:
        check_is_fitted(self, "classifier_")
        return np.asarray(self.classifier_.predict(np.asarray(X)), dtype=np.int64)


class SequentialClassifierTest(_FitMixin, BaseEstimator):
    """Power-one test of "samples come from class 0" against "from some class theta != 0".

    Examples
    --------
    >>> est = SequentialClassifierTest(alpha=0.01).fit(X_train, y_train)   # doctest: +SKIP
    >>> est.test(X_stream).tau                                              # doctest: +SKIP
    """

    def __init__(self, classifier=None, alpha: float = 0.05, max_steps: int = 10_000,
                 evaluator: str = "exact", grid_size: int = 1024):
        self.classifier = classifier
        self.alpha = alpha
        self.max_steps = max_steps
        self.evaluator = evaluator
        self.grid_size = grid_size

    def test(self, X, record_trajectory: bool = False) -> TestResult:
        """Classify the rows of ``X`` in order and stop at the first wealth crossing."""
        cfg = TestConfig(self.alpha, self.max_steps, self.evaluator, self.grid_size)
        return run_test(self._labels(X), cfg, self.n_labels_, record_trajectory)

    def gap(self, theta: int) -> float:
        check_is_fitted(self, "confusion_")
        return float(gaps(self.confusion_).null_gaps[theta])


class ChangePointDetector(_FitMixin, BaseEstimator):
    """e-detector on the predicted labels of a raw sample stream."""

    def __init__(self, classifier=None, alpha: float = 1e-3, max_steps: int = 100_000, prune: int | None = None):
        self.classifier = classifier
        self.alpha = alpha
        self.max_steps = max_steps
        self.prune = prune

    def detect(self, X) -> DetectionRecord:
        return run_detector(self._labels(X), self.alpha, self.max_steps, self.prune, self.n_labels_)
