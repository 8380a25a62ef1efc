"""Synthetic data sources and stand-in classifiers.

The test engine only ever sees the labels a classifier emits. The pieces here
produce such labels either directly (i.i.d. draws from a confusion-matrix
row) or end to end (Gaussian classes -> trained classifier -> labels).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .stats import ConfusionMatrix, LabelPMF


# --------------------------------------------------------------------------
# Gaussian class tuples


@dataclass(frozen=True)
class GaussianTupleSpec:
    """Classes ``N(means[theta], diag(variances))`` for ``theta = 0..L``."""

    means: np.ndarray
    variances: np.ndarray

    def __init__(self, means, variances=None):
        means = np.atleast_2d(np.asarray(means, dtype=float))
        if means.shape[0] < 2:
            raise ValueError("need at least two classes")
        d = means.shape[1]
        variances = np.ones(d) if variances is None else np.atleast_1d(np.asarray(variances, dtype=float))
        if variances.shape != (d,):
            raise ValueError(f"variances must have length {d}, got shape {variances.shape}")
        if np.any(variances <= 0):
            raise ValueError("variances must be strictly positive")
        means.setflags(write=False)
        variances.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @property
    def n_classes(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def to_json(self) -> str:
        return json.dumps({"means": self.means.tolist(), "variances": self.variances.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "GaussianTupleSpec":
        obj = json.loads(text)
        return cls(obj["means"], obj.get("variances"))

    @classmethod
    def load(cls, path) -> "GaussianTupleSpec":
        return cls.from_json(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())


def sample(spec: GaussianTupleSpec, theta: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw from class ``theta``; one vector, or ``(size, d)`` when ``size`` is given."""
    if not 0 <= theta < spec.n_classes:
        raise ValueError(f"theta={theta} out of range 0..{spec.n_classes - 1}")
    shape = (spec.dim,) if size is None else (size, spec.dim)
    return spec.means[theta] + np.sqrt(spec.variances) * rng.standard_normal(shape)


@dataclass
class OfflineDataset:
    """Offline training data: ``samples[theta]`` is an ``(N, d)`` array from class ``theta``."""

    samples: list[np.ndarray]

    def __post_init__(self):
        self.samples = [np.atleast_2d(np.asarray(s, dtype=float)) for s in self.samples]
        if len(self.samples) < 2:
            raise ValueError("need samples from at least two classes")
        sizes = {len(s) for s in self.samples}
        if 0 in sizes:
            raise ValueError("every class needs at least one sample")
        if len(sizes) != 1:
            raise ValueError(f"classes must have equal sample counts, got {sorted(sizes)}")
        if len({s.shape[1] for s in self.samples}) != 1:
            raise ValueError("all samples must share one dimension")

    @property
    def n_classes(self) -> int:
        return len(self.samples)

    @property
    def n_per_class(self) -> int:
        return len(self.samples[0])

    def to_xy(self) -> tuple[np.ndarray, np.ndarray]:
        X = np.vstack(self.samples)
        y = np.repeat(np.arange(self.n_classes), self.n_per_class)
        return X, y

    @classmethod
    def draw(cls, spec: GaussianTupleSpec, n_per_class: int, rng: np.random.Generator) -> "OfflineDataset":
        return cls([sample(spec, t, rng, n_per_class) for t in range(spec.n_classes)])

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            d = self.samples[0].shape[1]
            w.writerow(["label"] + [f"coord_{i}" for i in range(d)])
            for label, block in enumerate(self.samples):
                for row in block:
                    w.writerow([label] + [repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "OfflineDataset":
        with Path(path).open() as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if not header or header[0] != "label":
                raise ValueError("expected header 'label,coord_0,...'")
            rows = [(int(r[0]), [float(v) for v in r[1:]]) for r in reader if r]
        n_classes = max(lab for lab, _ in rows) + 1
        return cls([[x for lab, x in rows if lab == t] for t in range(n_classes)])


# --------------------------------------------------------------------------
# classifiers


class NearestCentroidClassifier(ClassifierMixin, BaseEstimator):
    """Nearest class mean in Euclidean distance; ties go to the smaller label.

    Labels must be ``0..L``; ``centroids_[theta]`` is the mean of class ``theta``.
    """

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        y = y.astype(int)
        self.classes_ = np.arange(int(y.max()) + 1)
        if np.any(y < 0):
            raise ValueError("labels must be nonnegative integers")
        missing = np.setdiff1d(self.classes_, y)
        if missing.size:
            raise ValueError(f"no samples for class(es) {missing.tolist()}")
        self.centroids_ = np.vstack([X[y == c].mean(axis=0) for c in self.classes_])
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "centroids_")
        X = check_array(X)
        d2 = ((X[:, None, :] - self.centroids_[None, :, :]) ** 2).sum(axis=2)
        return np.argmin(d2, axis=1)


def train_centroid(data: OfflineDataset) -> NearestCentroidClassifier:
    X, y = data.to_xy()
    return NearestCentroidClassifier().fit(X, y)


class ThresholdClassifier(ClassifierMixin, BaseEstimator):
    """Two-class rule on one coordinate: label 1 iff ``x[feature] > threshold``.

    With ``flip=True`` the labels are swapped. Nothing is learned; ``fit``
    only records the classes.
    """

    def __init__(self, threshold: float = 0.0, feature: int = 0, flip: bool = False):
        self.threshold = threshold
        self.feature = feature
        self.flip = flip

    def fit(self, X=None, y=None):
        self.classes_ = np.array([0, 1])
        return self

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        x = X[:, self.feature] if X.ndim == 2 else X
        out = (x > self.threshold).astype(int)
        return 1 - out if self.flip else out


class ConstantClassifier(ClassifierMixin, BaseEstimator):
    def __init__(self, label: int = 0):
        self.label = label

    def fit(self, X=None, y=None):
        return self

    def predict(self, X):
        return np.full(len(X), self.label, dtype=int)


def empirical_confusion(classifier, data: OfflineDataset, n_labels: int | None = None) -> np.ndarray:
    """Row ``theta`` = label frequencies of ``classifier`` on class-``theta`` samples."""
    n_labels = n_labels or data.n_classes
    rows = []
    for block in data.samples:
        pred = np.asarray(classifier.predict(block), dtype=int)
        rows.append(np.bincount(pred, minlength=n_labels)[:n_labels] / len(block))
    return np.vstack(rows)


def estimate_confusion(classifier, spec: GaussianTupleSpec, n_eval: int, rng: np.random.Generator) -> ConfusionMatrix:
    """Monte-Carlo confusion matrix from ``n_eval`` fresh draws per class."""
    if n_eval < 1:
        raise ValueError("n_eval must be >= 1")
    data = OfflineDataset([sample(spec, t, rng, n_eval) for t in range(spec.n_classes)])
    return ConfusionMatrix(empirical_confusion(classifier, data, spec.n_classes))


def min_gap(rows) -> float:
    """``min over theta, m != theta`` of ``rows[theta, theta] - rows[theta, m]``."""
    rows = np.asarray(rows, dtype=float)
    diag = np.diag(rows)
    g = diag[:, None] - rows
    return float(g[~np.eye(len(rows), dtype=bool)].min())


def erm_max_gap(family: Sequence, data: OfflineDataset):
    """Pick the classifier with the largest empirical separability gap.

    Returns ``(classifier, gap)``; ties go to the earliest member of ``family``.
    """
    if len(family) == 0:
        raise ValueError("classifier family is empty")
    best, best_gap = None, -np.inf
    for g in family:
        gap = min_gap(empirical_confusion(g, data))
        if gap > best_gap:
            best, best_gap = g, gap
    return best, best_gap


# --------------------------------------------------------------------------
# label streams


def draw_labels(pmf, size: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws over the cumulative sums of ``pmf`` in label order."""
    probs = np.asarray(pmf.probs if isinstance(pmf, LabelPMF) else LabelPMF(pmf).probs)
    cdf = np.cumsum(probs)
    u = rng.random(size)
    return np.minimum(np.searchsorted(cdf, u, side="right"), probs.size - 1)


class LabelStream:
    """I.i.d. labels from one pmf, drawn lazily from a dedicated generator.

    ``take(m)`` returns the next ``m`` labels; ``unread(block)`` pushes labels
    back so that a consumer which over-read can return the stream to the
    exact position it stopped at. Iterating yields one label at a time.
    """

    def __init__(self, pmf, rng: np.random.Generator):
        self.pmf = pmf if isinstance(pmf, LabelPMF) else LabelPMF(pmf)
        self.rng = rng
        self.n_labels = self.pmf.n_labels
        self.consumed = 0
        self._buffer = np.empty(0, dtype=np.int64)

    def _fresh(self, m: int) -> np.ndarray:
        return draw_labels(self.pmf, m, self.rng)

    def take(self, m: int) -> np.ndarray:
        buf, self._buffer = self._buffer[:m], self._buffer[m:]
        out = buf if len(buf) >= m else np.concatenate([buf, self._fresh(m - len(buf))])
        self.consumed += len(out)
        return out

    def unread(self, block) -> None:
        block = np.asarray(block, dtype=np.int64)
        self._buffer = np.concatenate([block, self._buffer])
        self.consumed -= len(block)

    def __iter__(self):
        return self

    def __next__(self) -> int:
        return int(self.take(1)[0])


def multinomial_stream(row, rng: np.random.Generator) -> LabelStream:
    return LabelStream(row, rng)


class ChangeStream(LabelStream):
    """Labels from ``pre`` for steps ``1..change_at-1`` and from ``post`` afterwards."""

    def __init__(self, pre, post, change_at: int, rng: np.random.Generator):
        super().__init__(pre, rng)
        self.post = post if isinstance(post, LabelPMF) else LabelPMF(post)
        if self.post.n_labels != self.n_labels:
            raise ValueError("pre and post pmfs must have the same number of labels")
        self.change_at = change_at
        self._drawn = 0

    def _fresh(self, m: int) -> np.ndarray:
        t = self._drawn + 1 + np.arange(m)
        u = self.rng.random(m)
        pre = np.minimum(np.searchsorted(np.cumsum(self.pmf.probs), u, side="right"), self.n_labels - 1)
        post = np.minimum(np.searchsorted(np.cumsum(self.post.probs), u, side="right"), self.n_labels - 1)
        self._drawn += m
        return np.where(t >= self.change_at, post, pre)


class CoupledLabelStream(LabelStream):
    """Several classifiers labelling the same observations.

    One uniform per step is pushed through every channel's inverse CDF, so
    the channels are comonotone: they disagree only where their cumulative
    distributions do. ``take(m)`` returns an ``(m, C)`` array.
    """

    def __init__(self, rows: Sequence, rng: np.random.Generator):
        self.pmfs = [r if isinstance(r, LabelPMF) else LabelPMF(r) for r in rows]
        if len({p.n_labels for p in self.pmfs}) != 1:
            raise ValueError("all channels must share one label set")
        self.rng = rng
        self.n_labels = self.pmfs[0].n_labels
        self.consumed = 0
        self._buffer = np.empty((0, len(self.pmfs)), dtype=np.int64)

    def _fresh(self, m: int) -> np.ndarray:
        u = self.rng.random(m)
        cols = [np.minimum(np.searchsorted(np.cumsum(p.probs), u, side="right"), self.n_labels - 1)
                for p in self.pmfs]
        return np.column_stack(cols)

    def unread(self, block) -> None:
        block = np.asarray(block, dtype=np.int64).reshape(-1, len(self.pmfs))
        self._buffer = np.concatenate([block, self._buffer])
        self.consumed -= len(block)

    def __next__(self):
        return self.take(1)[0]


class ClassifiedStream(LabelStream):
    """Labels produced by running ``classifier`` on fresh draws from class ``theta``."""

    def __init__(self, classifier, spec: GaussianTupleSpec, theta: int, rng: np.random.Generator,
                 n_labels: int | None = None):
        self.classifier = classifier
        self.spec = spec
        self.theta = theta
        self.rng = rng
        self.n_labels = n_labels or spec.n_classes
        self.consumed = 0
        self._buffer = np.empty(0, dtype=np.int64)

    def _fresh(self, m: int) -> np.ndarray:
        return np.asarray(self.classifier.predict(sample(self.spec, self.theta, self.rng, m)), dtype=np.int64)
