"""Label-distribution arithmetic.

A classifier ``g`` enters the testing machinery only through the label
distributions it induces: row ``theta`` of a confusion matrix is the pmf of
``g(X)`` when ``X ~ P_theta``. Everything here operates on those pmfs.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

PMF_TOL = 1e-9


def _as_probs(probs, normalize: bool = False) -> np.ndarray:
    arr = np.asarray(probs, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"pmf must be one-dimensional, got shape {arr.shape}")
    if arr.size < 2:
        raise ValueError("pmf needs at least two labels (L >= 1)")
    if not np.all(np.isfinite(arr)):
        raise ValueError("pmf entries must be finite")
    if np.any(arr < 0.0) or (not normalize and np.any(arr > 1.0 + PMF_TOL)):
        raise ValueError(f"pmf entries must lie in [0, 1]: {arr.tolist()}")
    total = arr.sum()
    if normalize:
        if total <= 0:
            raise ValueError("cannot normalize an all-zero vector")
        arr = arr / total
    elif abs(total - 1.0) > PMF_TOL:
        raise ValueError(f"pmf must sum to 1 within {PMF_TOL}, sums to {total!r}")
    return arr


@dataclass(frozen=True, eq=False)
class LabelPMF:
    """Distribution over the labels ``0..L``.

    Validation is strict: entries in [0, 1] summing to one within ``1e-9``.
    Pass ``normalize=True`` to :meth:`from_counts`-style inputs that should be
    rescaled; nothing is renormalized silently.
    """

    probs: np.ndarray

    def __init__(self, probs, normalize: bool = False):
        arr = _as_probs(probs, normalize=normalize)
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)

    @classmethod
    def from_counts(cls, counts) -> "LabelPMF":
        return cls(np.asarray(counts, dtype=float), normalize=True)

    @property
    def n_labels(self) -> int:
        return self.probs.size

    def __len__(self) -> int:
        return self.probs.size

    def __getitem__(self, m):
        return self.probs[m]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.probs, dtype=dtype)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabelPMF):
            return NotImplemented
        return np.array_equal(self.probs, other.probs)

    def __hash__(self) -> int:
        return hash(self.probs.tobytes())

    def __repr__(self) -> str:
        return f"LabelPMF({self.probs.tolist()})"


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Square row-stochastic matrix; row ``theta`` is the label pmf under ``P_theta``."""

    rows: np.ndarray

    def __init__(self, rows, normalize: bool = False):
        if isinstance(rows, ConfusionMatrix):
            rows = rows.rows
        raw = [np.asarray(r.probs if isinstance(r, LabelPMF) else r, dtype=float) for r in rows]
        if len(raw) < 2:
            raise ValueError("confusion matrix needs at least two rows")
        arr = np.vstack([_as_probs(r, normalize=normalize) for r in raw])
        if arr.shape[0] != arr.shape[1]:
            raise ValueError(f"confusion matrix must be square, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "rows", arr)

    @property
    def n_labels(self) -> int:
        return self.rows.shape[0]

    @property
    def L(self) -> int:
        return self.rows.shape[0] - 1

    def row(self, theta: int) -> LabelPMF:
        if not 0 <= theta < self.n_labels:
            raise IndexError(f"theta={theta} out of range 0..{self.L}")
        return LabelPMF(self.rows[theta])

    def __getitem__(self, theta: int) -> LabelPMF:
        return self.row(theta)

    def __len__(self) -> int:
        return self.n_labels

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.rows, dtype=dtype)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return np.array_equal(self.rows, other.rows)

    def __hash__(self) -> int:
        return hash(self.rows.tobytes())

    def __repr__(self) -> str:
        return f"ConfusionMatrix({self.rows.tolist()})"

    def permuted(self, perm: Sequence[int]) -> "ConfusionMatrix":
        """Relabel classes: new label ``i`` is old label ``perm[i]`` (rows and columns)."""
        perm = np.asarray(perm, dtype=int)
        if sorted(perm.tolist()) != list(range(self.n_labels)):
            raise ValueError(f"not a permutation of 0..{self.L}: {perm.tolist()}")
        return ConfusionMatrix(self.rows[np.ix_(perm, perm)])

    # serialization -------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps({"rows": [[float(v) for v in r] for r in self.rows]})

    @classmethod
    def from_json(cls, text: str) -> "ConfusionMatrix":
        obj = json.loads(text)
        if isinstance(obj, dict):
            obj = obj["rows"]
        return cls(obj)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        for r in self.rows:
            writer.writerow([repr(float(v)) for v in r])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ConfusionMatrix":
        rows = [[float(v) for v in rec] for rec in csv.reader(io.StringIO(text)) if rec]
        return cls(rows)


def load_confusion(path) -> ConfusionMatrix:
    """Read a confusion matrix from ``.json`` (``{"rows": ...}``) or CSV."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json" or text.lstrip().startswith(("{", "[")):
        return ConfusionMatrix.from_json(text)
    return ConfusionMatrix.from_csv(text)


def save_confusion(cm: ConfusionMatrix, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        path.write_text(cm.to_csv())
    else:
        path.write_text(cm.to_json())


@dataclass(frozen=True)
class GapReport:
    """Separability gaps of a confusion matrix.

    Attributes
    ----------
    pairwise_gaps : ndarray, shape (L+1, L+1)
        ``pairwise_gaps[theta, m] = p_theta[theta] - p_theta[m]``.
    null_gaps : ndarray, shape (L+1,)
        ``null_gaps[theta] = p_theta[theta] - p_theta[0]``; entry 0 is always 0.
    min_pairwise_gap : float
        Minimum off-diagonal entry of ``pairwise_gaps``.
    """

    pairwise_gaps: np.ndarray
    null_gaps: np.ndarray
    min_pairwise_gap: float

    @property
    def argmin_pair(self) -> tuple[int, int]:
        g = self.pairwise_gaps.copy()
        np.fill_diagonal(g, np.inf)
        theta, m = np.unravel_index(np.argmin(g), g.shape)
        return int(theta), int(m)


def gaps(cm: ConfusionMatrix) -> GapReport:
    rows = np.asarray(cm.rows)
    diag = np.diag(rows)
    pairwise = diag[:, None] - rows
    np.fill_diagonal(pairwise, 0.0)
    null = pairwise[:, 0].copy()
    off = pairwise[~np.eye(rows.shape[0], dtype=bool)]
    pairwise.setflags(write=False)
    null.setflags(write=False)
    return GapReport(pairwise, null, float(off.min()))


def is_separable(cm: ConfusionMatrix) -> bool:
    """Strict diagonal dominance of every row; ties are not separable."""
    rows = np.asarray(cm.rows)
    diag = np.diag(rows)
    off = np.where(np.eye(rows.shape[0], dtype=bool), -np.inf, rows)
    return bool(np.all(diag > off.max(axis=1)))


def _pair(p, q) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p.probs if isinstance(p, LabelPMF) else p, dtype=float)
    q = np.asarray(q.probs if isinstance(q, LabelPMF) else q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    return p, q


def kl_pmf(p, q) -> float:
    """KL divergence ``D(p || q)`` in nats; ``+inf`` when ``q`` misses mass of ``p``."""
    p, q = _pair(p, q)
    support = p > 0
    if np.any(q[support] == 0):
        return math.inf
    val = float(np.sum(p[support] * (np.log(p[support]) - np.log(q[support]))))
    return max(val, 0.0)


def tv_pmf(p, q) -> float:
    p, q = _pair(p, q)
    return float(min(0.5 * np.abs(p - q).sum(), 1.0))


def kl_gaussian_diag(mu_p, mu_q, var) -> float:
    """KL between two Gaussians sharing the diagonal covariance ``diag(var)``."""
    mu_p = np.atleast_1d(np.asarray(mu_p, dtype=float))
    mu_q = np.atleast_1d(np.asarray(mu_q, dtype=float))
    var = np.atleast_1d(np.asarray(var, dtype=float))
    if not (mu_p.shape == mu_q.shape == var.shape):
        raise ValueError("mean and variance vectors must share one dimension")
    if np.any(var <= 0):
        raise ValueError("variances must be strictly positive")
    return float(np.sum((mu_p - mu_q) ** 2 / (2.0 * var)))


def j_symmetrized(p, q, var=None) -> float:
    """Symmetrized KL ``D(p||q) + D(q||p)``.

    With ``var`` given, ``p`` and ``q`` are Gaussian means sharing
    ``diag(var)``; otherwise they are label pmfs.
    """
    if var is not None:
        return kl_gaussian_diag(p, q, var) + kl_gaussian_diag(q, p, var)
    return kl_pmf(p, q) + kl_pmf(q, p)


def row_divergences(train: ConfusionMatrix, test: ConfusionMatrix, metric: str = "KL") -> np.ndarray:
    """Per-row divergence between training-time and test-time label pmfs."""
    if train.rows.shape != test.rows.shape:
        raise ValueError(f"shape mismatch: {train.rows.shape} vs {test.rows.shape}")
    metric = metric.upper()
    if metric == "KL":
        fn = kl_pmf
    elif metric == "TV":
        fn = tv_pmf
    else:
        raise ValueError(f"unknown metric {metric!r}; expected 'KL' or 'TV'")
    return np.array([fn(p, q) for p, q in zip(train.rows, test.rows)])


def mismatch_within(train: ConfusionMatrix, test: ConfusionMatrix, eps: float, metric: str = "KL") -> bool:
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    return bool(np.all(row_divergences(train, test, metric) <= eps))
