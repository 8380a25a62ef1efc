"""Change-point detection with an e-detector.

A fresh e-process is started at every step ``k``; ``M_n`` is the largest
wealth among them and an alarm is raised at the first ``M_n >= 1/alpha``.
Each start backs the argmax of the label counts inside its *own* window, so
the start at the change time behaves exactly like a fresh sequential test on
post-change data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .eprocess import BetCounts, log_wealth_exact, log_wealth_sup

_TIE_TOL = 1e-12


@dataclass(frozen=True)
class StartState:
    k: int
    label_counts: tuple[int, ...]
    bet: BetCounts


class DetectorState:
    """Per-start window statistics, stored column-wise for vectorized updates."""

    def __init__(self, n_labels: int):
        if n_labels < 2:
            raise ValueError("need at least two labels")
        self.n_labels = n_labels
        self.n = 0
        self.k = np.empty(0, dtype=np.int64)
        self.counts = np.empty((0, n_labels), dtype=np.int64)
        self.a = np.empty(0, dtype=np.int64)
        self.b = np.empty(0, dtype=np.int64)
        self.current_log_M = -math.inf

    @property
    def current_M(self) -> float:
        return math.exp(min(self.current_log_M, 700.0))

    @property
    def n_active(self) -> int:
        return self.k.size

    @property
    def starts(self) -> list[StartState]:
        return [StartState(int(k), tuple(int(c) for c in cnt), BetCounts(int(a), int(b)))
                for k, cnt, a, b in zip(self.k, self.counts, self.a, self.b)]

    def copy(self) -> "DetectorState":
        other = DetectorState(self.n_labels)
        other.n = self.n
        other.k = self.k.copy()
        other.counts = self.counts.copy()
        other.a = self.a.copy()
        other.b = self.b.copy()
        other.current_log_M = self.current_log_M
        return other

    def advance(self, label: int) -> np.ndarray:
        """Spawn the start ``k = n+1``, apply ``label`` to every start; return the b-increment mask."""
        if not 0 <= label < self.n_labels:
            raise ValueError(f"label {label} out of range 0..{self.n_labels - 1}")
        self.n += 1
        self.k = np.append(self.k, self.n)
        self.counts = np.vstack([self.counts, np.zeros((1, self.n_labels), dtype=np.int64)])
        self.a = np.append(self.a, 0)
        self.b = np.append(self.b, 0)
        j = np.argmax(self.counts, axis=1)
        active = j != 0
        if label == 0:
            self.a += active
            db = np.zeros(self.k.size, dtype=bool)
        else:
            db = active & (j == label)
            self.b += db
        self.counts[:, label] += 1
        return db

    def log_wealths(self) -> np.ndarray:
        # many starts share (a, b); evaluate each distinct pair once
        pairs, inv = np.unique(np.stack([self.a, self.b], axis=1), axis=0, return_inverse=True)
        vals = np.array([log_wealth_exact(a, b) for a, b in pairs])
        return vals[inv.ravel()] if vals.size else vals

    def max_log_wealth(self) -> float:
        """Exact ``log M_n``; starts are evaluated in order of their upper bound until it cannot win."""
        sups = log_wealth_sup(self.a, self.b)
        best = -math.inf
        for idx in np.argsort(-sups, kind="stable"):
            if sups[idx] <= best:
                break
            best = max(best, log_wealth_exact(self.a[idx], self.b[idx]))
        return best

    def prune(self, cap: int) -> np.ndarray | None:
        """Keep the newest start plus the ``cap - 1`` starts with the largest wealth.

        Returns the kept positions, or ``None`` when nothing was dropped.
        """
        if cap < 1:
            raise ValueError("prune cap must be >= 1")
        if self.k.size <= cap:
            return None
        lw = self.log_wealths()
        lw[-1] = math.inf
        keep = np.sort(np.argsort(-lw, kind="stable")[:cap])
        self.k = self.k[keep]
        self.counts = self.counts[keep]
        self.a = self.a[keep]
        self.b = self.b[keep]
        return keep


def detector_step(state: DetectorState, label: int, prune: int | None = None) -> tuple[DetectorState, float]:
    """Process one label in place; returns ``(state, M_n)``."""
    state.advance(int(label))
    if prune is not None:
        state.prune(prune)
    state.current_log_M = state.max_log_wealth()
    return state, state.current_M


@dataclass
class DetectionRecord:
    alarmed: bool
    alarm_time: int | None
    n_steps: int
    log_M: float
    max_active: int


def _label_iter(labels, max_steps):
    if hasattr(labels, "take") and not isinstance(labels, np.ndarray):
        n = 0
        chunk = 64
        while n < max_steps:
            block = np.asarray(labels.take(min(chunk, max_steps - n)))
            if block.size == 0:
                return
            for i, lab in enumerate(block):
                if (yield int(lab)):
                    unread = getattr(labels, "unread", None)
                    if unread is not None and i + 1 < len(block):
                        unread(block[i + 1:])
                    return
            n += len(block)
            chunk = min(chunk * 2, 4096)
    else:
        for i, lab in enumerate(labels):
            if i >= max_steps:
                return
            if (yield int(lab)):
                return


def run_detector(labels, alpha: float, max_steps: int, prune: int | None = None,
                 n_labels: int | None = None) -> DetectionRecord:
    """Raise an alarm at the first ``M_n >= 1/alpha``, or report none by ``max_steps``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie strictly inside (0, 1), got {alpha!r}")
    if n_labels is None:
        n_labels = getattr(labels, "n_labels", None)
    if n_labels is None:
        labels = np.asarray(labels)
        n_labels = max(2, int(labels.max()) + 1)
    thr = -math.log(alpha)
    state = DetectorState(n_labels)
    max_active = 0
    gen = _label_iter(labels, max_steps)
    try:
        label = next(gen)
    except StopIteration:
        return DetectionRecord(False, None, 0, -math.inf, 0)
    while True:
        db = state.advance(label)
        if prune is not None:
            keep = state.prune(prune)
            if keep is not None:
                db = db[keep]
        max_active = max(max_active, state.k.size)
        # only starts whose wealth just grew can newly cross the threshold
        cand = np.flatnonzero(db)
        if cand.size:
            sups = log_wealth_sup(state.a[cand], state.b[cand])
            for idx in cand[sups >= thr - _TIE_TOL]:
                lw = log_wealth_exact(state.a[idx], state.b[idx])
                if lw >= thr - _TIE_TOL:
                    try:
                        gen.send(True)
                    except StopIteration:
                        pass
                    return DetectionRecord(True, state.n, state.n, lw, max_active)
        try:
            label = next(gen)
        except StopIteration:
            break
    return DetectionRecord(False, None, state.n, state.max_log_wealth(), max_active)
