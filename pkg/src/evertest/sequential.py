"""Level-alpha power-one test: stop at the first ``W_n >= 1/alpha``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .eprocess import (
    _check_weights,
    check_labels,
    initial_state,
    log_wealth,
    log_wealth_exact,
    log_wealth_grid_counts,
    log_wealth_sup,
    scan,
    step,
)

# first block pulled from a chunked source; doubles up to _MAX_CHUNK
_FIRST_CHUNK = 64
_MAX_CHUNK = 1 << 16
# absorbs log/exp rounding so that exact ties W_n == 1/alpha still stop
_TIE_TOL = 1e-12


@dataclass(frozen=True)
class TestConfig:
    """Stopping-rule settings.

    ``evaluator`` is ``"exact"`` (closed-form mixture) or ``"grid"``
    (equal-weight average over ``grid_size`` betting fractions).
    """

    alpha: float
    max_steps: int = 10_000
    evaluator: str = "exact"
    grid_size: int = 1024

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie strictly inside (0, 1), got {self.alpha!r}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.evaluator not in ("exact", "grid"):
            raise ValueError(f"evaluator must be 'exact' or 'grid', got {self.evaluator!r}")
        if self.evaluator == "grid" and self.grid_size < 1:
            raise ValueError("grid_size must be >= 1")

    @property
    def log_threshold(self) -> float:
        return -math.log(self.alpha)


@dataclass
class TestResult:
    """Outcome of one sequential test run.

    ``tau`` is ``None`` unless ``stopped``. ``j_hat_at_stop`` is the index
    backed at the stopping step (or at the last processed step when the run
    was truncated). ``trajectory`` rows are
    ``(step, label, j_hat, a, b, log_wealth)``.
    """

    stopped: bool
    tau: int | None
    j_hat_at_stop: int
    final_log_wealth: float
    n_steps: int
    a: int
    b: int
    trajectory: list[tuple] | None = None
    channel_j_hat: tuple[int, ...] | None = field(default=None)

    __test__ = False

    @property
    def final_wealth(self) -> float:
        return math.exp(min(self.final_log_wealth, 700.0))


def _log_eval(config: TestConfig):
    if config.evaluator == "exact":
        return log_wealth_exact
    K = config.grid_size
    return lambda a, b: float(log_wealth_grid_counts(a, b, K)[0])


def _blocks(labels, max_steps: int):
    """Yield ``(block, pushback)`` pairs from an array or a ``take``-able stream."""
    if hasattr(labels, "take") and not isinstance(labels, np.ndarray):
        n = 0
        chunk = _FIRST_CHUNK
        while n < max_steps:
            block = np.asarray(labels.take(min(chunk, max_steps - n)))
            if block.size == 0:
                return
            yield block, getattr(labels, "unread", None)
            n += len(block)
            chunk = min(chunk * 2, _MAX_CHUNK)
    else:
        arr = np.asarray(labels)
        n = min(max_steps, len(arr))
        start = 0
        chunk = _FIRST_CHUNK
        while start < n:
            yield arr[start:min(start + chunk, n)], None
            start += chunk
            chunk = min(chunk * 2, _MAX_CHUNK)


def _is_chunked(labels) -> bool:
    return isinstance(labels, (np.ndarray, list, tuple)) or hasattr(labels, "take")


def run_test(labels, config: TestConfig, n_labels: int | None = None,
             record_trajectory: bool = False) -> TestResult:
    """Run the e-process on ``labels`` until ``W_n >= 1/alpha`` or ``max_steps``.

    ``labels`` may be an array/sequence, a stream exposing ``take(m)`` (and
    optionally ``unread(block)``, used to hand back labels past the stopping
    time), or any iterable, which is consumed one label at a time.
    """
    if n_labels is None:
        n_labels = getattr(labels, "n_labels", None)
    if not _is_chunked(labels):
        return _run_stepwise(iter(labels), config, n_labels, record_trajectory)
    if n_labels is None:
        arr = np.asarray(labels)
        n_labels = max(2, int(arr.max()) + 1 if arr.size else 2)

    thr = config.log_threshold
    evaluate = _log_eval(config)
    counts = np.zeros(n_labels, dtype=np.int64)
    a = b = n = 0
    last_j = 0
    traj = [] if record_trajectory else None

    for block, unread in _blocks(labels, config.max_steps):
        block = check_labels(block, n_labels)
        j, da, db = scan(block, counts)
        A = a + np.cumsum(da)
        B = b + np.cumsum(db)
        hit = None
        cand = np.flatnonzero((db == 1) & (log_wealth_sup(A, B) >= thr - _TIE_TOL))
        for idx in cand:
            if evaluate(A[idx], B[idx]) >= thr - _TIE_TOL:
                hit = int(idx)
                break
        m = len(block) if hit is None else hit + 1
        if traj is not None:
            _extend_trajectory(traj, n, block[:m], j[:m], A[:m], B[:m], evaluate)
        np.add.at(counts, block[:m], 1)
        n += m
        a, b = int(A[m - 1]), int(B[m - 1])
        last_j = int(j[m - 1])
        if hit is not None:
            if unread is not None and m < len(block):
                unread(block[m:])
            return TestResult(True, n, last_j, evaluate(a, b), n, a, b, traj)
    return TestResult(False, None, last_j, evaluate(a, b), n, a, b, traj)


def _extend_trajectory(traj, n0, labels, j, A, B, evaluate):
    prev = None
    for i in range(len(labels)):
        key = (int(A[i]), int(B[i]))
        if key != prev:
            lw = evaluate(*key)
            prev = key
        traj.append((n0 + i + 1, int(labels[i]), int(j[i]), key[0], key[1], lw))


def _run_stepwise(it, config: TestConfig, n_labels, record_trajectory) -> TestResult:
    thr = config.log_threshold
    grid = config.grid_size if config.evaluator == "grid" else None
    state = None
    traj = [] if record_trajectory else None
    for label in it:
        if state is None:
            if n_labels is None:
                raise ValueError("n_labels is required when labels is a plain iterator")
            state = initial_state(n_labels, grid)
        if state.n >= config.max_steps:
            break
        prev_b = state.bet.b
        state = step(state, int(label))
        lw = None
        if traj is not None or state.bet.b != prev_b:
            lw = log_wealth(state, config.evaluator)
        if traj is not None:
            traj.append((state.n, int(label), state.last_j, state.bet.a, state.bet.b, lw))
        if state.bet.b != prev_b and lw >= thr - _TIE_TOL:
            return TestResult(True, state.n, state.last_j, lw, state.n, state.bet.a, state.bet.b, traj)
        if state.n >= config.max_steps:
            break
    if state is None:
        return TestResult(False, None, 0, 0.0, 0, 0, 0, traj)
    return TestResult(False, None, state.last_j or 0, log_wealth(state, config.evaluator),
                      state.n, state.bet.a, state.bet.b, traj)


def identification_trace(labels, horizon: int, n_labels: int | None = None) -> np.ndarray:
    """Backed index ``j_t`` for ``t = 1..horizon``, regardless of stopping."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if hasattr(labels, "take") and not isinstance(labels, np.ndarray):
        block = np.asarray(labels.take(horizon))
        n_labels = n_labels or getattr(labels, "n_labels", None)
    else:
        block = np.asarray(list(labels) if not hasattr(labels, "__len__") else labels)[:horizon]
    if n_labels is None:
        n_labels = max(2, int(block.max()) + 1 if block.size else 2)
    block = check_labels(block, n_labels)
    j, _, _ = scan(block, np.zeros(n_labels, dtype=np.int64))
    return j


def run_mixture_test(channels, weights: Sequence[float], config: TestConfig,
                     n_labels: int | None = None) -> TestResult:
    """Stop at the first time ``sum_c w_c W_{n,c} >= 1/alpha``.

    ``channels`` holds, per step, the label each classifier assigned to the
    same raw observation: an ``(n, C)`` array or a stream whose ``take(m)``
    returns ``(m, C)`` blocks. Each channel runs its own e-process (own
    running argmax); only the weighted wealth is thresholded.
    """
    w = _check_weights(weights)
    log_w = np.log(np.where(w > 0, w, 1.0))
    log_w[w == 0] = -np.inf
    C = w.size
    if n_labels is None:
        n_labels = getattr(channels, "n_labels", None)
    if n_labels is None:
        arr = np.asarray(channels)
        n_labels = max(2, int(arr.max()) + 1)
    thr = config.log_threshold
    evaluate = _log_eval(config)
    counts = np.zeros((C, n_labels), dtype=np.int64)
    a = np.zeros(C, dtype=np.int64)
    b = np.zeros(C, dtype=np.int64)
    n = 0
    last_j = np.zeros(C, dtype=np.int64)
    hit = None

    def mix(av, bv):
        logs = np.array([evaluate(av[c], bv[c]) for c in range(C)])
        return float(logsumexp(logs + log_w))

    for block, unread in _blocks(channels, config.max_steps):
        block = np.asarray(block)
        if block.ndim != 2 or block.shape[1] != C:
            raise ValueError(f"expected blocks of shape (m, {C}), got {block.shape}")
        js, As, Bs, any_b = [], [], [], np.zeros(len(block), dtype=bool)
        for c in range(C):
            lab = check_labels(block[:, c], n_labels)
            j, da, db = scan(lab, counts[c])
            js.append(j)
            As.append(a[c] + np.cumsum(da))
            Bs.append(b[c] + np.cumsum(db))
            any_b |= db == 1
        A = np.vstack(As)
        B = np.vstack(Bs)
        sup = logsumexp(log_wealth_sup(A, B) + log_w[:, None], axis=0)
        hit = None
        for idx in np.flatnonzero(any_b & (sup >= thr - _TIE_TOL)):
            if mix(A[:, idx], B[:, idx]) >= thr - _TIE_TOL:
                hit = int(idx)
                break
        m = len(block) if hit is None else hit + 1
        for c in range(C):
            np.add.at(counts[c], block[:m, c], 1)
        n += m
        a, b = A[:, m - 1].copy(), B[:, m - 1].copy()
        last_j = np.array([js[c][m - 1] for c in range(C)])
        if hit is not None:
            if unread is not None and m < len(block):
                unread(block[m:])
            break
    lw = mix(a, b)
    main = int(np.argmax(w))
    stopped = hit is not None
    return TestResult(stopped, n if stopped else None, int(last_j[main]), lw, n,
                      int(a[main]), int(b[main]), None, tuple(int(v) for v in last_j))
