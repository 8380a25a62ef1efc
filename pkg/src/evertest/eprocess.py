"""Betting-wealth e-process over a stream of classifier labels.

At step ``t`` the bettor backs the label ``j_t`` (the running argmax of
label counts seen *before* step ``t``) against label 0. With ``u = -lambda``
the per-step factor is ``1 - u`` when the label is 0 and ``1 + u`` when the
label is ``j_t`` (only when ``j_t != 0``), so after ``n`` steps

    W_n = integral_0^1 (1 - u)**a * (1 + u)**b du

where ``a`` and ``b`` count the two kinds of step. The wealth is a function
of ``(a, b)`` alone, which the evaluators below exploit.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import logsumexp

# beyond this, linear wealth is reported as +inf; use the log evaluators
LOG_OVERFLOW = math.log(1e300)


@dataclass(frozen=True)
class BetCounts:
    """``a``: steps with label 0 while betting; ``b``: steps where the backed label hit."""

    a: int = 0
    b: int = 0

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise ValueError(f"bet counts must be nonnegative, got a={self.a}, b={self.b}")


@dataclass(frozen=True)
class EngineState:
    """Sufficient statistics of the e-process after ``n`` steps.

    ``grid`` holds the per-node log-products ``log M_{n,i}`` when the grid
    evaluator is maintained, else ``None``. ``last_j`` is the index backed at
    the most recent step (``None`` before the first step).
    """

    n: int
    label_counts: tuple[int, ...]
    bet: BetCounts = field(default_factory=BetCounts)
    grid: tuple[float, ...] | None = None
    last_j: int | None = None

    def __post_init__(self):
        if len(self.label_counts) < 2:
            raise ValueError("need at least two labels")
        if sum(self.label_counts) != self.n:
            raise ValueError("label counts must sum to n")
        if self.bet.a + self.bet.b > self.n:
            raise ValueError("a + b cannot exceed n")
        if self.grid is not None:
            if len(self.grid) < 1:
                raise ValueError("grid must have at least one node")
            if not all(math.isfinite(v) for v in self.grid):
                raise ValueError("grid log-products must be finite")

    @property
    def n_labels(self) -> int:
        return len(self.label_counts)

    @property
    def grid_size(self) -> int | None:
        return None if self.grid is None else len(self.grid)


def initial_state(n_labels: int, grid_size: int | None = None) -> EngineState:
    """Fresh state ``W_0 = 1``; pass ``grid_size`` to also maintain the K-node grid."""
    grid = None if grid_size is None else (0.0,) * _check_grid_size(grid_size)
    return EngineState(0, (0,) * n_labels, BetCounts(), grid)


def _check_grid_size(K) -> int:
    if int(K) != K or K < 1:
        raise ValueError(f"grid size must be a positive integer, got {K!r}")
    return int(K)


def grid_nodes(K: int) -> np.ndarray:
    """Nodes ``u_i = -lambda_i`` in (0, 1) for the equal-weight grid.

    Cell midpoints ``(i - 1/2)/K``, with the two end nodes pushed outward by
    ``1/(24 K)``. The shift cancels the leading endpoint error term of the
    midpoint rule, which matters for the sharply peaked integrands at large
    ``a``; all nodes stay strictly inside (0, 1).
    """
    K = _check_grid_size(K)
    h = 1.0 / K
    u = (np.arange(1, K + 1) - 0.5) * h
    if K >= 2:
        u[0] -= h / 24.0
        u[-1] += h / 24.0
    return u


def select_j(label_counts: Sequence[int], t: int | None = None) -> int:
    """Label with the largest count so far, smallest index on ties.

    ``label_counts`` must tally only labels strictly before step ``t``; all
    zero (uniform initial estimate) gives 0.
    """
    return int(np.argmax(np.asarray(label_counts)))


def step(state: EngineState, label: int) -> EngineState:
    """Advance the e-process by one observed label."""
    L1 = state.n_labels
    if not 0 <= label < L1:
        raise ValueError(f"label {label} out of range 0..{L1 - 1}")
    j = select_j(state.label_counts, state.n + 1)
    a, b = state.bet.a, state.bet.b
    y = 0
    if j != 0:
        if label == 0:
            a += 1
            y = 1
        elif label == j:
            b += 1
            y = -1
    counts = list(state.label_counts)
    counts[label] += 1
    grid = state.grid
    if grid is not None and y != 0:
        u = grid_nodes(len(grid))
        # factor 1 + lambda*Y with lambda = -u
        grid = tuple((np.asarray(grid) + np.log1p(-u * y)).tolist())
    return EngineState(state.n + 1, tuple(counts), BetCounts(a, b), grid, j)


def replay(labels: Iterable[int], n_labels: int, grid_size: int | None = None) -> EngineState:
    state = initial_state(n_labels, grid_size)
    for lab in labels:
        state = step(state, int(lab))
    return state


# --------------------------------------------------------------------------
# wealth evaluation


def log_wealth_exact(a: int, b: int) -> float:
    """``log integral_0^1 (1-u)^a (1+u)^b du`` via the binomial series.

    ``W = sum_k C(b,k) k! a! / (a+k+1)!``; consecutive terms have ratio
    ``(b-k)/(a+k+2)``, so the log-terms are a cumulative sum and the total is a
    max-subtracted log-sum-exp of positive terms.
    """
    a = int(a)
    b = int(b)
    if a < 0 or b < 0:
        raise ValueError("counts must be nonnegative")
    log_t0 = -math.log(a + 1)
    if b == 0:
        return log_t0
    k = np.arange(b, dtype=float)
    log_terms = np.empty(b + 1)
    log_terms[0] = log_t0
    np.cumsum(np.log(b - k) - np.log(a + k + 2.0), out=log_terms[1:])
    log_terms[1:] += log_t0
    return float(logsumexp(log_terms))


def wealth_exact(bet: BetCounts) -> float:
    """Exact mixture wealth; ``+inf`` once it exceeds ``1e300`` (see :func:`log_wealth_exact`)."""
    lw = log_wealth_exact(bet.a, bet.b)
    return math.inf if lw > LOG_OVERFLOW else math.exp(lw)


def log_wealth_sup(a, b) -> np.ndarray:
    """Upper bound ``log max_u (1-u)^a (1+u)^b`` on the log wealth (vectorized).

    The integral over a unit interval never exceeds the integrand's maximum,
    attained at ``u* = (b-a)/(a+b)`` when ``b > a`` (else at ``u = 0``).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    s = a + b
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(a > 0, a * np.log(2.0 * a / s), 0.0) + np.where(b > 0, b * np.log(2.0 * b / s), 0.0)
    return np.where(b > a, val, 0.0)


def log_wealth_grid_counts(a, b, K: int) -> np.ndarray:
    """Log of the K-node grid average as a function of bet counts (vectorized)."""
    u = grid_nodes(K)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    logm = a[:, None] * np.log1p(-u)[None, :] + b[:, None] * np.log1p(u)[None, :]
    return logsumexp(logm, axis=1) - math.log(len(u))


def log_wealth_grid(state: EngineState) -> float:
    if state.grid is None:
        raise ValueError("state does not maintain a grid; build it with initial_state(..., grid_size=K)")
    g = np.asarray(state.grid)
    return float(logsumexp(g) - math.log(g.size))


def wealth_grid(state: EngineState, K: int | None = None) -> float:
    """``(1/K) sum_i M_{n,i}`` from the maintained per-node log-products."""
    if state.grid is None:
        raise ValueError("state does not maintain a grid; build it with initial_state(..., grid_size=K)")
    if K is not None and K != len(state.grid):
        raise ValueError(f"state grid has {len(state.grid)} nodes, not {K}")
    lw = log_wealth_grid(state)
    return math.inf if lw > LOG_OVERFLOW else math.exp(lw)


def log_wealth(state: EngineState, evaluator: str = "exact") -> float:
    if evaluator == "exact":
        return log_wealth_exact(state.bet.a, state.bet.b)
    return log_wealth_grid(state)


def _check_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a nonempty vector")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"weights must be nonnegative and sum to 1, got {w.tolist()}")
    return w


def log_mixture_wealth(states: Sequence[EngineState], weights, evaluator: str = "exact") -> float:
    w = _check_weights(weights)
    if len(states) != w.size:
        raise ValueError(f"{len(states)} states but {w.size} weights")
    if len({s.n for s in states}) != 1:
        raise ValueError("all states must have processed the same number of steps")
    logs = np.array([log_wealth(s, evaluator) for s in states])
    with np.errstate(divide="ignore"):
        return float(logsumexp(logs + np.log(w)))


def mixture_wealth(states: Sequence[EngineState], weights, evaluator: str = "exact") -> float:
    """Fixed-weight mixture ``sum_i w_i W_{n,i}`` of e-processes run on one raw stream."""
    lw = log_mixture_wealth(states, weights, evaluator)
    return math.inf if lw > LOG_OVERFLOW else math.exp(lw)


# --------------------------------------------------------------------------
# vectorized scan used by the test / detector drivers


def scan(labels: np.ndarray, counts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Backed indices and bet increments for a block of labels.

    Parameters
    ----------
    labels : int array, shape (m,)
    counts : int array, shape (L+1,)
        Label tallies before the block.

    Returns
    -------
    j : int array, shape (m,)
        Index backed at each step (argmax of counts before that step).
    da, db : int arrays, shape (m,)
        0/1 increments of ``a`` and ``b`` at each step.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n_labels = counts.size
    onehot = np.zeros((labels.size, n_labels), dtype=np.int64)
    onehot[np.arange(labels.size), labels] = 1
    before = np.cumsum(onehot, axis=0) - onehot + counts[None, :]
    j = np.argmax(before, axis=1)
    active = j != 0
    da = (active & (labels == 0)).astype(np.int64)
    db = (active & (labels == j)).astype(np.int64)
    return j, da, db


def check_labels(labels: np.ndarray, n_labels: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= n_labels):
        bad = labels[(labels < 0) | (labels >= n_labels)][0]
        raise ValueError(f"label {int(bad)} out of range 0..{n_labels - 1}")
    return labels.astype(np.int64, copy=False)


TRAJECTORY_COLUMNS = ("step", "label", "j_hat", "a", "b", "log_wealth")


def write_trajectory_csv(rows: Iterable[Sequence], path) -> None:
    """Dump a wealth trajectory with columns ``step,label,j_hat,a,b,log_wealth``."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRAJECTORY_COLUMNS)
        for r in rows:
            writer.writerow([int(r[0]), int(r[1]), int(r[2]), int(r[3]), int(r[4]), repr(float(r[5]))])
