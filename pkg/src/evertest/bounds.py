"""Closed-form bounds for the classifier-based test and its extensions.

All logarithms are natural.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .stats import GapReport, kl_pmf


@dataclass(frozen=True)
class TauBoundReport:
    """``E[tau] <= max(n0, n1, alpha_term) + constant``."""

    n0: int
    n1: int
    alpha_term: float
    constant: float
    total: float

    def as_dict(self) -> dict:
        return asdict(self)


def _n0_lhs(n):
    return np.sqrt(8.0 * np.log(2.0 * np.asarray(n, dtype=float) ** 3) / n)


def _n1_lhs(n):
    n = np.asarray(n, dtype=float)
    return 2.0 * np.log(n) / n


def _tail_index(f: Callable, level: float, peak_candidates: Sequence[int]) -> int:
    """Smallest ``m >= 1`` with ``f(n) <= level`` for every ``n >= m``.

    ``f`` must be unimodal on the integers with its maximum among
    ``peak_candidates`` and decreasing afterwards. If the condition holds at
    the maximum it holds everywhere (``m = 1``); otherwise ``m`` is the first
    crossing after the peak, found by doubling then bisection.
    """
    peak = max(peak_candidates, key=lambda n: float(f(n)))
    if float(f(peak)) <= level:
        return 1
    lo, hi = peak, peak * 2
    while float(f(hi)) > level:
        lo, hi = hi, hi * 2
    # f(lo) > level >= f(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if float(f(mid)) > level:
            lo = mid
        else:
            hi = mid
    return hi


def n0_index(delta: float) -> int:
    """First index after which ``sqrt(8 log(2 n^3) / n) <= delta / 2`` for good."""
    # continuous maximum at n^3 = e^3 / 2, i.e. n ~ 2.38
    return _tail_index(_n0_lhs, delta / 2.0, (1, 2, 3))


def n1_index(delta: float) -> int:
    """First index after which ``2 log(n) / n <= delta^2 / 32`` for good."""
    # continuous maximum at n = e
    return _tail_index(_n1_lhs, delta ** 2 / 32.0, (2, 3))


def tau_upper_bound(alpha: float, delta: float, L: int) -> TauBoundReport:
    """Non-asymptotic bound on the expected stopping time under an alternative with gap ``delta``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must lie in (0, 1]")
    if L < 1:
        raise ValueError("L must be >= 1")
    n0 = n0_index(delta)
    n1 = n1_index(delta)
    alpha_term = 32.0 * math.log(1.0 / alpha) / delta ** 2
    constant = (L + 2) * math.pi ** 2 / 6.0
    return TauBoundReport(n0, n1, alpha_term, constant, max(n0, n1, alpha_term) + constant)


def min_training_size(alpha: float, pairwise_j) -> float:
    """Necessary offline sample size ``log(1/alpha) / min_{theta != m} J(P_theta, P_m)``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    J = np.atleast_2d(np.asarray(pairwise_j, dtype=float))
    if J.shape[0] != J.shape[1]:
        raise ValueError("pairwise divergence matrix must be square")
    off = J[~np.eye(J.shape[0], dtype=bool)]
    if off.size == 0:
        raise ValueError("need at least two classes")
    jmin = float(off.min())
    if jmin <= 0:
        raise ValueError("two distinct classes have zero divergence; they are indistinguishable")
    return math.log(1.0 / alpha) / jmin


def gaussian_pairwise_j(means, variances) -> np.ndarray:
    """Symmetrized KL between every pair of Gaussians sharing ``diag(variances)``."""
    means = np.atleast_2d(np.asarray(means, dtype=float))
    var = np.asarray(variances, dtype=float)
    diff = means[:, None, :] - means[None, :, :]
    return (diff ** 2 / var).sum(axis=2)


def mismatch_tolerance(gaps: GapReport, metric: str = "KL") -> float:
    """Largest mismatch strength (exclusive) under which separability is guaranteed."""
    g = gaps.min_pairwise_gap
    if g <= 0:
        raise ValueError("gaps come from a non-separable matrix (min gap <= 0)")
    metric = metric.upper()
    if metric == "KL":
        return 0.5 * g * g
    if metric == "TV":
        return 0.5 * g
    raise ValueError(f"unknown metric {metric!r}")


def tilde_delta_envelope(gaps: GapReport, eps: float, metric: str = "KL") -> dict[int, tuple[float, float]]:
    """Range of the test-time gap ``p~_theta[theta] - p~_theta[0]`` for each alternative.

    The half-width is ``sqrt(2 eps)`` for KL and ``2 eps`` for TV. The lower
    end is clamped at 0 (the gap itself is strictly positive inside the
    tolerance).
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    tol = mismatch_tolerance(gaps, metric)
    if eps > tol:
        raise ValueError(f"eps={eps} exceeds the mismatch tolerance {tol}")
    s = math.sqrt(2.0 * eps) if metric.upper() == "KL" else 2.0 * eps
    out = {}
    for theta in range(1, len(gaps.null_gaps)):
        d = float(gaps.null_gaps[theta])
        out[theta] = (max(d - s, 0.0), d + s)
    return out


def vc_sample_size(gamma: float, d: float, L: int, delta: float) -> float:
    """Offline sample size sufficient for ERM to return a separable classifier w.p. ``1 - delta``."""
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    if d < 1:
        raise ValueError("d must be >= 1")
    if L < 1:
        raise ValueError("L must be >= 1")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    g2 = gamma * gamma
    body = 16.0 * d / g2 * math.log(16.0 * math.e / g2) + 16.0 / g2 * math.log(4.0 * (L + 1) ** 2 / delta)
    return max(float(d), body)


def minimax_log_psi_lower(n: float, alpha: float, max_kl: float, B: float, N: float, M: float,
                          L: int, delta_param: float) -> float:
    """Lower bound on ``log sup P(tau > n)`` over the two-point environments.

    All environment constants (``B``, ``M``, the parameter offset
    ``delta_param``, and the worst-case divergence ``max_kl``) are supplied by
    the caller.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if min(n, B, M, N) < 0:
        raise ValueError("n, B, M and N must be nonnegative")
    capacity = 0.25 * B * math.exp(-N * M * (L + 1) * delta_param ** 2)
    return -(n * (max_kl - capacity) + math.log(2.0)) / (1.0 - alpha)


def lorden_delay_lower(alpha: float, post_row, pre_row) -> float:
    """Order-level reference ``log(1/alpha) / D(post || pre)`` for the worst-case detection delay."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    kl = kl_pmf(post_row, pre_row)
    if kl == 0 or not math.isfinite(kl):
        raise ValueError(f"KL(post || pre) must be finite and positive, got {kl}")
    return math.log(1.0 / alpha) / kl


@dataclass(frozen=True)
class QuadraticFit:
    c: float
    alphas: np.ndarray
    curve: np.ndarray

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.alphas.tolist(), self.curve.tolist()))


def fine_alpha_grid(alphas, size: int) -> np.ndarray:
    """Geometric grid of about ``size`` levels spanning ``alphas`` and containing each of them."""
    alphas = np.unique(np.asarray(alphas, dtype=float))
    lo, hi = alphas[0], alphas[-1]
    if lo == hi:
        return alphas
    inner = max(size - alphas.size, 0)
    fill = np.geomspace(lo, hi, inner + 2)[1:-1]
    return np.union1d(alphas, fill)


def quadratic_fit(alphas, mean_taus, delta: float, fine_grid: int = 1000) -> QuadraticFit:
    """Single scaling constant matching ``mean_tau ~ c log(1/(alpha delta)) / delta^2``.

    ``c`` averages ``mean_tau * delta^2 / log(1/(alpha delta))`` over the
    levels; the returned curve is ``c log(1/alpha) / delta^2`` on a fine grid
    (the fitted constant uses ``alpha * delta`` inside the log, the curve plain
    ``alpha``).
    """
    alphas = np.asarray(alphas, dtype=float)
    taus = np.asarray(mean_taus, dtype=float)
    if alphas.ndim != 1 or alphas.size == 0 or alphas.shape != taus.shape:
        raise ValueError("alphas and mean_taus must be equal-length nonempty vectors")
    if not 0.0 < delta:
        raise ValueError("delta must be positive")
    ad = alphas * delta
    if np.any(ad <= 0) or np.any(ad >= 1):
        raise ValueError("every alpha * delta must lie in (0, 1)")
    if not np.all(np.isfinite(taus)):
        raise ValueError("mean_taus must be finite")
    c = float(np.mean(taus * delta ** 2 / np.log(1.0 / ad)))
    grid = fine_alpha_grid(alphas, fine_grid)
    return QuadraticFit(c, grid, c * np.log(1.0 / grid) / delta ** 2)
