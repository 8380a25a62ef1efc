import csv
import math
from fractions import Fraction
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evertest import tables
from evertest.eprocess import (
    BetCounts,
    EngineState,
    grid_nodes,
    initial_state,
    log_wealth_exact,
    log_wealth_grid,
    log_wealth_grid_counts,
    log_wealth_sup,
    mixture_wealth,
    replay,
    scan,
    select_j,
    step,
    wealth_exact,
    wealth_grid,
    write_trajectory_csv,
)


def exact_integral(a: int, b: int) -> Fraction:
    """Expand (1-u)^a (1+u)^b with integer coefficients and integrate termwise."""
    poly = [1]
    for factor, times in (((1, -1), a), ((1, 1), b)):
        for _ in range(times):
            nxt = [0] * (len(poly) + 1)
            for i, c in enumerate(poly):
                nxt[i] += c * factor[0]
                nxt[i + 1] += c * factor[1]
            poly = nxt
    return sum(Fraction(c, i + 1) for i, c in enumerate(poly))


# --- index selection ------------------------------------------------------------

@pytest.mark.parametrize("counts,t,want", [([0, 0, 0], 1, 0), ([3, 5, 5], 14, 1), ([2, 7, 1], 11, 1)])
def test_select_j(counts, t, want):
    assert select_j(counts, t) == want


# --- step -----------------------------------------------------------------------------

def test_step_fresh_is_neutral():
    s = step(initial_state(2), 1)
    assert (s.bet, s.label_counts, s.last_j) == (BetCounts(0, 0), (0, 1), 0)


def test_step_backs_prior_argmax():
    s = step(EngineState(1, (0, 1)), 1)
    assert s.last_j == 1 and s.bet == BetCounts(0, 1) and s.label_counts == (0, 2)


def test_step_null_tracking_is_neutral():
    s = step(EngineState(6, (5, 1), BetCounts(0, 0)), 0)
    assert s.last_j == 0 and s.bet.a == 0


def test_step_rejects_bad_label():
    with pytest.raises(ValueError):
        step(initial_state(3), 3)
    with pytest.raises(ValueError):
        step(initial_state(3), -1)


def test_state_invariants_checked():
    with pytest.raises(ValueError):
        EngineState(2, (1, 0))
    with pytest.raises(ValueError):
        EngineState(1, (0, 1), BetCounts(1, 1))
    with pytest.raises(ValueError):
        EngineState(0, (0, 0), grid=(math.inf,))
    with pytest.raises(ValueError):
        BetCounts(-1, 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 2), max_size=60))
def test_step_deterministic_and_counts_monotone(labels):
    s1 = replay(labels, 3, grid_size=8)
    s2 = replay(labels, 3, grid_size=8)
    assert s1 == s2
    prev = initial_state(3)
    for lab in labels:
        nxt = step(prev, lab)
        assert nxt.bet.a >= prev.bet.a and nxt.bet.b >= prev.bet.b
        prev = nxt


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 3), max_size=200))
def test_scan_matches_stepwise(labels):
    j, da, db = scan(np.array(labels, dtype=np.int64), np.zeros(4, dtype=np.int64))
    s = initial_state(4)
    for i, lab in enumerate(labels):
        nxt = step(s, lab)
        assert nxt.last_j == j[i]
        assert nxt.bet.a - s.bet.a == da[i] and nxt.bet.b - s.bet.b == db[i]
        s = nxt


# --- exact wealth ---------------------------------------------------------------------

@pytest.mark.parametrize("a,b,want", [(0, 0, 1), (1, 0, 0.5), (0, 1, 1.5), (1, 1, 2 / 3), (0, 2, 7 / 3)])
def test_wealth_exact_small(a, b, want):
    assert wealth_exact(BetCounts(a, b)) == pytest.approx(want, rel=1e-15)


def test_wealth_exact_quadrature_case():
    from scipy.integrate import quad

    val, _ = quad(lambda u: (1 - u) ** 2 * (1 + u) ** 5, 0, 1, epsabs=0, epsrel=1e-13)
    assert wealth_exact(BetCounts(2, 5)) == pytest.approx(val, rel=1e-10)
    assert wealth_exact(BetCounts(2, 5)) == pytest.approx(float(exact_integral(2, 5)), rel=1e-14)


def test_wealth_exact_rational_oracle_exhaustive():
    worst = 0.0
    for a in range(41):
        for b in range(41 - a):
            ref = exact_integral(a, b)
            got = log_wealth_exact(a, b)
            worst = max(worst, abs(math.exp(got) / float(ref) - 1))
    assert worst < 1e-12


def test_wealth_overflow_goes_to_log():
    lw = log_wealth_exact(0, 2000)
    assert math.isfinite(lw) and lw > math.log(1e300)
    assert wealth_exact(BetCounts(0, 2000)) == math.inf
    # closed form for a=0: (2^(b+1) - 1)/(b+1)
    assert lw == pytest.approx(2001 * math.log(2) - math.log(2001), rel=1e-13)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 300), st.integers(0, 300))
def test_wealth_monotone(a, b):
    w = log_wealth_exact(a, b)
    assert log_wealth_exact(a, b + 1) > w
    assert log_wealth_exact(a + 1, b) < w


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 400), st.integers(0, 400))
def test_sup_bound_dominates(a, b):
    assert log_wealth_sup(a, b) >= log_wealth_exact(a, b) - 1e-12


def test_wealth_depends_only_on_counts():
    # every ordering of the same multiset of labels after a fixed prefix that pins j_hat = 1
    prefix = [1, 1, 1, 1]
    seen = set()
    for tail in set(permutations([0, 0, 1, 1, 2])):
        s = replay(prefix + list(tail), 3)
        seen.add((s.bet, round(log_wealth_exact(s.bet.a, s.bet.b), 14)))
    assert len(seen) == 1


# --- grid wealth ------------------------------------------------------------------------

def test_grid_nodes_inside_unit_interval():
    for K in (1, 2, 7, 1024):
        u = grid_nodes(K)
        assert u.size == K and np.all((u > 0) & (u < 1))
    assert grid_nodes(1)[0] == 0.5


def test_grid_initial_is_one():
    for K in (1, 16, 1024):
        assert wealth_grid(initial_state(2, K)) == 1.0


def test_grid_single_node_hand_value():
    s = replay([1, 1, 1, 1], 2, grid_size=1)
    assert s.bet == BetCounts(0, 3)
    assert wealth_grid(s, 1) == pytest.approx(3.375, rel=1e-14)


def test_grid_matches_exact_at_b10():
    s = replay([1] * 11, 2, grid_size=1024)
    assert s.bet == BetCounts(0, 10)
    assert abs(wealth_grid(s) / wealth_exact(s.bet) - 1) <= 1e-3


def test_grid_incremental_equals_closed_form():
    rng = np.random.default_rng(3)
    labels = rng.choice(3, size=300, p=[0.3, 0.2, 0.5])
    s = replay(labels, 3, grid_size=64)
    assert log_wealth_grid(s) == pytest.approx(log_wealth_grid_counts(s.bet.a, s.bet.b, 64)[0], abs=1e-10)


def test_grid_errors():
    with pytest.raises(ValueError):
        wealth_grid(initial_state(2))
    with pytest.raises(ValueError):
        wealth_grid(initial_state(2, 4), K=8)
    with pytest.raises(ValueError):
        initial_state(2, 0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from([0, 1, 1, 2]), min_size=1, max_size=200))
def test_grid_within_1e3_on_random_paths(labels):
    s = replay(labels, 3)
    a, b = s.bet.a, s.bet.b
    rel = abs(math.exp(log_wealth_grid_counts(a, b, 1024)[0] - log_wealth_exact(a, b)) - 1)
    assert rel <= 1e-3


# --- mixtures ------------------------------------------------------------------------------

def test_mixture_examples():
    s1 = replay([1, 1, 1, 0, 1], 2)
    s2 = replay([1, 0, 0, 0, 0], 2)
    w1 = wealth_exact(s1.bet)
    assert mixture_wealth([s1], [1.0]) == pytest.approx(w1)
    assert mixture_wealth([s1, s1], [0.5, 0.5]) == pytest.approx(w1)
    assert mixture_wealth([s1, s2], [0.1, 0.9]) == pytest.approx(0.1 * w1 + 0.9 * wealth_exact(s2.bet))


def test_mixture_errors():
    s = replay([1, 1], 2)
    with pytest.raises(ValueError):
        mixture_wealth([s, s], [0.5, 0.6])
    with pytest.raises(ValueError):
        mixture_wealth([s, s], [1.0])
    with pytest.raises(ValueError):
        mixture_wealth([s, replay([1], 2)], [0.5, 0.5])


# --- statistical properties -------------------------------------------------------------------

def _batch_bets(labels: np.ndarray, n_labels: int):
    """(a, b) after every step for a batch of streams, shape (R, n)."""
    onehot = np.eye(n_labels, dtype=np.int64)[labels]
    before = np.cumsum(onehot, axis=1) - onehot
    j = np.argmax(before, axis=2)
    active = j != 0
    a = np.cumsum(active & (labels == 0), axis=1)
    b = np.cumsum(active & (labels == j), axis=1)
    return a, b


def _wealth_table(a, b):
    out = np.empty(a.shape)
    cache = {}
    for idx, key in np.ndenumerate(a * 100_000 + b):
        if key not in cache:
            cache[key] = math.exp(log_wealth_exact(a[idx], b[idx]))
        out[idx] = cache[key]
    return out


@pytest.mark.parametrize("cm", [tables.GAUSSIAN_MLP, tables.CHANGE_MLP], ids=["gaussian", "change"])
def test_null_supermartingale(cm):
    rng = np.random.default_rng(11)
    R = 10_000
    labels = rng.choice(cm.n_labels, size=(R, 200), p=cm.rows[0])
    a, b = _batch_bets(labels, cm.n_labels)
    for n in (10, 50, 200):
        w = _wealth_table(a[:, n - 1], b[:, n - 1])
        assert w.mean() <= 1 + 3 * w.std(ddof=1) / math.sqrt(R)


def test_alternative_growth_rate():
    cm = tables.GAUSSIAN_MLP
    rng = np.random.default_rng(5)
    delta = cm.rows[2, 2] - cm.rows[2, 0]
    for _ in range(20):
        s = replay(rng.choice(3, size=2000, p=cm.rows[2]), 3)
        assert log_wealth_exact(s.bet.a, s.bet.b) / 2000 >= delta ** 2 / 32


def test_trajectory_csv(tmp_path):
    path = tmp_path / "traj.csv"
    write_trajectory_csv([(1, 1, 0, 0, 0, 0.0), (2, 1, 1, 0, 1, math.log(1.5))], path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["step", "label", "j_hat", "a", "b", "log_wealth"]
    assert float(rows[2][5]) == math.log(1.5)
