import math
import time

import numpy as np
import pytest

from evertest import tables
from evertest.classifiers import ChangeStream, LabelStream
from evertest.detector import DetectorState, detector_step, run_detector
from evertest.eprocess import log_wealth_exact, replay
from evertest.sequential import TestConfig, run_test


def test_first_step_null_label():
    _, M = detector_step(DetectorState(2), 0)
    assert M == 1.0


def test_constant_ones_hand_trace():
    s = DetectorState(2)
    Ms = [detector_step(s, 1)[1] for _ in range(3)]
    assert Ms == pytest.approx([1.0, 1.5, 7 / 3], rel=1e-14)


def test_null_labels_keep_M_at_most_one():
    s = DetectorState(3)
    for _ in range(100):
        assert detector_step(s, 0)[1] <= 1.0


def test_perfect_post_change_alarms_at_three():
    stream = ChangeStream([1.0, 0.0], [0.0, 1.0], 1, np.random.default_rng(0))
    rec = run_detector(stream, 0.5, 100)
    assert rec.alarmed and rec.alarm_time == 3


def test_bad_inputs():
    with pytest.raises(ValueError):
        detector_step(DetectorState(2), 2)
    with pytest.raises(ValueError):
        run_detector([0, 1], 1.0, 10)
    with pytest.raises(ValueError):
        DetectorState(2).prune(0)


def test_window_counts_and_restart_semantics():
    rng = np.random.default_rng(3)
    labels = rng.choice(3, 60, p=[0.5, 0.2, 0.3])
    s = DetectorState(3)
    for lab in labels:
        detector_step(s, lab)
    for st in s.starts:
        assert sum(st.label_counts) == s.n - st.k + 1
        # each start is a fresh e-process on its own window
        ref = replay(labels[st.k - 1:], 3)
        assert st.bet == ref.bet


def test_branch_and_bound_equals_brute_max():
    rng = np.random.default_rng(5)
    s = DetectorState(3)
    for lab in rng.choice(3, 300, p=tables.GAUSSIAN_MLP.rows[2]):
        _, M = detector_step(s, lab)
        brute = max(log_wealth_exact(a, b) for a, b in zip(s.a, s.b))
        assert math.log(M) == pytest.approx(brute, abs=1e-12)


def test_fast_driver_matches_stepwise():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        labels = np.r_[rng.choice(2, 15, p=tables.CHANGE_MLP.rows[0]),
                       rng.choice(2, 400, p=tables.CHANGE_MLP.rows[1])]
        rec = run_detector(labels, 1e-3, 10_000)
        s = DetectorState(2)
        alarm = None
        for n, lab in enumerate(labels, start=1):
            _, M = detector_step(s, lab)
            if M >= 1e3 * (1 - 1e-12):
                alarm = n
                break
        assert rec.alarm_time == alarm


def test_stream_not_consumed_past_alarm():
    stream = LabelStream([0.0, 1.0], np.random.default_rng(0))
    rec = run_detector(stream, 0.5, 1000)
    assert rec.alarm_time == 3 and stream.consumed == 3


def test_pathwise_delay_dominance():
    """The start at the change time is a fresh test on post-change labels."""
    T = 10
    for trial in range(100):
        rng = np.random.default_rng(trial)
        labels = ChangeStream(tables.CHANGE_MLP.row(0), tables.CHANGE_MLP.row(1), T, rng).take(5000)
        det = run_detector(labels, 1e-3, 5000)
        seq = run_test(labels[T - 1:], TestConfig(1e-3), 2)
        assert det.alarmed and seq.stopped
        assert det.alarm_time - T <= seq.tau - 1


def test_pruning_only_lowers_M():
    rng = np.random.default_rng(7)
    labels = rng.choice(3, 400, p=[0.45, 0.25, 0.30])
    full, pruned = DetectorState(3), DetectorState(3)
    for lab in labels:
        _, m_full = detector_step(full, lab)
        _, m_pruned = detector_step(pruned, lab, prune=8)
        assert m_pruned <= m_full
        assert pruned.n_active <= 8
        assert pruned.k[-1] == pruned.n  # newest start always kept


def test_pruning_keeps_highest_wealth():
    rng = np.random.default_rng(2)
    s = DetectorState(3)
    for lab in rng.choice(3, 50, p=[0.3, 0.2, 0.5]):
        s.advance(int(lab))
    before = s.log_wealths()
    s2 = s.copy()
    s2.prune(10)
    kept = s2.log_wealths()[:-1]
    dropped_best = np.sort(before[:-1])[::-1][9:]
    assert kept.min() >= dropped_best.max() - 1e-12


def test_pruning_cost_is_bounded():
    labels = np.random.default_rng(0).choice(2, 3000, p=tables.CHANGE_MLP.rows[0])

    def per_step_time(prune, lo, hi):
        s = DetectorState(2)
        for lab in labels[:lo]:
            detector_step(s, lab, prune)
        t0 = time.perf_counter()
        for lab in labels[lo:hi]:
            detector_step(s, lab, prune)
        return (time.perf_counter() - t0) / (hi - lo), s.n_active

    early, n_early = per_step_time(32, 200, 400)
    late, n_late = per_step_time(32, 2800, 3000)
    assert n_early == n_late == 32
    assert late < 5 * early
    _, n_full = per_step_time(None, 2800, 3000)
    assert n_full == 3000
