import csv
import json
import math

import numpy as np
import pytest

from evertest.cli import main
from evertest.harness import (
    GENERATOR_ID,
    RESULT_COLUMNS,
    ExperimentConfig,
    derive_trial_rng,
    geometric_alphas,
    linear_alphas,
    recipe,
    run_experiment,
)


def small(**kw):
    base = dict(mode="test", source={"confusion": "gaussian-mlp"}, theta=2, alpha_grid=[0.1, 0.01], trials=20,
                seed=3)
    base.update(kw)
    return ExperimentConfig(**base)


# --- rng ------------------------------------------------------------------------------

def test_rng_same_triple_identical():
    assert np.array_equal(derive_trial_rng(7, 3, 1).random(100), derive_trial_rng(7, 3, 1).random(100))


def test_rng_distinct_cells_differ():
    draws = {}
    for seed in (0, 1):
        for ai in range(5):
            for trial in range(40):
                draws[(seed, ai, trial)] = derive_trial_rng(seed, trial, ai).random(100).tobytes()
    assert len(set(draws.values())) == len(draws)


def test_rng_argument_order_matters():
    assert not np.array_equal(derive_trial_rng(0, 1, 2).random(10), derive_trial_rng(0, 2, 1).random(10))


# --- config ---------------------------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(alpha_grid=[]), dict(alpha_grid=[0.0]), dict(alpha_grid=[1.0]),
                                dict(trials=0), dict(mode="plot"), dict(max_steps=0), dict(seed=-1)])
def test_config_rejects(kw):
    with pytest.raises(ValueError):
        small(**kw)


def test_config_from_dict_and_grids(tmp_path):
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"mode": "test", "source": {}, "colour": 1})
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"mode": "test", "source": {"confusion": "cifar-vgg"},
                                "alpha_grid": {"geomspace": [1e-3, 1e-1, 10]}}))
    cfg = ExperimentConfig.load(path)
    assert cfg.alpha_grid == pytest.approx(geometric_alphas(1e-3, 1e-1, 10))
    assert linear_alphas(0.01, 0.05, 5) == pytest.approx([0.01, 0.02, 0.03, 0.04, 0.05])
    assert ExperimentConfig(mode="test", source={"confusion": "cifar-vgg"},
                            alpha_grid={"linspace": [0.01, 0.05, 5]}).alpha_grid[-1] == pytest.approx(0.05)


# --- runs ------------------------------------------------------------------------------

def test_outputs_reproducible_byte_for_byte(tmp_path):
    r1 = run_experiment(small(), tmp_path / "a")
    r2 = run_experiment(small(threads=4), tmp_path / "b")
    for name in ("results.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    m1, m2 = r1.meta, r2.meta
    assert m1["generator"] == GENERATOR_ID and m1["seed"] == 3
    assert {k for k in m1 if m1[k] != m2[k]} <= {"created", "config"}
    assert m1["config"]["threads"] == 1 and m2["config"]["threads"] == 4


def test_summary_consistent_with_csv(tmp_path):
    res = run_experiment(small(), tmp_path)
    with open(tmp_path / "results.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == list(RESULT_COLUMNS["test"])
    for entry in res.summary["per_alpha"]:
        taus = [int(r["tau"]) for r in rows if float(r["alpha"]) == entry["alpha"] and r["stopped"] == "1"]
        assert entry["mean_tau"] == pytest.approx(sum(taus) / len(taus), rel=1e-14)
        assert len(entry["ratio"]) == 3 and sum(entry["ratio"]) == pytest.approx(1.0)
    assert res.summary["quadratic_fit"]["c"] > 0
    assert res.summary["delta"] == pytest.approx(0.35503)


def test_seed_changes_output():
    a = run_experiment(small()).rows
    b = run_experiment(small(seed=4)).rows
    assert [r["tau"] for r in a] != [r["tau"] for r in b]


def test_nonseparable_source_warns_and_runs():
    cfg = small(source={"confusion": [[0.5, 0.5], [0.6, 0.4]]}, theta=1, max_steps=200, trials=3)
    with pytest.warns(RuntimeWarning):
        res = run_experiment(cfg)
    assert len(res.rows) == 6


def test_gaussian_source_end_to_end():
    cfg = small(source={"gaussian": {"means": [[-1.5, -1.0], [1.5, 1.0]]}, "n_train": 200, "n_eval": 5000},
                theta=1, trials=10)
    res = run_experiment(cfg)
    assert all(r["stopped"] and r["j_hat"] == 1 for r in res.rows)


def test_detect_mode(tmp_path):
    cfg = ExperimentConfig(mode="detect", source={"confusion": "change-mlp"}, theta=1, change_at=10,
                           alpha_grid=[1e-3], trials=10, seed=1)
    res = run_experiment(cfg, tmp_path)
    header = (tmp_path / "results.csv").read_text().splitlines()[0]
    assert header == "trial,alpha,alarmed,alarm_time,delay"
    for r in res.rows:
        assert r["alarmed"] and r["delay"] == max(r["alarm_time"] - 10, 0)


def test_mixture_mode_baselines():
    cfg = recipe("mixture", trials=20, alpha_grid=[0.01])
    entry = run_experiment(cfg).summary["per_alpha"][0]
    assert entry["n_stopped"] == 20 and len(entry["single_mean_tau"]) == 2


def test_erm_and_bounds_modes():
    res = run_experiment(recipe("erm", trials=10))
    assert res.summary["family_size"] == 41 and len(res.rows) == 10
    b = run_experiment(ExperimentConfig(mode="bounds", source={"kind": "tau", "alpha": 0.01, "delta": 0.355,
                                                               "L": 2}, alpha_grid=[]))
    assert b.summary["report"]["n0"] >= 1


def test_recipes_build():
    for name in ("gaussian", "cifar", "shift-matched", "shift-mismatched", "change", "mixture", "erm",
                 "gaussian-centroid"):
        recipe(name)
    assert len(recipe("change").alpha_grid) == 50
    with pytest.raises(KeyError):
        recipe("nope")


# --- CLI -----------------------------------------------------------------------------------

def test_cli_test_writes_csv(tmp_path, capsys):
    cm = tmp_path / "cm.json"
    cm.write_text(json.dumps({"rows": [[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.2, 0.1, 0.7]]}))
    out = tmp_path / "results.csv"
    assert main(["test", "--confusion", str(cm), "--theta", "2", "--alpha", "0.01", "--trials", "5",
                 "--max-steps", "100000", "--seed", "7", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "trial,alpha,stopped,tau,j_hat,log_wealth" and len(lines) == 6


def test_cli_stdout_and_out_dir(tmp_path, capsys):
    assert main(["test", "--recipe", "gaussian", "--trials", "2", "--alpha", "0.1"]) == 0
    assert capsys.readouterr().out.startswith("trial,alpha,stopped")
    assert main(["--seed", "5", "--out-dir", str(tmp_path), "detect", "--confusion", "change-mlp", "--pre", "0",
                 "--post", "1", "--change-at", "10", "--alpha", "1e-3", "--trials", "3"]) == 0
    assert {p.name for p in tmp_path.iterdir()} == {"results.csv", "summary.json", "meta.json"}
    assert json.loads((tmp_path / "meta.json").read_text())["seed"] == 5


def test_cli_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mode": "mixture", "source": {"confusions": ["mixture-weak", "mixture-strong"]},
                               "weights": [0.1, 0.9], "theta": 2, "alpha_grid": [0.05], "trials": 4}))
    assert main(["mixture", "--config", str(cfg), "--out-dir", str(tmp_path / "o"), "--threads", "2"]) == 0
    assert len((tmp_path / "o" / "results.csv").read_text().splitlines()) == 5


def test_cli_bounds(capsys):
    assert main(["bounds", "--kind", "tau", "--alpha", "0.01", "--delta", "0.355", "--L", "2"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert set(report) == {"n0", "n1", "alpha_term", "constant", "total"}
    assert report["alpha_term"] == pytest.approx(32 * math.log(100) / 0.355 ** 2)
    assert main(["bounds", "--kind", "training-size", "--alpha", "0.05", "--means", "[[-1.5,-1],[1.5,1]]"]) == 0
    assert json.loads(capsys.readouterr().out)["min_training_size"] == pytest.approx(math.log(20) / 13)
    assert main(["bounds", "--kind", "lorden", "--alpha", "0.001", "--confusion", "change-mlp"]) == 0
    assert main(["bounds", "--kind", "vc", "--gamma", "0.1", "--d", "3", "--L", "1", "--delta", "0.05"]) == 0


def test_cli_erm(tmp_path):
    out = tmp_path / "erm.csv"
    assert main(["erm", "--repeats", "3", "--out", str(out)]) == 0
    assert out.read_text().startswith("trial,threshold,empirical_gap,true_min_gap,separable")


def test_cli_errors(tmp_path, capsys):
    assert main(["test", "--confusion", str(tmp_path / "missing.json"), "--alpha", "0.1"]) == 2
    assert main(["bounds", "--kind", "tau", "--alpha", "0.01", "--delta", "0", "--L", "2"]) == 2
    with pytest.raises(SystemExit):
        main(["test", "--alpha", "0.1"])
    with pytest.raises(SystemExit):
        main(["test", "--confusion", "gaussian-mlp", "--alpha", "2.0"])
