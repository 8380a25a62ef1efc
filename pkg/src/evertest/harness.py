"""Seeded Monte-Carlo experiments with CSV/JSON output."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import platform
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy.stats import norm

from . import __version__, tables
from .bounds import quadratic_fit, tau_upper_bound, vc_sample_size
from .classifiers import (
    ChangeStream,
    ClassifiedStream,
    CoupledLabelStream,
    GaussianTupleSpec,
    LabelStream,
    OfflineDataset,
    ThresholdClassifier,
    erm_max_gap,
    estimate_confusion,
    train_centroid,
)
from .detector import run_detector
from .sequential import TestConfig, run_mixture_test, run_test
from .stats import ConfusionMatrix, gaps, is_separable, load_confusion

log = logging.getLogger(__name__)

GENERATOR_ID = "numpy.random.Philox seeded by SeedSequence(entropy=seed, spawn_key=(alpha_index, trial))"
# spawn keys of length 1 are reserved for experiment-level (not per-trial) randomness
_TRAIN_KEY = (0,)
_EVAL_KEY = (1,)

MODES = ("test", "detect", "mixture", "erm", "bounds")

RESULT_COLUMNS = {
    "test": ("trial", "alpha", "stopped", "tau", "j_hat", "log_wealth"),
    "mixture": ("trial", "alpha", "stopped", "tau", "j_hat", "log_wealth"),
    "detect": ("trial", "alpha", "alarmed", "alarm_time", "delay"),
    "erm": ("trial", "threshold", "empirical_gap", "true_min_gap", "separable"),
}


def derive_trial_rng(base_seed: int, trial: int, alpha_index: int = 0) -> np.random.Generator:
    """Independent generator for one (seed, trial, alpha level) cell.

    Derivation: ``SeedSequence(entropy=base_seed, spawn_key=(alpha_index,
    trial))`` feeding a Philox counter-based bit generator; see
    :data:`GENERATOR_ID`.
    """
    ss = np.random.SeedSequence(entropy=int(base_seed), spawn_key=(int(alpha_index), int(trial)))
    return np.random.Generator(np.random.Philox(ss))


def _aux_rng(base_seed: int, key: tuple[int, ...]) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=int(base_seed), spawn_key=key)))


def geometric_alphas(lo: float, hi: float, num: int) -> list[float]:
    return np.geomspace(lo, hi, num).tolist()


def linear_alphas(lo: float, hi: float, num: int) -> list[float]:
    return np.linspace(lo, hi, num).tolist()


def _parse_alpha_grid(spec) -> list[float]:
    if isinstance(spec, dict):
        if "geomspace" in spec:
            return geometric_alphas(*spec["geomspace"])
        if "linspace" in spec:
            return linear_alphas(*spec["linspace"])
        raise ValueError(f"alpha grid must be a list or {{'geomspace'|'linspace': [lo, hi, num]}}, got {spec}")
    if isinstance(spec, (int, float)):
        return [float(spec)]
    return [float(a) for a in spec]


@dataclass
class ExperimentConfig:
    """Declarative Monte-Carlo experiment.

    ``source`` selects where labels come from:

    * ``{"confusion": <path | table name | rows>}`` -- i.i.d. labels from a row;
    * ``{"gaussian": <spec path | dict>, "n_train": N, "n_eval": M}`` -- train a
      nearest-centroid classifier on ``N`` draws per class, then label fresh
      draws from class ``theta``;
    * ``{"confusions": [...]}`` -- mixture mode, one matrix per classifier;
    * erm mode: ``{"gaussian": ..., "thresholds": {"lo", "hi", "count"}, "n_train": N}``;
    * bounds mode: ``{"kind": ..., <parameters>}``.
    """

    mode: str
    source: dict
    alpha_grid: list = field(default_factory=lambda: geometric_alphas(1e-3, 1e-1, 10))
    trials: int = 300
    max_steps: int = 100_000
    seed: int = 0
    theta: int = 1
    pre: int = 0
    change_at: int | None = None
    weights: list | None = None
    prune: int | None = None
    evaluator: str = "exact"
    grid_size: int = 1024
    threads: int = 1
    out_dir: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        self.alpha_grid = _parse_alpha_grid(self.alpha_grid)
        if self.mode != "bounds":
            if not self.alpha_grid and self.mode != "erm":
                raise ValueError("alpha_grid must be nonempty")
            if any(not 0.0 < a < 1.0 for a in self.alpha_grid):
                raise ValueError("every alpha must lie strictly inside (0, 1)")
            if self.trials < 1:
                raise ValueError("trials must be >= 1")
            if self.max_steps < 1:
                raise ValueError("max_steps must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ExperimentResult:
    rows: list[dict]
    summary: dict
    meta: dict
    paths: dict = field(default_factory=dict)

    def column(self, name: str, alpha_index: int | None = None) -> list:
        alphas = self.summary.get("alphas")
        out = []
        for r in self.rows:
            if alpha_index is not None and r["alpha"] != alphas[alpha_index]:
                continue
            out.append(r[name])
        return out


# --------------------------------------------------------------------------
# sources


def _resolve_confusion(ref) -> ConfusionMatrix:
    if isinstance(ref, ConfusionMatrix):
        return ref
    if isinstance(ref, str):
        if ref in tables.BY_NAME:
            return tables.BY_NAME[ref]
        return load_confusion(ref)
    if isinstance(ref, dict):
        return ConfusionMatrix(ref["rows"])
    return ConfusionMatrix(ref)


def _resolve_gaussian(ref) -> GaussianTupleSpec:
    if isinstance(ref, GaussianTupleSpec):
        return ref
    if isinstance(ref, str):
        return GaussianTupleSpec.load(ref)
    return GaussianTupleSpec(ref["means"], ref.get("variances"))


class _Source:
    """Builds the per-trial label stream and reports the induced confusion matrix."""

    def __init__(self, config: ExperimentConfig):
        src = config.source
        self.classifier = None
        if "confusion" in src:
            self.cm = _resolve_confusion(src["confusion"])
        elif "gaussian" in src:
            self.spec = _resolve_gaussian(src["gaussian"])
            data = OfflineDataset.draw(self.spec, int(src.get("n_train", 1000)), _aux_rng(config.seed, _TRAIN_KEY))
            self.classifier = train_centroid(data)
            self.cm = estimate_confusion(self.classifier, self.spec, int(src.get("n_eval", 100_000)),
                                         _aux_rng(config.seed, _EVAL_KEY))
        else:
            raise ValueError("source needs a 'confusion' or 'gaussian' entry")
        if not is_separable(self.cm):
            msg = "classifier confusion matrix is not separable; the test stays level-alpha but may never stop"
            warnings.warn(msg, RuntimeWarning, stacklevel=3)
            log.warning(msg)

    def stream(self, theta: int, rng: np.random.Generator):
        if self.classifier is not None:
            return ClassifiedStream(self.classifier, self.spec, theta, rng, self.cm.n_labels)
        return LabelStream(self.cm.row(theta), rng)


# --------------------------------------------------------------------------
# runners


def _map(fn, items, threads: int):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _stats(values: Sequence[float]) -> tuple[float | None, float | None]:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return None, None
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


def _fit_block(alphas, means, delta) -> dict | None:
    pairs = [(a, m) for a, m in zip(alphas, means) if m is not None]
    if not pairs or delta is None or delta <= 0 or any(not 0 < a * delta < 1 for a, _ in pairs):
        return None
    fit = quadratic_fit([a for a, _ in pairs], [m for _, m in pairs], delta)
    idx = np.unique(np.linspace(0, len(fit.alphas) - 1, 100).astype(int))
    return {"c": fit.c, "curve": [[float(fit.alphas[i]), float(fit.curve[i])] for i in idx]}


def _summarize_stopping(config, rows, alphas, n_labels, delta, key="tau", stop_key="stopped"):
    per_alpha = []
    means = []
    for a in alphas:
        cell = [r for r in rows if r["alpha"] == a]
        taus = [r[key] for r in cell if r[stop_key]]
        mean, se = _stats(taus)
        means.append(mean)
        entry = {"alpha": a, "trials": len(cell), "n_stopped": len(taus),
                 "stop_fraction": len(taus) / len(cell) if cell else None,
                 f"mean_{key}": mean, f"se_{key}": se}
        if "j_hat" in (cell[0] if cell else {}):
            stopped = [r for r in cell if r[stop_key]]
            entry["ratio"] = [sum(r["j_hat"] == k for r in stopped) / len(stopped) if stopped else None
                              for k in range(n_labels)]
        per_alpha.append(entry)
    return per_alpha, means


def _run_test_mode(config: ExperimentConfig):
    source = _Source(config)
    cm = source.cm
    delta = float(gaps(cm).null_gaps[config.theta]) if config.theta > 0 else None
    alphas = config.alpha_grid

    def one(job):
        ai, trial = job
        tc = TestConfig(alphas[ai], config.max_steps, config.evaluator, config.grid_size)
        res = run_test(source.stream(config.theta, derive_trial_rng(config.seed, trial, ai)), tc, cm.n_labels)
        return {"trial": trial, "alpha": alphas[ai], "stopped": res.stopped, "tau": res.tau,
                "j_hat": res.j_hat_at_stop, "log_wealth": res.final_log_wealth}

    jobs = [(ai, t) for ai in range(len(alphas)) for t in range(config.trials)]
    rows = _map(one, jobs, config.threads)
    per_alpha, means = _summarize_stopping(config, rows, alphas, cm.n_labels, delta)
    summary = {"mode": "test", "theta": config.theta, "alphas": alphas, "delta": delta,
               "separable": is_separable(cm), "confusion": cm.rows.tolist(), "per_alpha": per_alpha,
               "quadratic_fit": _fit_block(alphas, means, delta)}
    if delta and delta > 0:
        summary["tau_upper_bound"] = [tau_upper_bound(a, min(delta, 1.0), cm.L).total for a in alphas]
    return rows, summary


def _run_mixture_mode(config: ExperimentConfig):
    mats = [_resolve_confusion(m) for m in config.source["confusions"]]
    weights = config.weights or [1.0 / len(mats)] * len(mats)
    if len(weights) != len(mats):
        raise ValueError("need one weight per confusion matrix")
    n_labels = mats[0].n_labels
    alphas = config.alpha_grid
    for m in mats:
        if not is_separable(m):
            warnings.warn("a mixture component is not separable", RuntimeWarning, stacklevel=2)

    def stream(ai, trial):
        rows = [m.row(config.theta) for m in mats]
        return CoupledLabelStream(rows, derive_trial_rng(config.seed, trial, ai))

    def one(job):
        ai, trial = job
        tc = TestConfig(alphas[ai], config.max_steps, config.evaluator, config.grid_size)
        res = run_mixture_test(stream(ai, trial), weights, tc, n_labels)
        singles = []
        for c in range(len(mats)):
            s = run_test(_Channel(stream(ai, trial), c), tc, n_labels)
            singles.append(s.tau if s.stopped else None)
        return {"trial": trial, "alpha": alphas[ai], "stopped": res.stopped, "tau": res.tau,
                "j_hat": res.j_hat_at_stop, "log_wealth": res.final_log_wealth, "_singles": singles}

    jobs = [(ai, t) for ai in range(len(alphas)) for t in range(config.trials)]
    rows = _map(one, jobs, config.threads)
    per_alpha, _ = _summarize_stopping(config, rows, alphas, n_labels, None)
    for entry in per_alpha:
        cell = [r for r in rows if r["alpha"] == entry["alpha"]]
        entry["single_mean_tau"] = []
        entry["single_n_stopped"] = []
        for c in range(len(mats)):
            taus = [r["_singles"][c] for r in cell if r["_singles"][c] is not None]
            entry["single_mean_tau"].append(_stats(taus)[0])
            entry["single_n_stopped"].append(len(taus))
    for r in rows:
        r.pop("_singles")
    summary = {"mode": "mixture", "theta": config.theta, "alphas": alphas, "weights": list(weights),
               "deltas": [float(gaps(m).null_gaps[config.theta]) for m in mats], "per_alpha": per_alpha}
    return rows, summary


class _Channel:
    """Single-classifier view of a coupled stream."""

    def __init__(self, coupled: CoupledLabelStream, c: int):
        self.coupled = coupled
        self.c = c
        self.n_labels = coupled.n_labels

    def take(self, m):
        return self.coupled.take(m)[:, self.c]


def _run_detect_mode(config: ExperimentConfig):
    cm = _resolve_confusion(config.source["confusion"])
    alphas = config.alpha_grid
    T = config.change_at
    post = config.theta
    delta = float(gaps(cm).null_gaps[post]) if post > 0 else None

    def one(job):
        ai, trial = job
        rng = derive_trial_rng(config.seed, trial, ai)
        if T is None:
            labels = LabelStream(cm.row(config.pre), rng)
        else:
            labels = ChangeStream(cm.row(config.pre), cm.row(post), T, rng)
        rec = run_detector(labels, alphas[ai], config.max_steps, config.prune, cm.n_labels)
        delay = max(rec.alarm_time - T, 0) if (rec.alarmed and T is not None) else None
        return {"trial": trial, "alpha": alphas[ai], "alarmed": rec.alarmed,
                "alarm_time": rec.alarm_time, "delay": delay}

    jobs = [(ai, t) for ai in range(len(alphas)) for t in range(config.trials)]
    rows = _map(one, jobs, config.threads)
    per_alpha = []
    means = []
    for a in alphas:
        cell = [r for r in rows if r["alpha"] == a]
        alarms = [r["alarm_time"] for r in cell if r["alarmed"]]
        delays = [r["delay"] for r in cell if r["delay"] is not None]
        mean_delay, se_delay = _stats(delays)
        means.append(mean_delay)
        # truncated: unalarmed trials count at the horizon
        truncated = [r["alarm_time"] if r["alarmed"] else config.max_steps for r in cell]
        per_alpha.append({
            "alpha": a, "trials": len(cell), "n_alarmed": len(alarms),
            "missed": len(cell) - len(alarms),
            "false_alarms": sum(1 for t in alarms if T is not None and t < T),
            "mean_delay": mean_delay, "se_delay": se_delay,
            "mean_alarm_time": _stats(alarms)[0],
            "truncated_mean_alarm_time": _stats(truncated)[0],
        })
    summary = {"mode": "detect", "pre": config.pre, "post": post, "change_at": T, "alphas": alphas,
               "delta": delta, "horizon": config.max_steps, "prune": config.prune, "per_alpha": per_alpha,
               "quadratic_fit": _fit_block(alphas, means, delta) if T is not None else None}
    return rows, summary


def true_threshold_confusion(clf: ThresholdClassifier, spec: GaussianTupleSpec) -> np.ndarray:
    """Exact two-class confusion of a threshold rule under Gaussian classes."""
    f = clf.feature
    p_one = norm.sf(clf.threshold, loc=spec.means[:, f], scale=math.sqrt(spec.variances[f]))
    if clf.flip:
        p_one = 1.0 - p_one
    return np.column_stack([1.0 - p_one, p_one])


def threshold_family(lo: float, hi: float, count: int, feature: int = 0) -> list[ThresholdClassifier]:
    return [ThresholdClassifier(float(t), feature) for t in np.linspace(lo, hi, count)]


def _run_erm_mode(config: ExperimentConfig):
    src = config.source
    spec = _resolve_gaussian(src["gaussian"])
    if spec.n_classes != 2:
        raise ValueError("erm mode uses two-class threshold rules")
    th = src.get("thresholds", {"lo": -3.0, "hi": 3.0, "count": 41})
    family = threshold_family(th["lo"], th["hi"], int(th["count"]), int(src.get("feature", 0)))
    n_train = int(src.get("n_train", 2000))

    def one(trial):
        data = OfflineDataset.draw(spec, n_train, derive_trial_rng(config.seed, trial, 0))
        clf, gap = erm_max_gap(family, data)
        true = true_threshold_confusion(clf, spec)
        diag = np.diag(true)
        true_gap = float(min(diag[0] - true[0, 1], diag[1] - true[1, 0]))
        return {"trial": trial, "threshold": clf.threshold, "empirical_gap": gap,
                "true_min_gap": true_gap, "separable": true_gap > 0}

    rows = _map(one, list(range(config.trials)), config.threads)
    gaps_star = [
        float(np.min(np.diag(c) - c[[0, 1], [1, 0]]))
        for c in (true_threshold_confusion(g, spec) for g in family)
    ]
    best = max(gaps_star)
    summary = {"mode": "erm", "n_train": n_train, "family_size": len(family), "repeats": config.trials,
               "separable_fraction": sum(r["separable"] for r in rows) / len(rows),
               "mean_empirical_gap": _stats([r["empirical_gap"] for r in rows])[0],
               "best_true_gap": best}
    if best > 0 and "vc_d" in src:
        summary["vc_sample_size"] = vc_sample_size(best / 8.0, float(src["vc_d"]), 1, float(src.get("delta", 0.05)))
    return rows, summary


def _run_bounds_mode(config: ExperimentConfig):
    from .cli import bounds_report

    params = dict(config.source)
    kind = params.pop("kind", "tau")
    return [], {"mode": "bounds", "kind": kind, "report": bounds_report(kind, params)}


_RUNNERS = {
    "test": _run_test_mode,
    "mixture": _run_mixture_mode,
    "detect": _run_detect_mode,
    "erm": _run_erm_mode,
    "bounds": _run_bounds_mode,
}


# --------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def rows_to_csv(rows: list[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _sort_key(row):
    return (row.get("alpha", 0.0), row["trial"])


def run_experiment(config: ExperimentConfig, out_dir=None) -> ExperimentResult:
    """Run every (alpha, trial) cell and optionally write ``results.csv``, ``summary.json``, ``meta.json``."""
    rows, summary = _RUNNERS[config.mode](config)
    rows.sort(key=_sort_key)
    meta = {
        "config": _jsonable(config.to_dict()),
        "generator": GENERATOR_ID,
        "seed": config.seed,
        "versions": {"evertest": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "created": datetime.now(timezone.utc).isoformat(),
    }
    result = ExperimentResult(rows, _jsonable(summary), meta)
    out_dir = out_dir or config.out_dir
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"summary": out / "summary.json", "meta": out / "meta.json"}
        if config.mode in RESULT_COLUMNS:
            paths["results"] = out / "results.csv"
            paths["results"].write_text(rows_to_csv(rows, RESULT_COLUMNS[config.mode]))
        paths["summary"].write_text(json.dumps(result.summary, indent=2, sort_keys=True) + "\n")
        paths["meta"].write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        result.paths = {k: str(v) for k, v in paths.items()}
    return result


# --------------------------------------------------------------------------
# recipes mirroring the published experiments

FIG_ALPHAS = geometric_alphas(1e-3, 1e-1, 10)


def recipe(name: str, **overrides: Any) -> ExperimentConfig:
    """Preset configurations; keyword overrides replace any field."""
    presets = {
        "gaussian": dict(mode="test", source={"confusion": "gaussian-mlp"}, theta=2, trials=300,
                         alpha_grid=FIG_ALPHAS),
        "cifar": dict(mode="test", source={"confusion": "cifar-vgg"}, theta=2, trials=300,
                      alpha_grid=FIG_ALPHAS),
        "shift-matched": dict(mode="test", source={"confusion": "shift-train"}, theta=1, trials=300,
                              alpha_grid=FIG_ALPHAS),
        "shift-mismatched": dict(mode="test", source={"confusion": "shift-test"}, theta=1, trials=300,
                                 alpha_grid=FIG_ALPHAS),
        "change": dict(mode="detect", source={"confusion": "change-mlp"}, theta=1, pre=0, change_at=10,
                       trials=500, alpha_grid={"geomspace": [1e-4, 1e-3, 50]}),
        "mixture": dict(mode="mixture", source={"confusions": ["mixture-weak", "mixture-strong"]},
                        weights=[0.1, 0.9], theta=2, trials=300, alpha_grid=FIG_ALPHAS),
        "erm": dict(mode="erm", source={"gaussian": {"means": [[-1.0], [1.0]], "variances": [1.0]},
                                        "thresholds": {"lo": -3.0, "hi": 3.0, "count": 41}, "n_train": 2000},
                    trials=200, alpha_grid=[]),
        "gaussian-centroid": dict(mode="test",
                                  source={"gaussian": {"means": [list(m) for m in tables.GAUSSIAN_MEANS_10D]},
                                          "n_train": 3333, "n_eval": 100_000},
                                  theta=2, trials=300, alpha_grid=FIG_ALPHAS),
    }
    if name not in presets:
        raise KeyError(f"unknown recipe {name!r}; choose from {sorted(presets)}")
    cfg = dict(presets[name])
    cfg.update(overrides)
    return ExperimentConfig(**cfg)


RECIPES = ("gaussian", "cifar", "shift-matched", "shift-mismatched", "change", "mixture", "erm",
           "gaussian-centroid")
