"""Command-line entry point ``evertest``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bounds as B
from .harness import (
    RECIPES,
    RESULT_COLUMNS,
    ExperimentConfig,
    _jsonable,
    _resolve_confusion,
    recipe,
    rows_to_csv,
    run_experiment,
)
from .stats import gaps


def bounds_report(kind: str, p: dict) -> dict:
    """Evaluate one bound calculator from a flat parameter dict."""
    kind = kind.replace("_", "-")
    if kind == "tau":
        return B.tau_upper_bound(float(p["alpha"]), float(p["delta"]), int(p["L"])).as_dict()
    if kind == "training-size":
        if "pairwise_j" in p:
            J = p["pairwise_j"]
        else:
            J = B.gaussian_pairwise_j(p["means"], p.get("variances") or [1.0] * len(p["means"][0]))
        return {"min_training_size": B.min_training_size(float(p["alpha"]), J)}
    if kind == "mismatch":
        g = gaps(_resolve_confusion(p["confusion"]))
        metric = p.get("metric", "KL")
        out = {"tolerance": B.mismatch_tolerance(g, metric), "min_pairwise_gap": g.min_pairwise_gap}
        if p.get("eps") is not None:
            env = B.tilde_delta_envelope(g, float(p["eps"]), metric)
            out["envelope"] = {str(k): list(v) for k, v in env.items()}
        return out
    if kind == "vc":
        return {"vc_sample_size": B.vc_sample_size(float(p["gamma"]), float(p["d"]), int(p["L"]),
                                                   float(p["delta"]))}
    if kind == "minimax":
        return {"log_psi_lower": B.minimax_log_psi_lower(
            float(p["n"]), float(p["alpha"]), float(p["max_kl"]), float(p["B"]), float(p["N"]),
            float(p["M"]), int(p["L"]), float(p["delta_param"]))}
    if kind == "lorden":
        if "confusion" in p:
            cm = _resolve_confusion(p["confusion"])
            post, pre = cm.row(int(p.get("post", 1))), cm.row(int(p.get("pre", 0)))
        else:
            post, pre = p["post_row"], p["pre_row"]
        return {"lorden_delay_lower": B.lorden_delay_lower(float(p["alpha"]), post, pre)}
    raise ValueError(f"unknown bound kind {kind!r}")


def _global_parser(in_subcommand: bool) -> argparse.ArgumentParser:
    # subcommand copies must not overwrite values given before the subcommand
    default = argparse.SUPPRESS if in_subcommand else None
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--config", default=default, help="JSON experiment config; command-line flags override its fields")
    g.add_argument("--seed", type=int, default=default)
    g.add_argument("--out-dir", default=default, help="write results.csv, summary.json and meta.json here")
    g.add_argument("--threads", type=int, default=default)
    g.add_argument("-v", "--verbose", action="store_true", default=default if in_subcommand else False)
    return g


def _sim_args(p: argparse.ArgumentParser, stopping: bool = True):
    p.add_argument("--recipe", choices=RECIPES, help="start from a preset experiment")
    p.add_argument("--alpha", type=float, nargs="+", help="one or more significance levels")
    p.add_argument("--alpha-geom", type=float, nargs=3, metavar=("LO", "HI", "NUM"),
                   help="geometrically spaced levels")
    p.add_argument("--trials", type=int)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--out", help="write the per-trial CSV to this path")
    if stopping:
        p.add_argument("--evaluator", choices=("exact", "grid"))
        p.add_argument("--grid-size", type=int)


def build_parser() -> argparse.ArgumentParser:
    glob = _global_parser(True)
    parser = argparse.ArgumentParser(prog="evertest", parents=[_global_parser(False)],
                                     description="Classifier-based sequential tests and change detection.")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", parents=[glob], help="sequential test on a classifier label stream")
    t.add_argument("--confusion", help="confusion matrix (JSON/CSV path or built-in table name)")
    t.add_argument("--gaussian", help="Gaussian tuple spec JSON; trains a nearest-centroid classifier")
    t.add_argument("--n-train", type=int, default=1000)
    t.add_argument("--theta", type=int)
    _sim_args(t)

    d = sub.add_parser("detect", parents=[glob], help="change-point detection")
    d.add_argument("--confusion")
    d.add_argument("--pre", type=int)
    d.add_argument("--post", type=int)
    d.add_argument("--change-at", type=int)
    d.add_argument("--prune", type=int, help="cap on retained restart processes")
    _sim_args(d, stopping=False)

    m = sub.add_parser("mixture", parents=[glob], help="mixture of classifiers on one raw stream")
    m.add_argument("--confusion", nargs="+", help="one confusion matrix per classifier")
    m.add_argument("--weights", type=float, nargs="+")
    m.add_argument("--theta", type=int)
    _sim_args(m)

    e = sub.add_parser("erm", parents=[glob], help="gap-maximizing ERM over threshold rules")
    e.add_argument("--gaussian", help="two-class Gaussian tuple spec JSON")
    e.add_argument("--thresholds", type=float, nargs=3, metavar=("LO", "HI", "COUNT"))
    e.add_argument("--n-train", type=int)
    e.add_argument("--repeats", type=int)
    e.add_argument("--recipe", choices=RECIPES)
    e.add_argument("--out")

    b = sub.add_parser("bounds", parents=[glob], help="evaluate a theoretical bound and print JSON")
    b.add_argument("--kind", required=True,
                   choices=("tau", "training-size", "mismatch", "vc", "minimax", "lorden"))
    for name, typ in (("alpha", float), ("delta", float), ("L", int), ("gamma", float), ("d", float),
                      ("n", float), ("max-kl", float), ("B", float), ("N", float), ("M", float),
                      ("delta-param", float), ("eps", float), ("pre", int), ("post", int)):
        b.add_argument(f"--{name}", type=typ, dest=name.replace("-", "_"))
    b.add_argument("--confusion")
    b.add_argument("--metric", default="KL", choices=("KL", "TV"))
    b.add_argument("--means", type=json.loads, help="JSON list of class means")
    b.add_argument("--variances", type=json.loads, help="JSON list of per-coordinate variances")
    return parser


def _set(cfg: dict, key, value):
    if value is not None:
        cfg[key] = value


def _config_from_args(args) -> ExperimentConfig:
    cfg: dict = {}
    if getattr(args, "recipe", None):
        cfg = recipe(args.recipe).to_dict()
    if args.config:
        cfg.update(json.loads(Path(args.config).read_text()))
    mode = args.command
    if cfg.get("mode", mode) != mode:
        raise SystemExit(f"config mode {cfg['mode']!r} does not match subcommand {mode!r}")
    cfg["mode"] = mode
    src = dict(cfg.get("source") or {})

    if mode == "test":
        if args.confusion:
            src = {"confusion": args.confusion}
        elif args.gaussian:
            src = {"gaussian": args.gaussian, "n_train": args.n_train}
        _set(cfg, "theta", args.theta)
    elif mode == "detect":
        if args.confusion:
            src = {"confusion": args.confusion}
        _set(cfg, "pre", args.pre)
        _set(cfg, "theta", args.post)
        _set(cfg, "change_at", args.change_at)
        _set(cfg, "prune", args.prune)
    elif mode == "mixture":
        if args.confusion:
            src = {"confusions": args.confusion}
        _set(cfg, "weights", args.weights)
        _set(cfg, "theta", args.theta)
    elif mode == "erm":
        if args.gaussian:
            src["gaussian"] = args.gaussian
        if args.thresholds:
            lo, hi, count = args.thresholds
            src["thresholds"] = {"lo": lo, "hi": hi, "count": int(count)}
        if args.n_train:
            src["n_train"] = args.n_train
        _set(cfg, "trials", args.repeats)
        cfg.setdefault("alpha_grid", [])
        if "gaussian" not in src:
            src = recipe("erm").source | src

    if mode in ("test", "detect", "mixture"):
        if args.alpha:
            cfg["alpha_grid"] = args.alpha
        elif args.alpha_geom:
            lo, hi, num = args.alpha_geom
            cfg["alpha_grid"] = {"geomspace": [lo, hi, int(num)]}
        _set(cfg, "trials", args.trials)
        _set(cfg, "max_steps", args.max_steps)
        _set(cfg, "evaluator", getattr(args, "evaluator", None))
        _set(cfg, "grid_size", getattr(args, "grid_size", None))
    if not src:
        raise SystemExit(f"{mode}: give a source (--confusion/--gaussian, --recipe or --config)")
    cfg["source"] = src
    _set(cfg, "seed", args.seed)
    _set(cfg, "threads", args.threads)
    _set(cfg, "out_dir", args.out_dir)
    try:
        return ExperimentConfig.from_dict(cfg)
    except (TypeError, ValueError) as exc:
        raise SystemExit(f"invalid configuration: {exc}") from exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "bounds":
            params = {k: v for k, v in vars(args).items() if v is not None}
            if args.config:
                params = json.loads(Path(args.config).read_text()).get("source", {}) | params
            report = bounds_report(args.kind, params)
            print(json.dumps(_jsonable(report), indent=2, sort_keys=True))
            return 0
        config = _config_from_args(args)
        result = run_experiment(config)
        if getattr(args, "out", None):
            out = Path(args.out)
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(rows_to_csv(result.rows, RESULT_COLUMNS[config.mode]))
        if not (config.out_dir or getattr(args, "out", None)):
            sys.stdout.write(rows_to_csv(result.rows, RESULT_COLUMNS[config.mode]))
        else:
            for entry in result.summary.get("per_alpha", [result.summary]):
                brief = {k: v for k, v in entry.items() if not isinstance(v, (list, dict))}
                print(json.dumps(brief), file=sys.stderr)
        return 0
    except (ValueError, KeyError, FileNotFoundError, OSError) as exc:
        print(f"evertest: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
