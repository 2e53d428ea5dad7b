"""Command-line entry point.

Subcommands: train, evaluate, cv, search, fed, report, synth-data.
Settings resolve as flags over config file over defaults; the resolved
configuration is always written next to the other artifacts, artifacts
never embed timestamps, and all randomness flows from the single seed
through named substreams, so reruns are byte-identical at any --jobs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from functools import partial
from pathlib import Path

import numpy as np

from .baselines import (ForestConfig, KnnConfig, LogRegConfig, train_forest,
                        train_knn, train_logreg)
from .data_io import (ACTIVITY_NAMES, DataFormatError, load_model,
                      load_uci_har, save_model)
from .evaluation import (SearchSpace, compute_report, cross_validate,
                         format_class_table, format_comparison_table,
                         format_cv_table, format_search_table,
                         randomized_search, report_to_dict, write_confusion_csv,
                         write_report_json)
from .federated import FedConfig, run_federation, write_round_log
from .signal import standardize, standardize_channels
from .stm import StmBinaryModel, StmConfig, train_stm_ovo, train_wstm_binary
from .svm import OvoEnsemble, SvmConfig, train_ovo, train_pairwise
from .synth import make_custom_streams, make_uci_like_tree

MODEL_CHOICES = ("svm", "logreg", "knn", "forest", "stm", "wstm")

_DEFAULTS = {
    "seed": 0,
    "jobs": 1,
    "data": None,
    "representation": None,  # per-model default: tensors for stm/wstm
    "standardize": None,  # per-representation default
    "C": None,
    "kernel": "linear",
    "gamma": "scale",
    "max_iters": 500,
    "k": 5,
    "metric": "euclidean",
    "sigma2": 1.0,
    "n_estimators": 100,
    "max_depth": None,
    "min_samples_leaf": 4,
    "min_samples_split": 2,
    "bootstrap": True,
    "max_outer_iters": 50,
    "convergence_tol": 1e-4,
    "folds": 5,
    "grouping": "none",
    "n_candidates": 10,
    "clients": 10,
    "rounds": 10,
    "local_epochs": 5,
    "learning_rate": 0.1,
    "partition": "iid",
    "dirichlet_alpha": 0.5,
    "client_fraction": 1.0,
    "l2": 1e-4,
    "model": None,
    "model_file": None,
    "inputs": None,
    "kind": "uci-like",
    "n_train": 1800,
    "n_test": 600,
}

_COMMAND_KEYS = {
    "train": {"seed", "jobs", "data", "model", "representation", "standardize",
              "C", "kernel", "gamma", "max_iters", "k", "metric", "sigma2",
              "n_estimators", "max_depth", "min_samples_leaf", "min_samples_split",
              "bootstrap", "max_outer_iters", "convergence_tol"},
    "evaluate": {"seed", "jobs", "data", "model_file", "representation", "standardize"},
    "cv": {"seed", "jobs", "data", "model", "representation", "standardize", "folds",
           "grouping", "C", "kernel", "gamma", "max_iters", "k", "metric", "sigma2",
           "n_estimators", "max_depth", "min_samples_leaf", "min_samples_split",
           "bootstrap", "max_outer_iters", "convergence_tol"},
    "search": {"seed", "jobs", "data", "model", "representation", "standardize",
               "folds", "n_candidates"},
    "fed": {"seed", "jobs", "data", "clients", "rounds", "local_epochs",
            "learning_rate", "partition", "dirichlet_alpha", "client_fraction", "l2"},
    "report": {"inputs"},
    "synth-data": {"seed", "kind", "n_train", "n_test"},
}

_DEFAULT_C = {"svm": 100.0, "logreg": 1.0, "stm": 1.0, "wstm": 1.0}


class CliError(Exception):
    pass


def _resolve_config(command: str, args: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags, with unknown keys rejected."""
    allowed = _COMMAND_KEYS[command]
    resolved = {k: _DEFAULTS[k] for k in allowed}
    if args.config is not None:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config file {args.config}: {exc}") from None
        if not isinstance(loaded, dict):
            raise CliError("config file must hold a JSON object")
        unknown = set(loaded) - allowed - {"command"}
        if unknown:
            raise CliError(
                f"unknown config key {sorted(unknown)[0]!r}; "
                f"allowed for {command}: {sorted(allowed)}")
        if loaded.get("command", command) != command:
            raise CliError(
                f"config file is for command {loaded['command']!r}, not {command!r}")
        resolved.update({k: v for k, v in loaded.items() if k != "command"})
    for key in allowed:
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            resolved[key] = value
    resolved["command"] = command
    return resolved


def _data_root(cfg: dict) -> Path:
    root = cfg.get("data") or os.environ.get("TENSORHAR_DATA") \
        or os.path.join("data", "UCI HAR Dataset")
    root = Path(root)
    if not root.is_dir():
        raise CliError(
            f"dataset root {root} not found; pass --data, set TENSORHAR_DATA, "
            "or generate one with: tensorhar synth-data --out <dir>")
    return root


def _load_splits(cfg: dict, representation: str):
    root = _data_root(cfg)
    train = load_uci_har(root, representation, "train")
    test = load_uci_har(root, representation, "test")
    x_train, x_test = train.samples, test.samples
    standardize_flag = cfg.get("standardize")
    if standardize_flag is None:
        standardize_flag = representation == "raw_tensors"
    if standardize_flag:
        if representation == "raw_tensors":
            x_train, record = standardize_channels(x_train)
        else:
            x_train, record = standardize(x_train)
        x_test = record.transform(x_test)
    return (x_train, train.labels, train.subjects), (x_test, test.labels, test.subjects)


def _representation_for(cfg: dict) -> str:
    rep = cfg.get("representation")
    if rep is None:
        rep = "tensors" if cfg.get("model") in ("stm", "wstm") else "features"
    full = {"features": "feature_vectors", "tensors": "raw_tensors"}
    if rep not in full:
        raise CliError(f"unknown representation {rep!r}; use features or tensors")
    return full[rep]


# module-level fitters so process pools can pickle them


def _fit_svm(x, y, C, kernel, gamma, jobs=1):
    return train_ovo(x, y, SvmConfig(C=C, kernel=kernel, gamma=gamma), jobs=jobs)


def _fit_logreg(x, y, C, max_iters):
    return train_logreg(x, y, LogRegConfig(C=C, max_iters=max_iters))


def _fit_knn(x, y, k, metric, sigma2):
    return train_knn(x, y, KnnConfig(k=k, metric=metric, sigma2=sigma2))


def _fit_forest(x, y, n_estimators, max_depth, min_samples_leaf, min_samples_split,
                bootstrap, seed, jobs=1):
    cfg = ForestConfig(n_estimators=n_estimators, max_depth=max_depth,
                       min_samples_leaf=min_samples_leaf,
                       min_samples_split=min_samples_split,
                       bootstrap=bootstrap, seed=seed)
    return train_forest(x, y, cfg, jobs=jobs)


def _fit_stm(x, y, C, max_outer_iters, convergence_tol, jobs=1):
    cfg = StmConfig(C=C, max_outer_iters=max_outer_iters, convergence_tol=convergence_tol)
    return train_stm_ovo(x, y, cfg, jobs=jobs)


def _fit_wstm(x, y, C, max_outer_iters, convergence_tol, sigma2, jobs=1):
    trainer = partial(_wstm_pair, C=C, max_outer_iters=max_outer_iters,
                      convergence_tol=convergence_tol, sigma2=sigma2)
    return train_pairwise(x, y, trainer, jobs=jobs)


def _wstm_pair(x_pair, y_signed, C, max_outer_iters, convergence_tol, sigma2):
    cfg = StmConfig(C=C, max_outer_iters=max_outer_iters, convergence_tol=convergence_tol)
    return train_wstm_binary(x_pair, y_signed, cfg, sigma2=sigma2)


def _build_fit(cfg: dict, jobs: int):
    model = cfg["model"]
    if model not in MODEL_CHOICES:
        raise CliError(f"unknown model {model!r}; choose from {MODEL_CHOICES}")
    C = cfg.get("C")
    if C is None:
        C = _DEFAULT_C.get(model, 1.0)
    if model == "svm":
        gamma = cfg["gamma"]
        if gamma != "scale":
            gamma = float(gamma)
        return partial(_fit_svm, C=float(C), kernel=cfg["kernel"], gamma=gamma, jobs=jobs)
    if model == "logreg":
        return partial(_fit_logreg, C=float(C), max_iters=int(cfg["max_iters"]))
    if model == "knn":
        return partial(_fit_knn, k=int(cfg["k"]), metric=cfg["metric"],
                       sigma2=float(cfg["sigma2"]))
    if model == "forest":
        return partial(_fit_forest, n_estimators=int(cfg["n_estimators"]),
                       max_depth=cfg["max_depth"],
                       min_samples_leaf=int(cfg["min_samples_leaf"]),
                       min_samples_split=int(cfg["min_samples_split"]),
                       bootstrap=bool(cfg["bootstrap"]), seed=int(cfg["seed"]), jobs=jobs)
    if model == "stm":
        return partial(_fit_stm, C=float(C), max_outer_iters=int(cfg["max_outer_iters"]),
                       convergence_tol=float(cfg["convergence_tol"]), jobs=jobs)
    return partial(_fit_wstm, C=float(C), max_outer_iters=int(cfg["max_outer_iters"]),
                   convergence_tol=float(cfg["convergence_tol"]),
                   sigma2=float(cfg["sigma2"]), jobs=jobs)


def _write_resolved(cfg: dict, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "resolved_config.json", "w", encoding="utf-8") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _emit_report(report, out: Path, protocol: str):
    report.protocol = protocol
    write_report_json(report, out / "report.json", class_names=list(ACTIVITY_NAMES))
    with open(out / "report.txt", "w", encoding="utf-8") as fh:
        fh.write(f"protocol: {protocol}\n\n")
        fh.write(format_class_table(report, class_names=list(ACTIVITY_NAMES)))
    write_confusion_csv(report.confusion, out / "confusion.csv",
                        class_names=list(ACTIVITY_NAMES))


def cmd_train(cfg: dict, out: Path) -> int:
    representation = _representation_for(cfg)
    (x_train, y_train, _), (x_test, y_test, _) = _load_splits(cfg, representation)
    fit = _build_fit(cfg, jobs=int(cfg["jobs"]))
    model = fit(x_train, y_train)
    save_model(model, out / "model.json")
    pred = model.predict(x_test)
    report = compute_report(y_test, pred, class_order=np.arange(6))
    _emit_report(report, out, protocol=f"fixed-holdout/{representation}")
    return 0


def cmd_evaluate(cfg: dict, out: Path) -> int:
    if not cfg.get("model_file"):
        raise CliError("evaluate requires --model-file")
    model = load_model(cfg["model_file"])
    tensor_model = (isinstance(model, StmBinaryModel)
                    or (isinstance(model, OvoEnsemble)
                        and isinstance(model.models[0], StmBinaryModel)))
    rep = cfg.get("representation")
    if rep is not None:
        representation = {"features": "feature_vectors", "tensors": "raw_tensors"}[rep]
    else:
        representation = "raw_tensors" if tensor_model else "feature_vectors"
    _, (x_test, y_test, _) = _load_splits(cfg, representation)
    pred = model.predict(x_test)
    report = compute_report(y_test, pred, class_order=np.arange(6))
    _emit_report(report, out, protocol=f"fixed-holdout/{representation}")
    return 0


def cmd_cv(cfg: dict, out: Path) -> int:
    representation = _representation_for(cfg)
    (x_train, y_train, subjects), (x_test, y_test, _) = _load_splits(cfg, representation)
    fit = _build_fit(cfg, jobs=1)
    jobs = int(cfg["jobs"])
    result = cross_validate(fit, x_train, y_train, k=int(cfg["folds"]),
                            seed=int(cfg["seed"]), grouping=cfg["grouping"],
                            subjects=subjects, jobs=jobs)
    model = fit(x_train, y_train)
    test_accuracy = float((model.predict(x_test) == y_test).mean())
    payload = {
        "model": cfg["model"],
        "folds": int(cfg["folds"]),
        "fold_accuracies": result.fold_accuracies,
        "cv_accuracy": result.mean_accuracy,
        "cv_std": result.std_accuracy,
        "test_accuracy": test_accuracy,
        "gap": result.mean_accuracy - test_accuracy,
        "grouping": cfg["grouping"],
    }
    with open(out / "cv.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "cv.txt", "w", encoding="utf-8") as fh:
        fh.write(format_cv_table([{"model": cfg["model"],
                                   "cv_accuracy": result.mean_accuracy,
                                   "test_accuracy": test_accuracy}]))
        fh.write("\nper-fold: " + " ".join(f"{a:.4f}" for a in result.fold_accuracies) + "\n")
    return 0


_SEARCH_SPACES = {
    "svm": {"C": [0.01, 0.1, 1.0, 10.0, 100.0], "kernel": ["linear", "rbf"]},
    "logreg": {"C": [0.01, 0.1, 1.0, 10.0, 100.0]},
    "knn": {"k": [1, 3, 5, 7, 9]},
    "forest": {"n_estimators": [50, 100, 200, 300],
               "max_depth": [None, 10, 20, 30, 40, 50],
               "min_samples_leaf": [1, 2, 4],
               "min_samples_split": [2, 5, 10]},
    "stm": {"C": [0.01, 0.1, 1.0, 10.0]},
}


def _search_factory(model: str, seed: int):
    def factory(params: dict):
        base = dict(_DEFAULTS)
        base.update({"model": model, "seed": seed})
        base.update(params)
        return _build_fit(base, jobs=1)

    return factory


def cmd_search(cfg: dict, out: Path) -> int:
    model = cfg["model"]
    if model not in _SEARCH_SPACES:
        raise CliError(f"no search space for model {model!r}; "
                       f"choose from {sorted(_SEARCH_SPACES)}")
    representation = _representation_for(cfg)
    (x_train, y_train, _), _ = _load_splits(cfg, representation)
    space = SearchSpace(grid=_SEARCH_SPACES[model],
                        n_candidates=int(cfg["n_candidates"]),
                        folds=int(cfg["folds"]), seed=int(cfg["seed"]))
    result = randomized_search(_search_factory(model, int(cfg["seed"])), space,
                               x_train, y_train, jobs=int(cfg["jobs"]))
    payload = {
        "model": model,
        "best_params": result.best_params,
        "best_score": result.best_score,
        "n_fits": result.n_fits,
        "table": result.table,
    }
    with open(out / "search.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "search.txt", "w", encoding="utf-8") as fh:
        fh.write(format_search_table(result))
    return 0


def cmd_fed(cfg: dict, out: Path) -> int:
    (x_train, y_train, subjects), (x_test, y_test, _) = _load_splits(cfg, "feature_vectors")
    fed_cfg = FedConfig(n_clients=int(cfg["clients"]), n_rounds=int(cfg["rounds"]),
                        local_epochs=int(cfg["local_epochs"]),
                        local_learning_rate=float(cfg["learning_rate"]),
                        partition=cfg["partition"],
                        dirichlet_alpha=float(cfg["dirichlet_alpha"]),
                        client_fraction=float(cfg["client_fraction"]),
                        l2=float(cfg["l2"]), seed=int(cfg["seed"]))
    logs = run_federation(x_train, y_train, x_test, y_test, fed_cfg,
                          subjects=subjects, jobs=int(cfg["jobs"]))
    write_round_log(logs, out / "rounds.ndjson")
    from .baselines import LogRegModel

    final = logs[-1]
    model = LogRegModel(weights=final.weights, bias=final.bias,
                        classes=np.unique(y_train))
    save_model(model, out / "final_model.json")
    with open(out / "fed.txt", "w", encoding="utf-8") as fh:
        fh.write(f"{'round':>5} {'accuracy':>9}\n")
        for entry in logs:
            fh.write(f"{entry.round:>5d} {entry.accuracy:>9.4f}\n")
    return 0


def cmd_report(cfg: dict, out: Path) -> int:
    inputs = cfg.get("inputs")
    if not inputs:
        raise CliError("report requires --inputs <run-dir> [<run-dir> ...]")
    rows = []
    consolidated = {}
    for run_dir in inputs:
        run = Path(run_dir)
        report_file = run / "report.json"
        config_file = run / "resolved_config.json"
        if not report_file.is_file():
            raise CliError(f"no report.json under {run}")
        with open(report_file, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        name = run.name
        if config_file.is_file():
            with open(config_file, "r", encoding="utf-8") as fh:
                name = json.load(fh).get("model") or name
        rows.append({"model": name, "accuracy": doc["accuracy"],
                     "precision": doc["macro"]["precision"],
                     "recall": doc["macro"]["recall"], "f1": doc["macro"]["f1"]})
        consolidated[name] = doc
        with open(out / f"confusion_{name}.csv", "w", encoding="utf-8", newline="") as fh:
            classes = doc["classes"]
            fh.write(",".join(["true\\predicted", *classes]) + "\n")
            for cname, row in zip(classes, doc["confusion"]):
                fh.write(",".join([cname, *[str(v) for v in row]]) + "\n")
    with open(out / "comparison.txt", "w", encoding="utf-8") as fh:
        fh.write(format_comparison_table(rows))
    with open(out / "comparison.json", "w", encoding="utf-8") as fh:
        json.dump(consolidated, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def cmd_synth_data(cfg: dict, out: Path) -> int:
    if cfg["kind"] == "uci-like":
        root = make_uci_like_tree(out, seed=int(cfg["seed"]),
                                  n_train=int(cfg["n_train"]), n_test=int(cfg["n_test"]))
    elif cfg["kind"] == "streams":
        root = make_custom_streams(out, seed=int(cfg["seed"]))
    else:
        raise CliError(f"unknown kind {cfg['kind']!r}; use uci-like or streams")
    with open(out / "synth.json", "w", encoding="utf-8") as fh:
        json.dump({"kind": cfg["kind"], "root": str(root), "seed": int(cfg["seed"])},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


_COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "cv": cmd_cv,
    "search": cmd_search,
    "fed": cmd_fed,
    "report": cmd_report,
    "synth-data": cmd_synth_data,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tensorhar",
                                     description="Sensor-based activity recognition toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", required=True, help="output directory for artifacts")
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jobs", type=int, default=None)

    def data_opts(p):
        p.add_argument("--data", default=None,
                       help="dataset root (default: $TENSORHAR_DATA)")
        p.add_argument("--representation", choices=["features", "tensors"], default=None)
        p.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=None)

    def model_opts(p):
        p.add_argument("--model", choices=MODEL_CHOICES, default=None)
        p.add_argument("--C", type=float, default=None)
        p.add_argument("--kernel", choices=["linear", "rbf"], default=None)
        p.add_argument("--gamma", default=None)
        p.add_argument("--max-iters", dest="max_iters", type=int, default=None)
        p.add_argument("--k", type=int, default=None)
        p.add_argument("--metric", choices=["euclidean", "tensor"], default=None)
        p.add_argument("--sigma2", type=float, default=None)
        p.add_argument("--n-estimators", dest="n_estimators", type=int, default=None)
        p.add_argument("--max-depth", dest="max_depth", type=int, default=None)
        p.add_argument("--min-samples-leaf", dest="min_samples_leaf", type=int, default=None)
        p.add_argument("--min-samples-split", dest="min_samples_split", type=int, default=None)
        p.add_argument("--bootstrap", action=argparse.BooleanOptionalAction, default=None)
        p.add_argument("--max-outer-iters", dest="max_outer_iters", type=int, default=None)
        p.add_argument("--convergence-tol", dest="convergence_tol", type=float, default=None)

    p = sub.add_parser("train", help="fit one model and evaluate on the test split")
    common(p); data_opts(p); model_opts(p)

    p = sub.add_parser("evaluate", help="evaluate a saved model on the test split")
    common(p); data_opts(p)
    p.add_argument("--model-file", dest="model_file", default=None)

    p = sub.add_parser("cv", help="stratified cross-validation on the training split")
    common(p); data_opts(p); model_opts(p)
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--grouping", choices=["none", "by_subject"], default=None)

    p = sub.add_parser("search", help="randomized hyperparameter search")
    common(p); data_opts(p)
    p.add_argument("--model", choices=sorted(_SEARCH_SPACES), default=None)
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--n-candidates", dest="n_candidates", type=int, default=None)

    p = sub.add_parser("fed", help="federated simulation on the training split")
    common(p)
    p.add_argument("--data", default=None)
    p.add_argument("--clients", type=int, default=None)
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--local-epochs", dest="local_epochs", type=int, default=None)
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    p.add_argument("--partition", choices=["iid", "by_subject", "dirichlet"], default=None)
    p.add_argument("--dirichlet-alpha", dest="dirichlet_alpha", type=float, default=None)
    p.add_argument("--client-fraction", dest="client_fraction", type=float, default=None)
    p.add_argument("--l2", type=float, default=None)

    p = sub.add_parser("report", help="consolidate run directories into one comparison")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--inputs", nargs="+", default=None)

    p = sub.add_parser("synth-data", help="generate synthetic datasets")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--kind", choices=["uci-like", "streams"], default=None)
    p.add_argument("--n-train", dest="n_train", type=int, default=None)
    p.add_argument("--n-test", dest="n_test", type=int, default=None)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve_config(args.command, args)
        out = Path(args.out)
        _write_resolved(cfg, out)
        return _COMMANDS[args.command](cfg, out)
    except (CliError, DataFormatError, ValueError) as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)},
                  sys.stderr, sort_keys=True)
        sys.stderr.write("\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
