"""Evaluation harness: confusion matrices, per-class metrics, stratified
cross-validation (optionally grouped by subject), randomized hyperparameter
search, and plain-text/JSON/CSV report writers.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import partial
from math import prod
from typing import Callable, Sequence

import numpy as np

from .util import parallel_map, substream


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (n_classes, n_classes); rows true, columns predicted
    classes: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=int)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ValueError(f"confusion matrix must be square, got {self.counts.shape}")
        if (self.counts < 0).any():
            raise ValueError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class EvalReport:
    accuracy: float
    precision: np.ndarray  # per class
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    macro_precision: float
    macro_recall: float
    macro_f1: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    confusion: ConfusionMatrix
    zero_division_flags: list = field(default_factory=list)
    protocol: str = ""  # which split/protocol produced the predictions


def compute_report(y_true, y_pred, class_order=None, protocol: str = "") -> EvalReport:
    """Accuracy plus per-class precision/recall/F1 with macro and weighted
    averages. Zero-denominator metrics are defined as 0 and flagged."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ValueError(
            f"length mismatch: {y_true.shape[0]} true vs {y_pred.shape[0]} predicted labels")
    classes = np.unique(y_true) if class_order is None else np.asarray(class_order)
    index = {int(c): i for i, c in enumerate(classes)}
    for name, arr in (("true", y_true), ("predicted", y_pred)):
        unknown = set(int(v) for v in np.unique(arr)) - set(index)
        if unknown:
            raise ValueError(f"unknown {name} label {sorted(unknown)[0]}")
    n = len(classes)
    counts = np.zeros((n, n), dtype=int)
    for t, p in zip(y_true, y_pred):
        counts[index[int(t)], index[int(p)]] += 1
    tp = np.diag(counts).astype(float)
    support = counts.sum(axis=1).astype(float)
    predicted = counts.sum(axis=0).astype(float)
    flags = []
    precision = np.zeros(n)
    recall = np.zeros(n)
    f1 = np.zeros(n)
    for i in range(n):
        if predicted[i] > 0:
            precision[i] = tp[i] / predicted[i]
        else:
            flags.append((int(classes[i]), "precision"))
        if support[i] > 0:
            recall[i] = tp[i] / support[i]
        else:
            flags.append((int(classes[i]), "recall"))
        if precision[i] + recall[i] > 0:
            f1[i] = 2 * precision[i] * recall[i] / (precision[i] + recall[i])
        else:
            flags.append((int(classes[i]), "f1"))
    total = counts.sum()
    accuracy = float(tp.sum() / total) if total else 0.0
    weights = support / support.sum() if support.sum() else np.zeros(n)
    return EvalReport(
        accuracy=accuracy,
        precision=precision, recall=recall, f1=f1,
        support=support.astype(int),
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        weighted_precision=float(weights @ precision),
        weighted_recall=float(weights @ recall),
        weighted_f1=float(weights @ f1),
        confusion=ConfusionMatrix(counts=counts, classes=classes),
        zero_division_flags=flags,
        protocol=protocol,
    )


def stratified_kfold(y, k: int, seed: int = 0, grouping: str = "none",
                     subjects=None) -> list[tuple[np.ndarray, np.ndarray]]:
    """k disjoint covering train/test splits.

    Ungrouped mode shuffles within each class and deals round-robin, so
    per-fold class counts deviate from proportionality by at most one
    sample. by_subject keeps every subject's windows in a single fold.
    """
    y = np.asarray(y)
    if k < 2:
        raise ValueError("k must be >= 2")
    n = y.shape[0]
    rng = substream(seed, "cv-folds")
    fold_of = np.empty(n, dtype=int)
    if grouping == "none":
        for c in np.unique(y):
            idx = np.flatnonzero(y == c)
            if idx.size < k:
                raise ValueError(f"class {c} has only {idx.size} samples for {k} folds")
            rng.shuffle(idx)
            fold_of[idx] = np.arange(idx.size) % k
    elif grouping == "by_subject":
        if subjects is None:
            raise ValueError("by_subject grouping requires subject ids")
        subjects = np.asarray(subjects)
        unique = np.unique(subjects)
        if unique.size < k:
            raise ValueError(f"{unique.size} subjects cannot fill {k} folds")
        order = unique.copy()
        rng.shuffle(order)
        assignment = {int(s): i % k for i, s in enumerate(order)}
        fold_of = np.asarray([assignment[int(s)] for s in subjects])
    else:
        raise ValueError(f"unknown grouping {grouping!r}")
    splits = []
    everything = np.arange(n)
    for f in range(k):
        test = everything[fold_of == f]
        train = everything[fold_of != f]
        splits.append((train, test))
    return splits


@dataclass
class CvResult:
    fold_accuracies: list[float]
    mean_accuracy: float
    std_accuracy: float
    n_fits: int
    reports: list[EvalReport] = field(default_factory=list, repr=False)


def _run_fold(split, fit, x, y):
    train, test = split
    model = fit(x[train], y[train])
    pred = model.predict(x[test])
    return compute_report(y[test], pred, class_order=np.unique(y), protocol="cv-fold")


def cross_validate(fit: Callable, x, y, k: int = 5, seed: int = 0,
                   grouping: str = "none", subjects=None, jobs: int = 1) -> CvResult:
    """Evaluate fit(x_train, y_train) -> model across stratified folds."""
    x = np.asarray(x)
    y = np.asarray(y)
    splits = stratified_kfold(y, k, seed=seed, grouping=grouping, subjects=subjects)
    reports = parallel_map(partial(_run_fold, fit=fit, x=x, y=y), splits, jobs=jobs)
    accs = [r.accuracy for r in reports]
    return CvResult(
        fold_accuracies=accs,
        mean_accuracy=float(np.mean(accs)),
        std_accuracy=float(np.std(accs)),
        n_fits=len(splits),
        reports=reports,
    )


@dataclass(frozen=True)
class SearchSpace:
    grid: dict  # hyperparameter name -> list of candidate values
    n_candidates: int
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be >= 1")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if not self.grid or any(len(v) == 0 for v in self.grid.values()):
            raise ValueError("search space must be nonempty")

    @property
    def size(self) -> int:
        return prod(len(v) for v in self.grid.values())

    def candidate(self, index: int) -> dict:
        """Mixed-radix decoding of a flat index into one configuration."""
        names = sorted(self.grid)
        params = {}
        for name in names:
            values = self.grid[name]
            params[name] = values[index % len(values)]
            index //= len(values)
        return params


@dataclass
class SearchResult:
    best_params: dict
    best_score: float
    table: list  # one row per candidate: {"params", "fold_accuracies", "mean_accuracy"}
    n_fits: int


def randomized_search(fit_factory: Callable[[dict], Callable], space: SearchSpace,
                      x, y, grouping: str = "none", subjects=None,
                      jobs: int = 1) -> SearchResult:
    """Sample configurations without replacement and cross-validate each.

    Candidates beyond the finite grid size degrade to exhaustive search.
    The best configuration is the argmax of mean fold accuracy; ties break
    to the earlier candidate in evaluation order.
    """
    total = space.size
    if space.n_candidates >= total:
        chosen = np.arange(total)
    else:
        rng = substream(space.seed, "search-candidates")
        chosen = rng.choice(total, size=space.n_candidates, replace=False)
    table = []
    n_fits = 0
    best = None
    for flat_index in chosen:
        params = space.candidate(int(flat_index))
        result = cross_validate(fit_factory(params), x, y, k=space.folds,
                                seed=space.seed, grouping=grouping,
                                subjects=subjects, jobs=jobs)
        n_fits += result.n_fits
        row = {"params": params, "fold_accuracies": result.fold_accuracies,
               "mean_accuracy": result.mean_accuracy}
        table.append(row)
        if best is None or result.mean_accuracy > best[0]:
            best = (result.mean_accuracy, params)
    return SearchResult(best_params=best[1], best_score=best[0], table=table, n_fits=n_fits)


# --- report output ---


def report_to_dict(report: EvalReport, class_names: Sequence[str] | None = None) -> dict:
    classes = report.confusion.classes
    names = list(class_names) if class_names is not None else [str(int(c)) for c in classes]
    return {
        "accuracy": report.accuracy,
        "protocol": report.protocol,
        "classes": names,
        "per_class": {
            names[i]: {
                "precision": float(report.precision[i]),
                "recall": float(report.recall[i]),
                "f1": float(report.f1[i]),
                "support": int(report.support[i]),
            }
            for i in range(len(classes))
        },
        "macro": {"precision": report.macro_precision, "recall": report.macro_recall,
                  "f1": report.macro_f1},
        "weighted": {"precision": report.weighted_precision, "recall": report.weighted_recall,
                     "f1": report.weighted_f1},
        "confusion": report.confusion.counts.tolist(),
        "zero_division_flags": [list(f) for f in report.zero_division_flags],
    }


def write_report_json(report: EvalReport, path, class_names=None):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report_to_dict(report, class_names), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_confusion_csv(cm: ConfusionMatrix, path, class_names=None):
    names = list(class_names) if class_names is not None else [str(int(c)) for c in cm.classes]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\predicted", *names])
        for name, row in zip(names, cm.counts):
            writer.writerow([name, *[int(v) for v in row]])


def format_comparison_table(rows: Sequence[dict]) -> str:
    """Model comparison: one row per model with accuracy and macro metrics."""
    header = f"{'Model':<26} {'Accuracy':>9} {'Precision':>10} {'Recall':>8} {'F1-Score':>9}"
    lines = [header, "-" * len(header)]
    for row in rows:
        lines.append(
            f"{row['model']:<26} {row['accuracy']:>9.4f} {row['precision']:>10.4f} "
            f"{row['recall']:>8.4f} {row['f1']:>9.4f}")
    return "\n".join(lines) + "\n"


def format_class_table(report: EvalReport, class_names: Sequence[str] | None = None) -> str:
    """Per-class table with macro and weighted average rows."""
    classes = report.confusion.classes
    names = list(class_names) if class_names is not None else [str(int(c)) for c in classes]
    width = max(12, max(len(n) for n in names) + 2)
    header = f"{'':<{width}} {'Precision':>10} {'Recall':>8} {'F1-Score':>9} {'Support':>8}"
    lines = [header, "-" * len(header)]
    for i, name in enumerate(names):
        lines.append(
            f"{name:<{width}} {report.precision[i]:>10.2f} {report.recall[i]:>8.2f} "
            f"{report.f1[i]:>9.2f} {int(report.support[i]):>8d}")
    lines.append("")
    lines.append(f"{'Accuracy':<{width}} {report.accuracy:>10.2f}")
    lines.append(
        f"{'Macro Avg.':<{width}} {report.macro_precision:>10.2f} {report.macro_recall:>8.2f} "
        f"{report.macro_f1:>9.2f} {int(report.support.sum()):>8d}")
    lines.append(
        f"{'Weighted Avg.':<{width}} {report.weighted_precision:>10.2f} "
        f"{report.weighted_recall:>8.2f} {report.weighted_f1:>9.2f} "
        f"{int(report.support.sum()):>8d}")
    return "\n".join(lines) + "\n"


def format_cv_table(rows: Sequence[dict]) -> str:
    """Cross-validation vs held-out accuracy per model."""
    header = f"{'Model':<26} {'CV Accuracy':>12} {'Test Accuracy':>14} {'Gap':>8}"
    lines = [header, "-" * len(header)]
    for row in rows:
        gap = row["cv_accuracy"] - row["test_accuracy"]
        lines.append(
            f"{row['model']:<26} {row['cv_accuracy']:>12.4f} {row['test_accuracy']:>14.4f} "
            f"{gap:>8.4f}")
    return "\n".join(lines) + "\n"


def format_search_table(result: SearchResult) -> str:
    """Best configuration first, then every evaluated candidate."""
    lines = [f"best mean accuracy: {result.best_score:.4f}",
             f"best params: {json.dumps(result.best_params, sort_keys=True)}",
             f"total fits: {result.n_fits}", ""]
    header = f"{'mean_accuracy':>13}  params"
    lines.append(header)
    lines.append("-" * 60)
    for row in result.table:
        lines.append(f"{row['mean_accuracy']:>13.4f}  {json.dumps(row['params'], sort_keys=True)}")
    return "\n".join(lines) + "\n"
