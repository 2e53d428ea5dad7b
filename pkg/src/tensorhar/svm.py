"""Soft-margin SVM trained in the dual, plus one-vs-one multiclass reduction.

The binary solver runs two-variable analytic coordinate steps on the dual,
always picking the maximally KKT-violating pair, LIBSVM style. It supports
a per-sample box constraint (used by the weighted tensor machine) and both
the linear and RBF kernels. Everything is deterministic: no randomness is
used anywhere in training.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Sequence

import numpy as np

from .util import parallel_map

_BOUND_EPS = 0.0  # bounds are hit exactly by construction; see _smo_solve


@dataclass(frozen=True)
class SvmConfig:
    C: float = 1.0
    kernel: str = "linear"
    gamma: float | str = "scale"  # RBF width; ignored by the linear kernel
    tolerance: float = 1e-3
    max_passes: int = 200  # iteration budget is max_passes * n_samples

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError(f"C must be positive, got {self.C}")
        if self.kernel not in ("linear", "rbf"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_passes < 1:
            raise ValueError("max_passes must be >= 1")
        if not (self.gamma == "scale" or (isinstance(self.gamma, (int, float)) and self.gamma > 0)):
            raise ValueError(f"gamma must be positive or 'scale', got {self.gamma!r}")


def resolve_gamma(gamma, x: np.ndarray) -> float:
    """'scale' resolves to 1 / (n_features * Var(X)) on the training split."""
    if gamma == "scale":
        var = float(x.var())
        return 1.0 / (x.shape[1] * var) if var > 0 else 1.0
    return float(gamma)


def _kernel_matrix(a: np.ndarray, b: np.ndarray, kernel: str, gamma: float | None) -> np.ndarray:
    if kernel == "linear":
        return a @ b.T
    sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * (a @ b.T)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


class _KernelOracle:
    """Row access to the Gram matrix, materialized when it fits in memory."""

    def __init__(self, x: np.ndarray, kernel: str, gamma: float | None,
                 materialize_limit: int = 5000):
        self.x = x
        self.kernel = kernel
        self.gamma = gamma
        n = x.shape[0]
        if n <= materialize_limit:
            self.full = _kernel_matrix(x, x, kernel, gamma)
            self.diag = np.ascontiguousarray(np.diag(self.full))
        else:
            self.full = None
            if kernel == "linear":
                self.diag = (x * x).sum(axis=1)
            else:
                self.diag = np.ones(n)

    def row(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[i]
        return _kernel_matrix(self.x[i:i + 1], self.x, self.kernel, self.gamma)[0]


def _smo_solve(oracle: _KernelOracle, y: np.ndarray, c_vec: np.ndarray,
               tolerance: float, max_iter: int, alpha0: np.ndarray | None = None):
    """Maximal-violating-pair SMO on the dual.

    Maintains v_i = y_i - sum_j alpha_j y_j K_ij; optimality holds when
    max(v over I_up) - min(v over I_low) < tolerance. i is the maximal
    violator; its partner j is the candidate giving the largest
    guaranteed dual increase gap^2/quad, which avoids the slow zigzag a
    purely first-order partner choice hits on ill-conditioned blocks.
    Each step moves the pair along the equality-preserving direction with
    the exact analytic minimizer, clipped to the box. Bounds are assigned
    exactly when hit, so bound membership tests stay exact.

    alpha0, when given, must already be box-feasible with alpha0 . y = 0;
    warm starts cut iteration counts dramatically when re-solving a
    slightly perturbed problem (the alternating tensor trainer does this).
    """
    n = y.shape[0]
    pos = y > 0
    if alpha0 is None:
        alpha = np.zeros(n)
        v = y.astype(float).copy()
        dual_obj = 0.0
    else:
        alpha = alpha0.astype(float).copy()
        coef = alpha * y
        live = np.flatnonzero(coef)
        v = y.astype(float).copy()
        if live.size:
            if oracle.full is not None:
                v -= oracle.full[:, live] @ coef[live]
            else:
                for k in live:
                    v -= coef[k] * oracle.row(int(k))
        # W(a) = sum(a) - 0.5 (ay)' K (ay); K(ay) = y - v
        dual_obj = 0.5 * float(alpha.sum()) + 0.5 * float(coef @ v)
    trace = [dual_obj]
    n_iter = 0
    converged = False
    while n_iter < max_iter:
        at_upper = alpha >= c_vec
        at_zero = alpha <= 0.0
        up = (pos & ~at_upper) | (~pos & ~at_zero)
        low = (pos & ~at_zero) | (~pos & ~at_upper)
        if not up.any() or not low.any():
            converged = True
            break
        vi_masked = np.where(up, v, -np.inf)
        i = int(np.argmax(vi_masked))
        worst = float(np.min(np.where(low, v, np.inf)))
        if v[i] - worst < tolerance:
            converged = True
            break
        row_i = oracle.row(i)
        gaps = v[i] - v
        quads = np.maximum(oracle.diag[i] + oracle.diag - 2.0 * row_i, 1e-12)
        scores = np.where(low & (gaps > 0), gaps * gaps / quads, -np.inf)
        j = int(np.argmax(scores))
        gap = gaps[j]
        row_j = oracle.row(j)
        quad = quads[j]
        t_star = gap / quad
        t_i_max = (c_vec[i] - alpha[i]) if pos[i] else alpha[i]
        t_j_max = alpha[j] if pos[j] else (c_vec[j] - alpha[j])
        t = min(t_star, t_i_max, t_j_max)
        if t <= 0.0:
            converged = True
            break
        if t == t_i_max:
            alpha[i] = c_vec[i] if pos[i] else 0.0
        else:
            alpha[i] += y[i] * t
        if t == t_j_max:
            alpha[j] = 0.0 if pos[j] else c_vec[j]
        else:
            alpha[j] -= y[j] * t
        v -= t * (row_i - row_j)
        dual_obj += gap * t - 0.5 * quad * t * t
        trace.append(dual_obj)
        n_iter += 1

    at_upper = alpha >= c_vec
    at_zero = alpha <= 0.0
    free = ~at_upper & ~at_zero
    if free.any():
        bias = float(v[free].mean())
    else:
        up = (pos & ~at_upper) | (~pos & ~at_zero)
        low = (pos & ~at_zero) | (~pos & ~at_upper)
        hi = v[up].max() if up.any() else 0.0
        lo = v[low].min() if low.any() else 0.0
        bias = float((hi + lo) / 2.0)
    diagnostics = {
        "n_iter": n_iter,
        "converged": converged,
        "dual_objective": dual_obj,
        "dual_objective_trace": np.asarray(trace),
    }
    return alpha, bias, diagnostics


@dataclass
class BinarySvm:
    """Trained binary classifier; labels are the sign of the decision value."""

    kernel: str
    gamma: float | None
    bias: float
    alphas: np.ndarray
    support_labels: np.ndarray
    support_vectors: np.ndarray
    support_indices: np.ndarray
    n_features: int
    w: np.ndarray | None = None  # explicit weights, linear kernel only
    diagnostics: dict = field(default_factory=dict, repr=False, compare=False)

    def _check_dim(self, x: np.ndarray):
        if x.shape[-1] != self.n_features:
            raise ValueError(
                f"feature length {x.shape[-1]} does not match training dimension {self.n_features}"
            )

    def decision_function(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xb = x[None, :] if single else x
        self._check_dim(xb)
        if self.w is not None:
            vals = xb @ self.w + self.bias
        else:
            vals = self.kernel_decision_function(xb)
        return float(vals[0]) if single else vals

    def kernel_decision_function(self, x) -> np.ndarray:
        """Decision through the kernel expansion, regardless of stored w."""
        x = np.asarray(x, dtype=float)
        xb = x[None, :] if x.ndim == 1 else x
        self._check_dim(xb)
        k = _kernel_matrix(xb, self.support_vectors, self.kernel, self.gamma)
        return k @ (self.alphas * self.support_labels) + self.bias

    def predict(self, x) -> np.ndarray:
        vals = np.atleast_1d(self.decision_function(x))
        return np.where(vals >= 0, 1, -1)


def _feasible_start(alpha0: np.ndarray, y: np.ndarray, c_vec: np.ndarray) -> np.ndarray:
    """Project a candidate dual vector onto the constraint set.

    Clips to the box, then restores alpha . y = 0 by draining the excess
    from the heaviest coordinates of the overweight sign. Any feasible
    point is a valid solver start; closeness to alpha0 is best effort.
    """
    alpha = np.clip(np.asarray(alpha0, dtype=float), 0.0, c_vec)
    excess = float(alpha @ y)
    if excess == 0.0:
        return alpha
    sign = 1.0 if excess > 0 else -1.0
    need = abs(excess)
    candidates = np.flatnonzero((y == sign) & (alpha > 0))
    for k in candidates[np.argsort(-alpha[candidates])]:
        take = min(alpha[k], need)
        alpha[k] -= take
        need -= take
        if need <= 0:
            break
    if need > 0:  # numerically impossible excess; fall back to a cold start
        return np.zeros_like(alpha)
    return alpha


def train_binary_svm(x, y, cfg: SvmConfig = SvmConfig(),
                     sample_c: np.ndarray | None = None,
                     alpha0: np.ndarray | None = None) -> BinarySvm:
    """Fit the soft-margin dual on {-1,+1} labels.

    sample_c overrides the scalar box bound with per-sample values, which
    is how weighted variants plug in. alpha0 warm-starts the solver from
    a previous solution (projected onto the feasible set first). Raises
    on single-class input and on non-finite features.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"expected an (n, d) feature matrix, got shape {x.shape}")
    if y.shape != (x.shape[0],):
        raise ValueError(f"label shape {y.shape} does not match {x.shape[0]} samples")
    if not np.isfinite(x).all():
        raise ValueError("features contain NaN or infinite values")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if (y > 0).all() or (y < 0).all():
        raise ValueError("training data contains a single class")
    n = x.shape[0]
    if sample_c is None:
        c_vec = np.full(n, float(cfg.C))
    else:
        c_vec = np.asarray(sample_c, dtype=float)
        if c_vec.shape != (n,) or np.any(c_vec <= 0):
            raise ValueError("sample_c must give one positive bound per sample")

    gamma = resolve_gamma(cfg.gamma, x) if cfg.kernel == "rbf" else None
    oracle = _KernelOracle(x, cfg.kernel, gamma)
    start = None
    if alpha0 is not None:
        alpha0 = np.asarray(alpha0, dtype=float)
        if alpha0.shape != (n,):
            raise ValueError(f"alpha0 shape {alpha0.shape} does not match {n} samples")
        start = _feasible_start(alpha0, y, c_vec)
    alpha, bias, diagnostics = _smo_solve(
        oracle, y, c_vec, cfg.tolerance, max_iter=cfg.max_passes * n, alpha0=start)
    if not diagnostics["converged"]:
        warnings.warn(
            f"SMO stopped after {diagnostics['n_iter']} iterations without "
            f"reaching tolerance {cfg.tolerance}", RuntimeWarning)

    support = alpha > 0
    idx = np.flatnonzero(support)
    w = None
    if cfg.kernel == "linear":
        w = (alpha * y) @ x
    diagnostics = dict(diagnostics)
    diagnostics["n_support"] = int(idx.size)
    diagnostics["box"] = c_vec
    diagnostics["alphas_full"] = alpha
    return BinarySvm(
        kernel=cfg.kernel,
        gamma=gamma,
        bias=bias,
        alphas=alpha[idx].copy(),
        support_labels=y[idx].copy(),
        support_vectors=x[idx].copy(),
        support_indices=idx,
        n_features=x.shape[1],
        w=w,
        diagnostics=diagnostics,
    )


def decision_value(model: BinarySvm, x) -> float:
    """Signed margin of a single sample."""
    return float(model.decision_function(np.asarray(x, dtype=float)))


def kkt_violations(model: BinarySvm, x, y) -> dict:
    """Worst-case KKT violations of the trained model on its training set.

    Categories: alpha=0 wants y*f >= 1, free alphas want y*f = 1, and
    alpha=C wants y*f <= 1. Also reports |sum alpha_i y_i|.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    alpha = model.diagnostics["alphas_full"]
    c_vec = model.diagnostics["box"]
    f = np.atleast_1d(model.decision_function(x))
    yf = y * f
    at_zero = alpha <= 0.0
    at_upper = alpha >= c_vec
    free = ~at_zero & ~at_upper
    worst = {
        "zero": float(np.max(1.0 - yf[at_zero], initial=0.0)),
        "free": float(np.max(np.abs(yf[free] - 1.0), initial=0.0)),
        "upper": float(np.max(yf[at_upper] - 1.0, initial=0.0)),
        "alpha_dot_y": float(abs(np.dot(alpha, y))),
    }
    return worst


def primal_objective(model: BinarySvm, x, y) -> float:
    """0.5 ||w||^2 (in the kernel's feature space) + sum_i C_i * hinge_i."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    c_vec = model.diagnostics["box"]
    if model.w is not None:
        norm_sq = float(model.w @ model.w)
    else:
        coef = model.alphas * model.support_labels
        k_ss = _kernel_matrix(model.support_vectors, model.support_vectors,
                              model.kernel, model.gamma)
        norm_sq = float(coef @ k_ss @ coef)
    f = np.atleast_1d(model.decision_function(x))
    hinge = np.maximum(0.0, 1.0 - y * f)
    return 0.5 * norm_sq + float(c_vec @ hinge)


# --- one-vs-one reduction (shared with the tensor classifier) ---


@dataclass
class OvoEnsemble:
    """One binary model per unordered class pair; majority vote prediction.

    Ties break by the summed absolute decision values collected by each
    class, then by the lowest class index. Any model object exposing
    decision_function works, so the tensor machine reuses this unchanged.
    """

    classes: np.ndarray
    pairs: list[tuple[int, int]]
    models: list

    def __post_init__(self):
        n = len(self.classes)
        if len(self.models) != n * (n - 1) // 2:
            raise ValueError(
                f"{len(self.classes)} classes need {n * (n - 1) // 2} pairwise models, "
                f"got {len(self.models)}")

    def votes_and_scores(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        m = x.shape[0]
        k = len(self.classes)
        votes = np.zeros((m, k), dtype=int)
        scores = np.zeros((m, k))
        index = {int(c): pos for pos, c in enumerate(self.classes)}
        for (a, b), model in zip(self.pairs, self.models):
            f = np.atleast_1d(model.decision_function(x))
            wins_a = f >= 0
            ia, ib = index[a], index[b]
            votes[:, ia] += wins_a
            votes[:, ib] += ~wins_a
            scores[:, ia] += np.abs(f) * wins_a
            scores[:, ib] += np.abs(f) * ~wins_a
        return votes, scores

    def predict(self, x) -> np.ndarray:
        votes, scores = self.votes_and_scores(x)
        best = votes.max(axis=1, keepdims=True)
        tied = votes == best
        masked = np.where(tied, scores, -np.inf)
        top = masked.max(axis=1, keepdims=True)
        final = tied & (masked == top)
        return self.classes[final.argmax(axis=1)]

    def predict_scores(self, x) -> np.ndarray:
        """Vote fractions per class (rows sum to 1)."""
        votes, _ = self.votes_and_scores(x)
        return votes / votes.sum(axis=1, keepdims=True)


def _fit_pair(task, trainer):
    x_pair, y_signed = task
    return trainer(x_pair, y_signed)


def train_pairwise(x, y, trainer: Callable, classes: Sequence[int] | None = None,
                   jobs: int = 1) -> OvoEnsemble:
    """Train one binary model per class pair with a pluggable trainer.

    trainer(x_pair, y_signed) sees only that pair's samples, labeled +1 for
    the lower class of the pair and -1 for the higher.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=int)
    present = np.unique(y)
    if classes is None:
        classes = present
    else:
        classes = np.asarray(sorted(int(c) for c in classes))
        missing = [int(c) for c in classes if c not in present]
        if missing:
            raise ValueError(f"no training samples for class {missing[0]}")
    if len(classes) < 2:
        raise ValueError("one-vs-one needs at least two classes")
    pairs = [(int(a), int(b)) for ai, a in enumerate(classes) for b in classes[ai + 1:]]
    tasks = []
    for a, b in pairs:
        mask = (y == a) | (y == b)
        y_signed = np.where(y[mask] == a, 1.0, -1.0)
        tasks.append((x[mask], y_signed))
    models = parallel_map(partial(_fit_pair, trainer=trainer), tasks, jobs=jobs)
    return OvoEnsemble(classes=np.asarray(classes), pairs=pairs, models=models)


def _svm_trainer(x_pair, y_signed, cfg: SvmConfig):
    return train_binary_svm(x_pair, y_signed, cfg)


def train_ovo(x, y, cfg: SvmConfig = SvmConfig(), classes: Sequence[int] | None = None,
              jobs: int = 1) -> OvoEnsemble:
    """One-vs-one SVM: n classes yield n(n-1)/2 binary models."""
    return train_pairwise(x, y, partial(_svm_trainer, cfg=cfg), classes=classes, jobs=jobs)


def predict_ovo(ensemble: OvoEnsemble, x) -> np.ndarray:
    return ensemble.predict(np.atleast_2d(np.asarray(x, dtype=float)))


# --- serialization ---


def binary_svm_to_doc(model: BinarySvm) -> dict:
    doc = {
        "kernel": model.kernel,
        "gamma": model.gamma,
        "bias": model.bias,
        "n_features": model.n_features,
    }
    if model.w is not None:
        doc["w"] = model.w.tolist()
    else:
        doc["alphas"] = model.alphas.tolist()
        doc["support_labels"] = model.support_labels.tolist()
        doc["support_vectors"] = model.support_vectors.tolist()
    return doc


def binary_svm_from_doc(doc: dict) -> BinarySvm:
    n_features = int(doc["n_features"])
    if "w" in doc:
        w = np.asarray(doc["w"], dtype=float)
        empty = np.zeros((0,))
        return BinarySvm(kernel=doc["kernel"], gamma=doc["gamma"], bias=float(doc["bias"]),
                         alphas=empty, support_labels=empty,
                         support_vectors=np.zeros((0, n_features)),
                         support_indices=np.zeros(0, dtype=int),
                         n_features=n_features, w=w)
    return BinarySvm(kernel=doc["kernel"], gamma=doc["gamma"], bias=float(doc["bias"]),
                     alphas=np.asarray(doc["alphas"], dtype=float),
                     support_labels=np.asarray(doc["support_labels"], dtype=float),
                     support_vectors=np.asarray(doc["support_vectors"], dtype=float),
                     support_indices=np.zeros(0, dtype=int),
                     n_features=n_features, w=None)


def svm_ovo_to_doc(ensemble: OvoEnsemble) -> dict:
    return {
        "classes": [int(c) for c in ensemble.classes],
        "pairs": [
            {"a": a, "b": b, **binary_svm_to_doc(m)}
            for (a, b), m in zip(ensemble.pairs, ensemble.models)
        ],
    }


def svm_ovo_from_doc(doc: dict) -> OvoEnsemble:
    classes = np.asarray(doc["classes"], dtype=int)
    pairs = [(int(p["a"]), int(p["b"])) for p in doc["pairs"]]
    models = [binary_svm_from_doc(p) for p in doc["pairs"]]
    return OvoEnsemble(classes=classes, pairs=pairs, models=models)
