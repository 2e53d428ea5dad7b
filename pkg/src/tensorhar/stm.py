"""Support tensor machine: a rank-1 multilinear classifier.

The decision function contracts the sample tensor with one weight vector
per mode, f(x) = x ×_1 w1 ... ×_N wN + b. Training alternates over modes:
with all but mode n frozen, the problem in (w_n, b) is a soft-margin SVM
whose regularizer is scaled by gamma = prod_{k != n} ||w_k||^2, which maps
exactly to a standard SVM with box bound C / gamma on the contracted
features. Per-sample weights give the robust weighted variant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

import numpy as np

from .svm import OvoEnsemble, SvmConfig, train_binary_svm, train_pairwise
from .tensor import tensor_distance


@dataclass(frozen=True)
class StmConfig:
    C: float = 1.0
    sample_weights: np.ndarray | None = None  # weighted variant; one positive value per sample
    max_outer_iters: int = 50
    convergence_tol: float = 1e-4
    svm_tolerance: float = 1e-3
    svm_max_passes: int = 200

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError(f"C must be positive, got {self.C}")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be positive")


def _contract_batch_except(xs: np.ndarray, weights: Sequence[np.ndarray], n: int) -> np.ndarray:
    """Contract every mode but n of each sample; axis 0 is the batch axis.

    Contracting from the highest mode down keeps lower axis numbers stable.
    """
    out = xs
    for k in range(len(weights), 0, -1):
        if k == n:
            continue
        # axis k is stable because only higher axes have been contracted away
        out = np.tensordot(out, weights[k - 1], axes=(k, 0))
    return out


def _contract_batch(xs: np.ndarray, weights: Sequence[np.ndarray]) -> np.ndarray:
    out = xs
    for w in reversed(weights):
        out = np.tensordot(out, w, axes=(out.ndim - 1, 0))
    return out


@dataclass
class StmBinaryModel:
    """One weight vector per tensor mode plus a bias.

    Weights are stored gauge-fixed: modes 1..N-1 have unit norm and the
    product of the original norms is folded into the last mode, so the
    last mode's norm equals the Frobenius norm of the rank-1 weight tensor.
    """

    weights: list[np.ndarray]
    bias: float
    shape: tuple[int, ...]
    gamma_trace: np.ndarray
    diagnostics: dict = field(default_factory=dict, repr=False, compare=False)

    def _as_batch(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=float)
        if x.shape == self.shape:
            return x[None, ...], True
        if x.shape[1:] == self.shape:
            return x, False
        raise ValueError(f"tensor shape {x.shape} does not match model shape {self.shape}")

    def decision_function(self, x) -> np.ndarray | float:
        xb, single = self._as_batch(x)
        vals = _contract_batch(xb, self.weights) + self.bias
        return float(vals[0]) if single else vals

    def margin(self, x) -> np.ndarray | float:
        """Distance to the separating surface, |f| / ||w_last||."""
        norm = float(np.linalg.norm(self.weights[-1]))
        f = self.decision_function(x)
        return np.abs(f) / norm if norm > 0 else np.abs(f) * 0.0

    def predict(self, x) -> np.ndarray:
        xb, single = self._as_batch(x)
        labels = np.where(_contract_batch(xb, self.weights) + self.bias >= 0, 1, -1)
        return labels[0] if single else labels


def contract_except(x, model, n: int) -> np.ndarray:
    """Contract every mode of x except mode n (1-based) with the model's
    weight vectors, leaving a vector of length I_n.

    model may be an StmBinaryModel or a plain sequence of mode vectors.
    """
    weights = model.weights if isinstance(model, StmBinaryModel) else list(model)
    x = np.asarray(x, dtype=float)
    if x.ndim != len(weights):
        raise ValueError(f"tensor order {x.ndim} does not match {len(weights)} mode vectors")
    if not 1 <= n <= x.ndim:
        raise ValueError(f"mode {n} out of range for order-{x.ndim} tensor")
    for k, w in enumerate(weights, start=1):
        if k != n and x.shape[k - 1] != len(w):
            raise ValueError(
                f"mode {k} has length {x.shape[k - 1]} but weight vector has length {len(w)}")
    return _contract_batch_except(x[None, ...], weights, n)[0]


def _gauge_fixed(weights: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Unit-normalize all but the last mode, folding the norms into it."""
    fixed = []
    scale = 1.0
    for w in weights[:-1]:
        norm = float(np.linalg.norm(w))
        if norm > 0:
            fixed.append(w / norm)
            scale *= norm
        else:
            fixed.append(w.copy())
    fixed.append(weights[-1] * scale)
    return fixed


def _pooled_objective(xs, y, weights, bias, c_effective) -> float:
    """0.5 prod_k ||w_k||^2 + sum_i C_i * hinge_i with current slack."""
    norm_sq = 1.0
    for w in weights:
        norm_sq *= float(w @ w)
    f = _contract_batch(xs, weights) + bias
    hinge = np.maximum(0.0, 1.0 - y * f)
    return 0.5 * norm_sq + float(c_effective @ hinge)


def train_stm_binary(xs, y, cfg: StmConfig = StmConfig()) -> StmBinaryModel:
    """Alternating per-mode optimization on {-1,+1} tensor labels.

    Every mode vector starts as the unit-normalized all-ones vector. Each
    outer sweep re-solves each mode's SVM subproblem in turn, warm-started
    from that mode's previous dual variables; convergence is judged on the
    gauge-fixed weights so the per-mode scale freedom cannot mask or fake
    progress. A mode collapsing to zero norm is reinitialized and the
    event recorded.

    A proposed mode update is kept only when it does not increase the
    pooled objective (mode-norm product plus weighted hinge sum). The
    subproblem optimum can never be worse than the incumbent mode vector,
    but a finite-tolerance inner solve can be; rejecting those proposals
    keeps the outer descent monotone. Rejections land in diagnostics.
    """
    xs = np.asarray(xs, dtype=float)
    y = np.asarray(y, dtype=float)
    if xs.ndim < 2:
        raise ValueError(f"expected a batch of tensors, got shape {xs.shape}")
    if y.shape != (xs.shape[0],):
        raise ValueError(f"label shape {y.shape} does not match {xs.shape[0]} samples")
    if not np.isfinite(xs).all():
        raise ValueError("tensors contain NaN or infinite values")
    shape = xs.shape[1:]
    n_modes = len(shape)
    n_samples = xs.shape[0]
    if cfg.sample_weights is None:
        sw = np.ones(n_samples)
    else:
        sw = np.asarray(cfg.sample_weights, dtype=float)
        if sw.shape != (n_samples,) or np.any(sw <= 0):
            raise ValueError("sample_weights must give one positive value per sample")
    c_effective = cfg.C * sw

    def fresh(length: int) -> np.ndarray:
        return np.ones(length) / np.sqrt(length)

    weights = [fresh(length) for length in shape]
    bias = 0.0
    inner_cfg = SvmConfig(C=1.0, kernel="linear", tolerance=cfg.svm_tolerance,
                          max_passes=cfg.svm_max_passes)
    gamma_trace: list[float] = []
    objective_trace: list[float] = []
    reinit_events: list[dict] = []
    rejected_updates: list[dict] = []
    sweep_deltas: list[float] = []
    mode_alphas: list[np.ndarray | None] = [None] * n_modes
    current_obj = _pooled_objective(xs, y, weights, bias, c_effective)
    prev_fixed = _gauge_fixed(weights)
    converged = False
    sweeps = 0
    for sweep in range(1, cfg.max_outer_iters + 1):
        sweeps = sweep
        for n in range(1, n_modes + 1):
            gamma = 1.0
            for k in range(n_modes):
                if k == n - 1:
                    continue
                norm_sq = float(weights[k] @ weights[k])
                if norm_sq == 0.0:
                    weights[k] = fresh(shape[k])
                    norm_sq = float(weights[k] @ weights[k])
                    reinit_events.append({"sweep": sweep, "mode": k + 1})
                gamma *= norm_sq
            gamma_trace.append(gamma)
            features = _contract_batch_except(xs, weights, n)
            sub = train_binary_svm(features, y, inner_cfg, sample_c=c_effective / gamma,
                                   alpha0=mode_alphas[n - 1])
            mode_alphas[n - 1] = sub.diagnostics["alphas_full"]
            proposed = weights[:n - 1] + [sub.w] + weights[n:]
            proposed_obj = _pooled_objective(xs, y, proposed, sub.bias, c_effective)
            if proposed_obj <= current_obj:
                weights[n - 1] = sub.w
                bias = sub.bias
                current_obj = proposed_obj
            else:
                rejected_updates.append({"sweep": sweep, "mode": n,
                                         "excess": proposed_obj - current_obj})
            objective_trace.append(current_obj)
        fixed = _gauge_fixed(weights)
        delta = max(
            float(np.linalg.norm(new - old)) / max(float(np.linalg.norm(old)), 1e-12)
            for new, old in zip(fixed, prev_fixed)
        )
        sweep_deltas.append(delta)
        prev_fixed = fixed
        if delta < cfg.convergence_tol:
            converged = True
            break

    final = _gauge_fixed(weights)
    return StmBinaryModel(
        weights=final,
        bias=float(bias),
        shape=tuple(shape),
        gamma_trace=np.asarray(gamma_trace),
        diagnostics={
            "objective_trace": np.asarray(objective_trace),
            "sweep_deltas": np.asarray(sweep_deltas),
            "n_sweeps": sweeps,
            "converged": converged,
            "reinit_events": reinit_events,
            "rejected_updates": rejected_updates,
        },
    )


def predict_stm(model: StmBinaryModel, x) -> tuple[int, float]:
    """Class in {-1,+1} and the margin of a single tensor."""
    f = model.decision_function(np.asarray(x, dtype=float))
    if not np.isscalar(f) and getattr(f, "ndim", 0) > 0:
        raise ValueError("predict_stm expects a single tensor; use model.predict for batches")
    norm = float(np.linalg.norm(model.weights[-1]))
    margin = abs(f) / norm if norm > 0 else 0.0
    return (1 if f >= 0 else -1), margin


def distance_based_weights(xs, y, sigma2: float = 1.0) -> np.ndarray:
    """Per-sample robustness weights s_i = exp(-d_i^2 / (2 sigma_w^2)).

    d_i is the tensor distance from sample i to its class mean and sigma_w
    is the median of all d_i, so roughly half the samples keep weight
    above exp(-1/2) and far outliers are strongly downweighted.
    """
    xs = np.asarray(xs, dtype=float)
    y = np.asarray(y)
    dists = np.empty(xs.shape[0])
    for label in np.unique(y):
        mask = y == label
        mean = xs[mask].mean(axis=0)
        for i in np.flatnonzero(mask):
            dists[i] = tensor_distance(xs[i], mean, sigma2=sigma2)
    sigma_w = float(np.median(dists))
    if sigma_w <= 0:
        return np.ones(xs.shape[0])
    return np.exp(-(dists ** 2) / (2.0 * sigma_w ** 2))


def train_wstm_binary(xs, y, cfg: StmConfig = StmConfig(), sigma2: float = 1.0) -> StmBinaryModel:
    """Weighted variant with distance-based weights computed from the data."""
    weights = distance_based_weights(xs, y, sigma2=sigma2)
    cfg = StmConfig(C=cfg.C, sample_weights=weights, max_outer_iters=cfg.max_outer_iters,
                    convergence_tol=cfg.convergence_tol, svm_tolerance=cfg.svm_tolerance,
                    svm_max_passes=cfg.svm_max_passes)
    return train_stm_binary(xs, y, cfg)


def _stm_trainer(xs_pair, y_signed, cfg: StmConfig):
    return train_stm_binary(xs_pair, y_signed, cfg)


def train_stm_ovo(xs, y, cfg: StmConfig = StmConfig(), classes=None, jobs: int = 1) -> OvoEnsemble:
    """One-vs-one reduction with binary tensor machines, sharing the SVM
    ensemble plumbing (same voting and tie rules)."""
    return train_pairwise(xs, y, partial(_stm_trainer, cfg=cfg), classes=classes, jobs=jobs)


# --- serialization ---


def stm_binary_to_doc(model: StmBinaryModel) -> dict:
    return {
        "shape": list(model.shape),
        "weights": [w.tolist() for w in model.weights],
        "bias": model.bias,
    }


def stm_binary_from_doc(doc: dict) -> StmBinaryModel:
    weights = [np.asarray(w, dtype=float) for w in doc["weights"]]
    return StmBinaryModel(weights=weights, bias=float(doc["bias"]),
                          shape=tuple(doc["shape"]), gamma_trace=np.zeros(0))


def stm_ovo_to_doc(ensemble: OvoEnsemble) -> dict:
    return {
        "classes": [int(c) for c in ensemble.classes],
        "pairs": [
            {"a": a, "b": b, **stm_binary_to_doc(m)}
            for (a, b), m in zip(ensemble.pairs, ensemble.models)
        ],
    }


def stm_ovo_from_doc(doc: dict) -> OvoEnsemble:
    classes = np.asarray(doc["classes"], dtype=int)
    pairs = [(int(p["a"]), int(p["b"])) for p in doc["pairs"]]
    models = [stm_binary_from_doc(p) for p in doc["pairs"]]
    return OvoEnsemble(classes=classes, pairs=pairs, models=models)
