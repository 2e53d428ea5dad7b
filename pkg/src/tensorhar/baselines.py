"""Vector-space baselines: multinomial logistic regression, k-nearest
neighbors (Euclidean or tensor metric), and a random forest.

All trained models expose predict and predict_scores so the evaluation
harness can treat every family uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy.optimize import minimize

from .tensor import MATERIALIZE_CAP, metric_coefficients, tensor_distance
from .util import parallel_map, substream

# --- multinomial logistic regression ---


@dataclass(frozen=True)
class LogRegConfig:
    C: float = 1.0  # inverse L2 strength; weights only, bias unpenalized
    max_iters: int = 500
    grad_tol: float = 1e-6

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError(f"C must be positive, got {self.C}")


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    return p


def unpack_params(params: np.ndarray, n_classes: int, n_features: int):
    w = params[: n_classes * n_features].reshape(n_classes, n_features)
    b = params[n_classes * n_features:]
    return w, b


def logreg_objective(params: np.ndarray, x: np.ndarray, y: np.ndarray,
                     n_classes: int, l2: float, scale: float = 1.0):
    """Cross-entropy (scaled) plus (l2/2)||W||^2; returns (loss, gradient).

    scale=1 gives the summed objective used centrally; scale=1/n gives the
    per-sample mean the federated trainer needs so that gradients over
    identical shards add up exactly like one centralized batch.
    """
    w, b = unpack_params(params, n_classes, x.shape[1])
    p = softmax(x @ w.T + b)
    n = x.shape[0]
    rows = np.arange(n)
    ce = -np.log(np.clip(p[rows, y], 1e-300, None)).sum() * scale
    loss = ce + 0.5 * l2 * float((w * w).sum())
    resid = p * scale
    resid[rows, y] -= scale
    grad_w = resid.T @ x + l2 * w
    grad_b = resid.sum(axis=0)
    return loss, np.concatenate([grad_w.ravel(), grad_b])


@dataclass
class LogRegModel:
    weights: np.ndarray  # (n_classes, n_features)
    bias: np.ndarray  # (n_classes,)
    classes: np.ndarray
    config: LogRegConfig = LogRegConfig()
    diagnostics: dict = field(default_factory=dict, repr=False, compare=False)

    def _check(self, x: np.ndarray):
        if x.shape[1] != self.weights.shape[1]:
            raise ValueError(
                f"feature length {x.shape[1]} does not match "
                f"training dimension {self.weights.shape[1]}")

    def decision_function(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        self._check(x)
        return x @ self.weights.T + self.bias

    def predict_scores(self, x) -> np.ndarray:
        return softmax(self.decision_function(x))

    def predict(self, x) -> np.ndarray:
        return self.classes[self.decision_function(x).argmax(axis=1)]


def train_logreg(x, y, cfg: LogRegConfig = LogRegConfig()) -> LogRegModel:
    """L-BFGS on the summed cross-entropy with L2-regularized weights."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    if not np.isfinite(x).all():
        raise ValueError("features contain NaN or infinite values")
    classes = np.unique(y)
    if len(classes) < 2:
        raise ValueError("need at least two classes")
    y_idx = np.searchsorted(classes, y)
    k, d = len(classes), x.shape[1]
    x0 = np.zeros(k * d + k)
    trace = []

    def record(params):
        loss, _ = logreg_objective(params, x, y_idx, k, 1.0 / cfg.C)
        trace.append(loss)

    record(x0)
    result = minimize(
        logreg_objective, x0, args=(x, y_idx, k, 1.0 / cfg.C), jac=True,
        method="L-BFGS-B", callback=record,
        options={"maxiter": cfg.max_iters, "gtol": cfg.grad_tol, "ftol": 1e-12},
    )
    w, b = unpack_params(result.x, k, d)
    return LogRegModel(weights=w, bias=b, classes=classes, config=cfg,
                       diagnostics={"loss_trace": np.asarray(trace),
                                    "n_iter": int(result.nit),
                                    "converged": bool(result.success)})


def finite_difference_gradient(params: np.ndarray, fn, step: float = 1e-6) -> np.ndarray:
    """Central differences of a scalar function; the oracle for gradient tests."""
    grad = np.empty_like(params)
    for i in range(params.size):
        bumped = params.copy()
        bumped[i] += step
        hi = fn(bumped)
        bumped[i] -= 2 * step
        lo = fn(bumped)
        grad[i] = (hi - lo) / (2 * step)
    return grad


# --- k-nearest neighbors ---


@dataclass(frozen=True)
class KnnConfig:
    k: int = 5
    metric: str = "euclidean"  # euclidean | tensor
    sigma2: float = 1.0  # tensor-metric width

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.metric not in ("euclidean", "tensor"):
            raise ValueError(f"unknown metric {self.metric!r}")


@dataclass
class KnnModel:
    samples: np.ndarray  # (n, ...) vectors or tensors
    labels: np.ndarray
    classes: np.ndarray
    config: KnnConfig
    metric_values: np.ndarray | None = None  # materialized coefficient matrix

    def _distances(self, queries: np.ndarray) -> np.ndarray:
        flat_train = self.samples.reshape(self.samples.shape[0], -1)
        flat_q = queries.reshape(queries.shape[0], -1)
        if flat_q.shape[1] != flat_train.shape[1]:
            raise ValueError(
                f"query size {flat_q.shape[1]} does not match "
                f"training size {flat_train.shape[1]}")
        if self.config.metric == "euclidean":
            sq = ((flat_q * flat_q).sum(axis=1)[:, None]
                  + (flat_train * flat_train).sum(axis=1)[None, :]
                  - 2.0 * (flat_q @ flat_train.T))
            return np.sqrt(np.maximum(sq, 0.0))
        if self.metric_values is not None:
            g = self.metric_values
            train_g = flat_train @ g
            train_quad = (train_g * flat_train).sum(axis=1)
            q_g = flat_q @ g
            q_quad = (q_g * flat_q).sum(axis=1)
            sq = q_quad[:, None] + train_quad[None, :] - 2.0 * (q_g @ flat_train.T)
            return np.sqrt(np.maximum(sq, 0.0))
        shape = self.samples.shape[1:]
        out = np.empty((queries.shape[0], self.samples.shape[0]))
        for qi in range(queries.shape[0]):
            for ti in range(self.samples.shape[0]):
                out[qi, ti] = tensor_distance(queries[qi].reshape(shape),
                                              self.samples[ti],
                                              sigma2=self.config.sigma2)
        return out

    def _as_queries(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=float)
        sample_shape = self.samples.shape[1:]
        if x.shape == sample_shape:
            return x[None, ...], True
        if x.shape[1:] == sample_shape:
            return x, False
        raise ValueError(f"query shape {x.shape} does not match samples of shape {sample_shape}")

    def predict_scores(self, x) -> np.ndarray:
        xb, _ = self._as_queries(x)
        dists = self._distances(xb)
        order = np.argsort(dists, axis=1, kind="stable")[:, : self.config.k]
        k_labels = self.labels[order]
        scores = np.zeros((xb.shape[0], len(self.classes)))
        for ci, c in enumerate(self.classes):
            scores[:, ci] = (k_labels == c).mean(axis=1)
        return scores

    def predict(self, x) -> np.ndarray:
        xb, _ = self._as_queries(x)
        dists = self._distances(xb)
        order = np.argsort(dists, axis=1, kind="stable")[:, : self.config.k]
        out = np.empty(xb.shape[0], dtype=self.classes.dtype)
        for qi in range(xb.shape[0]):
            neigh_labels = self.labels[order[qi]]
            neigh_dists = dists[qi, order[qi]]
            counts = {c: int((neigh_labels == c).sum()) for c in self.classes}
            top = max(counts.values())
            tied = [c for c in self.classes if counts[c] == top]
            if len(tied) > 1:
                # ties break by smallest mean neighbor distance, then lowest class
                means = {c: neigh_dists[neigh_labels == c].mean() for c in tied}
                best = min(means.values())
                tied = [c for c in tied if means[c] == best]
            out[qi] = tied[0]
        return out


def train_knn(x, y, cfg: KnnConfig = KnnConfig()) -> KnnModel:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    if cfg.k > x.shape[0]:
        raise ValueError(f"k={cfg.k} exceeds the {x.shape[0]} stored samples")
    metric_values = None
    if cfg.metric == "tensor" and x.ndim > 1:
        shape = x.shape[1:]
        if int(np.prod(shape)) <= MATERIALIZE_CAP:
            metric_values = metric_coefficients(shape, sigma2=cfg.sigma2).values
    return KnnModel(samples=x, labels=y, classes=np.unique(y), config=cfg,
                    metric_values=metric_values)


def predict_knn(model: KnnModel, x):
    """Majority label among the k nearest training samples."""
    labels = model.predict(x)
    return labels[0] if np.asarray(x).shape == model.samples.shape[1:] else labels


# --- random forest ---


@dataclass(frozen=True)
class ForestConfig:
    n_estimators: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 4
    min_samples_split: int = 2
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if self.min_samples_leaf < 1 or self.min_samples_split < 2:
            raise ValueError("leaf/split minimums out of range")


def _best_split(x: np.ndarray, y_idx: np.ndarray, features: np.ndarray,
                n_classes: int, min_leaf: int):
    """Exhaustive threshold scan over the given features.

    Returns (feature, threshold, gini) of the lowest weighted Gini split,
    or None when no split satisfies the leaf minimum.
    """
    n = y_idx.size
    best = None
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y_idx] = 1.0
    for f in features:
        order = np.argsort(x[:, f], kind="stable")
        values = x[order, f]
        left_counts = onehot[order].cumsum(axis=0)
        total = left_counts[-1]
        sizes_l = np.arange(1, n + 1, dtype=float)
        sizes_r = n - sizes_l
        with np.errstate(divide="ignore", invalid="ignore"):
            gini_l = 1.0 - ((left_counts / sizes_l[:, None]) ** 2).sum(axis=1)
            right_counts = total[None, :] - left_counts
            gini_r = 1.0 - ((right_counts / np.where(sizes_r > 0, sizes_r, 1.0)[:, None]) ** 2).sum(axis=1)
        weighted = (sizes_l * gini_l + sizes_r * gini_r) / n
        split_pos = np.arange(1, n)  # left gets order[:pos]
        valid = (values[1:] > values[:-1]) & (split_pos >= min_leaf) & (n - split_pos >= min_leaf)
        if not valid.any():
            continue
        cand = np.flatnonzero(valid)
        scores = weighted[cand]  # weighted[pos-1] indexes the left block of size pos
        at = cand[int(np.argmin(scores))]
        score = float(scores.min())
        if best is None or score < best[2]:
            threshold = 0.5 * (values[at] + values[at + 1])
            best = (int(f), float(threshold), score)
    return best


def _grow_tree(x, y_idx, n_classes, cfg: ForestConfig, rng, depth: int) -> dict:
    counts = np.bincount(y_idx, minlength=n_classes)
    if (
        y_idx.size < cfg.min_samples_split
        or (cfg.max_depth is not None and depth >= cfg.max_depth)
        or counts.max() == y_idx.size
    ):
        return {"counts": counts}
    d = x.shape[1]
    m = max(1, int(np.sqrt(d)))
    features = np.sort(rng.choice(d, size=m, replace=False))
    split = _best_split(x, y_idx, features, n_classes, cfg.min_samples_leaf)
    if split is None:
        return {"counts": counts}
    f, threshold, _ = split
    left_mask = x[:, f] <= threshold
    return {
        "feature": f,
        "threshold": threshold,
        "left": _grow_tree(x[left_mask], y_idx[left_mask], n_classes, cfg, rng, depth + 1),
        "right": _grow_tree(x[~left_mask], y_idx[~left_mask], n_classes, cfg, rng, depth + 1),
    }


def _tree_apply(node: dict, x: np.ndarray, n_classes: int) -> np.ndarray:
    """Per-sample class counts at the reached leaf, shape (n, n_classes)."""
    if "counts" in node:
        return np.tile(node["counts"], (x.shape[0], 1)).astype(float)
    out = np.empty((x.shape[0], n_classes))
    mask = x[:, node["feature"]] <= node["threshold"]
    if mask.any():
        out[mask] = _tree_apply(node["left"], x[mask], n_classes)
    if (~mask).any():
        out[~mask] = _tree_apply(node["right"], x[~mask], n_classes)
    return out


def _fit_tree(index: int, x, y_idx, n_classes, cfg: ForestConfig):
    rng = substream(cfg.seed, f"forest-tree-{index}")
    n = x.shape[0]
    if cfg.bootstrap:
        sample = rng.integers(0, n, size=n)
    else:
        sample = np.arange(n)
    root = _grow_tree(x[sample], y_idx[sample], n_classes, cfg, rng, depth=0)
    return root, sample


@dataclass
class ForestModel:
    trees: list
    bootstrap_indices: list
    classes: np.ndarray
    n_features: int
    config: ForestConfig
    diagnostics: dict = field(default_factory=dict, repr=False, compare=False)

    def _check(self, x: np.ndarray):
        if x.shape[1] != self.n_features:
            raise ValueError(
                f"feature length {x.shape[1]} does not match training dimension {self.n_features}")

    def _votes(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        self._check(x)
        votes = np.zeros((x.shape[0], len(self.classes)))
        for tree in self.trees:
            counts = _tree_apply(tree, x, len(self.classes))
            votes[np.arange(x.shape[0]), counts.argmax(axis=1)] += 1.0
        return votes

    def predict_scores(self, x) -> np.ndarray:
        votes = self._votes(x)
        return votes / votes.sum(axis=1, keepdims=True)

    def predict(self, x) -> np.ndarray:
        return self.classes[self._votes(x).argmax(axis=1)]


def train_forest(x, y, cfg: ForestConfig = ForestConfig(), jobs: int = 1) -> ForestModel:
    """Bagged Gini trees with sqrt(d) feature subsampling at every node.

    Each tree draws its bootstrap sample and split features from its own
    named substream, so serial and parallel training are bit-identical.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError(f"expected a nonempty (n, d) matrix, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError("features contain NaN or infinite values")
    classes = np.unique(y)
    y_idx = np.searchsorted(classes, y)
    fit = partial(_fit_tree, x=x, y_idx=y_idx, n_classes=len(classes), cfg=cfg)
    results = parallel_map(fit, list(range(cfg.n_estimators)), jobs=jobs)
    trees = [r[0] for r in results]
    samples = [r[1] for r in results]
    return ForestModel(trees=trees, bootstrap_indices=samples, classes=classes,
                       n_features=x.shape[1], config=cfg)


def predict_forest(model: ForestModel, x):
    """Majority vote over trees; ties resolve to the lowest class index."""
    labels = model.predict(np.atleast_2d(np.asarray(x, dtype=float)))
    return labels[0] if np.asarray(x).ndim == 1 else labels


def forest_oob_predictions(model: ForestModel, x) -> np.ndarray:
    """Out-of-bag vote for each training sample; -1 where no tree left it out."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    votes = np.zeros((n, len(model.classes)))
    for tree, sample in zip(model.trees, model.bootstrap_indices):
        oob = np.setdiff1d(np.arange(n), sample, assume_unique=False)
        if oob.size == 0:
            continue
        counts = _tree_apply(tree, x[oob], len(model.classes))
        votes[oob, counts.argmax(axis=1)] += 1.0
    out = np.full(n, -1, dtype=int)
    seen = votes.sum(axis=1) > 0
    out[seen] = votes[seen].argmax(axis=1)
    labels = np.full(n, -1, dtype=model.classes.dtype if model.classes.dtype.kind == "i" else int)
    labels[seen] = model.classes[out[seen]]
    return labels
