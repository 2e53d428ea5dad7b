"""Simulated federated training of the logistic-regression model.

Clients hold disjoint shards, run local full-batch gradient descent from
the broadcast global parameters, and return parameters only; the server
aggregates with a sample-count-weighted average (FedAvg). Full-batch
local steps keep the whole simulation deterministic and make the
identical-shards aggregation identity exact.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .baselines import LogRegConfig, LogRegModel, logreg_objective
from .util import parallel_map, substream


@dataclass(frozen=True)
class FedConfig:
    n_clients: int = 10
    n_rounds: int = 10
    local_epochs: int = 5
    local_learning_rate: float = 0.1
    partition: str = "iid"  # iid | by_subject | dirichlet
    dirichlet_alpha: float = 0.5
    client_fraction: float = 1.0
    l2: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.n_clients < 1:
            raise ValueError("n_clients must be >= 1")
        if self.n_rounds < 0:
            raise ValueError("n_rounds must be >= 0")
        if not 0 < self.client_fraction <= 1:
            raise ValueError("client_fraction must lie in (0, 1]")
        if self.partition not in ("iid", "by_subject", "dirichlet"):
            raise ValueError(f"unknown partition {self.partition!r}")


@dataclass(frozen=True)
class ClientUpdate:
    """The only message a client sends: parameters and a sample count.

    Holding raw samples here is impossible by construction; the privacy
    test pins this exact field set.
    """

    client_id: int
    n_samples: int
    weights: np.ndarray
    bias: np.ndarray


@dataclass
class FedRoundLog:
    round: int
    clients: list[int]
    n_k: list[int]
    accuracy: float
    weights: np.ndarray = field(repr=False)
    bias: np.ndarray = field(repr=False)


def partition_dataset(y, cfg: FedConfig, subjects=None) -> list[np.ndarray]:
    """Split sample indices into one shard per client.

    iid: seeded shuffle into near-equal shards (sizes differ by at most 1).
    by_subject: whole subjects assigned round-robin after a seeded shuffle.
    dirichlet: per-class client proportions drawn from Dirichlet(alpha).
    """
    y = np.asarray(y)
    n = y.shape[0]
    if n == 0:
        raise ValueError("cannot partition an empty dataset")
    rng = substream(cfg.seed, "fed-partition")
    if cfg.partition == "iid":
        order = rng.permutation(n)
        return [np.sort(shard) for shard in np.array_split(order, cfg.n_clients)]
    if cfg.partition == "by_subject":
        if subjects is None:
            raise ValueError("by_subject partition requires subject ids")
        subjects = np.asarray(subjects)
        unique = np.unique(subjects)
        if unique.size < cfg.n_clients:
            raise ValueError(
                f"{unique.size} subjects cannot cover {cfg.n_clients} clients")
        order = unique.copy()
        rng.shuffle(order)
        shards = [[] for _ in range(cfg.n_clients)]
        for i, subject in enumerate(order):
            shards[i % cfg.n_clients].append(np.flatnonzero(subjects == subject))
        return [np.sort(np.concatenate(parts)) for parts in shards]
    # dirichlet: allocate each class's samples by drawn proportions
    shards = [[] for _ in range(cfg.n_clients)]
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        rng.shuffle(idx)
        proportions = rng.dirichlet(np.full(cfg.n_clients, cfg.dirichlet_alpha))
        cuts = np.floor(np.cumsum(proportions) * idx.size).astype(int)
        start = 0
        for client, stop in enumerate(cuts):
            shards[client].append(idx[start:stop])
            start = stop
        shards[-1].append(idx[start:])
    return [np.sort(np.concatenate(parts)) if parts else np.asarray([], dtype=int)
            for parts in shards]


def gradient_step(weights, bias, x, y_idx, n_classes: int, lr: float, l2: float):
    """One full-batch descent step on mean cross-entropy + (l2/2)||W||^2."""
    params = np.concatenate([weights.ravel(), bias])
    _, grad = logreg_objective(params, x, y_idx, n_classes, l2, scale=1.0 / x.shape[0])
    params = params - lr * grad
    d = weights.shape[1]
    return params[: n_classes * d].reshape(n_classes, d), params[n_classes * d:]


def local_train(global_model: LogRegModel, x_shard, y_shard,
                cfg: FedConfig, client_id: int = 0) -> ClientUpdate | None:
    """Client-side update: local_epochs of full-batch gradient descent.

    Empty shards are skipped with a warning (the client sends nothing).
    """
    x_shard = np.asarray(x_shard, dtype=float)
    y_shard = np.asarray(y_shard)
    if x_shard.shape[0] == 0:
        warnings.warn(f"client {client_id} has no samples; skipping", RuntimeWarning)
        return None
    classes = global_model.classes
    y_idx = np.searchsorted(classes, y_shard)
    w = global_model.weights.copy()
    b = global_model.bias.copy()
    for _ in range(cfg.local_epochs):
        w, b = gradient_step(w, b, x_shard, y_idx, len(classes),
                             cfg.local_learning_rate, cfg.l2)
    return ClientUpdate(client_id=client_id, n_samples=int(x_shard.shape[0]),
                        weights=w, bias=b)


def fed_avg(models, sample_counts=None) -> tuple[np.ndarray, np.ndarray]:
    """Sample-count-weighted average of parameters.

    models: objects with .weights and .bias (ClientUpdate or LogRegModel).
    sample_counts defaults to each update's own n_samples.
    """
    models = list(models)
    if not models:
        raise ValueError("fed_avg needs at least one client update")
    if sample_counts is None:
        sample_counts = [m.n_samples for m in models]
    counts = np.asarray(sample_counts, dtype=float)
    if counts.shape[0] != len(models) or np.any(counts <= 0):
        raise ValueError("sample_counts must give one positive count per model")
    shape_w = models[0].weights.shape
    shape_b = models[0].bias.shape
    for m in models:
        if m.weights.shape != shape_w or m.bias.shape != shape_b:
            raise ValueError(
                f"parameter shape mismatch: {m.weights.shape} vs {shape_w}")
    fractions = counts / counts.sum()
    weights = sum(f * m.weights for f, m in zip(fractions, models))
    bias = sum(f * m.bias for f, m in zip(fractions, models))
    return weights, bias


def _client_task(task, cfg: FedConfig):
    client_id, x_shard, y_shard, weights, bias, classes = task
    model = LogRegModel(weights=weights, bias=bias, classes=classes)
    return local_train(model, x_shard, y_shard, cfg, client_id=client_id)


def run_federation(x, y, x_test, y_test, cfg: FedConfig = FedConfig(),
                   subjects=None, jobs: int = 1) -> list[FedRoundLog]:
    """Full simulation: partition, then n_rounds of select / train / average.

    The log starts with a round-0 entry for the untrained global model and
    gains one entry per communication round. Deterministic under the seed.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    classes = np.unique(y)
    shards = partition_dataset(y, cfg, subjects=subjects)
    k, d = len(classes), x.shape[1]
    global_model = LogRegModel(weights=np.zeros((k, d)), bias=np.zeros(k),
                               classes=classes, config=LogRegConfig())

    def accuracy(model: LogRegModel) -> float:
        return float((model.predict(x_test) == np.asarray(y_test)).mean())

    logs = [FedRoundLog(round=0, clients=[], n_k=[], accuracy=accuracy(global_model),
                        weights=global_model.weights.copy(), bias=global_model.bias.copy())]
    for r in range(1, cfg.n_rounds + 1):
        if cfg.client_fraction < 1.0:
            rng = substream(cfg.seed, f"fed-round-{r}")
            n_pick = max(1, int(round(cfg.client_fraction * cfg.n_clients)))
            participating = np.sort(rng.choice(cfg.n_clients, size=n_pick, replace=False))
        else:
            participating = np.arange(cfg.n_clients)
        tasks = [
            (int(c), x[shards[c]], y[shards[c]], global_model.weights.copy(),
             global_model.bias.copy(), classes)
            for c in participating
        ]
        updates = [u for u in parallel_map(partial(_client_task, cfg=cfg), tasks, jobs=jobs)
                   if u is not None]
        if not updates:
            logs.append(FedRoundLog(round=r, clients=[], n_k=[],
                                    accuracy=logs[-1].accuracy,
                                    weights=global_model.weights.copy(),
                                    bias=global_model.bias.copy()))
            continue
        weights, bias = fed_avg(updates)
        global_model = LogRegModel(weights=weights, bias=bias, classes=classes,
                                   config=LogRegConfig())
        logs.append(FedRoundLog(
            round=r,
            clients=[u.client_id for u in updates],
            n_k=[u.n_samples for u in updates],
            accuracy=accuracy(global_model),
            weights=weights.copy(),
            bias=bias.copy(),
        ))
    return logs


def write_round_log(logs, path):
    """Newline-delimited JSON, one record per round."""
    with open(path, "w", encoding="utf-8") as fh:
        for entry in logs:
            fh.write(json.dumps({
                "round": entry.round,
                "clients": entry.clients,
                "n_k": entry.n_k,
                "accuracy": entry.accuracy,
            }, sort_keys=True))
            fh.write("\n")
