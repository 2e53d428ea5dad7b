import dataclasses
import json

import numpy as np
import pytest

from tensorhar.baselines import LogRegConfig, LogRegModel, logreg_objective, train_logreg
from tensorhar.federated import (ClientUpdate, FedConfig, fed_avg,
                                 gradient_step, local_train, partition_dataset,
                                 run_federation, write_round_log)
from tensorhar.util import substream


def _two_blobs(rng, n_per=50, spread=0.5):
    x = np.concatenate([rng.normal(-1.5, spread, size=(n_per, 2)),
                        rng.normal(1.5, spread, size=(n_per, 2))])
    y = np.repeat([0, 1], n_per)
    return x, y


# --- partitioning ---


def test_iid_partition_covers_and_balances():
    y = np.zeros(23)
    shards = partition_dataset(y, FedConfig(n_clients=5, partition="iid", seed=0))
    assert len(shards) == 5
    sizes = sorted(len(s) for s in shards)
    assert sizes == [4, 4, 5, 5, 5]
    merged = np.sort(np.concatenate(shards))
    np.testing.assert_array_equal(merged, np.arange(23))
    for s in shards:
        np.testing.assert_array_equal(s, np.sort(s))


def test_iid_partition_seed_behavior():
    y = np.zeros(40)
    a = partition_dataset(y, FedConfig(n_clients=4, seed=1))
    b = partition_dataset(y, FedConfig(n_clients=4, seed=1))
    c = partition_dataset(y, FedConfig(n_clients=4, seed=2))
    for sa, sb in zip(a, b):
        np.testing.assert_array_equal(sa, sb)
    assert any(not np.array_equal(sa, sc) for sa, sc in zip(a, c))


def test_by_subject_partition_keeps_subjects_whole():
    subjects = np.repeat(np.arange(12), 6)
    y = np.zeros(72)
    cfg = FedConfig(n_clients=5, partition="by_subject", seed=0)
    shards = partition_dataset(y, cfg, subjects=subjects)
    merged = np.sort(np.concatenate(shards))
    np.testing.assert_array_equal(merged, np.arange(72))
    owner = {}
    for client, shard in enumerate(shards):
        for s in set(subjects[shard]):
            assert s not in owner  # a subject's windows live on one client
            owner[s] = client
            assert (subjects[shard] == s).sum() == 6
    with pytest.raises(ValueError):
        partition_dataset(y, cfg)  # subjects missing
    with pytest.raises(ValueError):
        partition_dataset(y, FedConfig(n_clients=20, partition="by_subject"),
                          subjects=subjects)


def test_dirichlet_partition_covers():
    rng = substream(0, "fed-dirichlet-data")
    y = rng.integers(0, 3, size=90)
    shards = partition_dataset(y, FedConfig(n_clients=4, partition="dirichlet",
                                            dirichlet_alpha=0.3, seed=0))
    merged = np.sort(np.concatenate([s for s in shards if s.size]))
    np.testing.assert_array_equal(merged, np.arange(90))
    again = partition_dataset(y, FedConfig(n_clients=4, partition="dirichlet",
                                           dirichlet_alpha=0.3, seed=0))
    for sa, sb in zip(shards, again):
        np.testing.assert_array_equal(sa, sb)


def test_partition_empty_raises():
    with pytest.raises(ValueError):
        partition_dataset(np.zeros(0), FedConfig())


# --- local updates ---


def test_gradient_step_matches_objective_gradient():
    rng = substream(1, "fed-step")
    x = rng.normal(size=(8, 3))
    y_idx = rng.integers(0, 2, size=8)
    w0 = rng.normal(size=(2, 3))
    b0 = rng.normal(size=2)
    params = np.concatenate([w0.ravel(), b0])
    _, grad = logreg_objective(params, x, y_idx, 2, l2=0.01, scale=1.0 / 8)
    w1, b1 = gradient_step(w0, b0, x, y_idx, 2, lr=0.2, l2=0.01)
    expected = params - 0.2 * grad
    np.testing.assert_allclose(np.concatenate([w1.ravel(), b1]), expected, rtol=1e-12)
    loss0 = logreg_objective(params, x, y_idx, 2, l2=0.01, scale=1.0 / 8)[0]
    loss1 = logreg_objective(np.concatenate([w1.ravel(), b1]), x, y_idx, 2,
                             l2=0.01, scale=1.0 / 8)[0]
    assert loss1 < loss0


def test_local_train_runs_exactly_local_epochs():
    rng = substream(2, "fed-local")
    x, y = _two_blobs(rng, n_per=12)
    global_model = LogRegModel(weights=rng.normal(size=(2, 2)) * 0.1,
                               bias=np.zeros(2), classes=np.unique(y))
    cfg = FedConfig(local_epochs=3, local_learning_rate=0.2, l2=1e-3)
    update = local_train(global_model, x, y, cfg, client_id=7)
    assert update.client_id == 7
    assert update.n_samples == 24

    w, b = global_model.weights.copy(), global_model.bias.copy()
    y_idx = np.searchsorted(global_model.classes, y)
    for _ in range(3):
        w, b = gradient_step(w, b, x, y_idx, 2, cfg.local_learning_rate, cfg.l2)
    np.testing.assert_array_equal(update.weights, w)
    np.testing.assert_array_equal(update.bias, b)


def test_local_train_empty_shard_warns_and_skips():
    model = LogRegModel(weights=np.zeros((2, 3)), bias=np.zeros(2),
                        classes=np.array([0, 1]))
    with pytest.warns(RuntimeWarning):
        out = local_train(model, np.zeros((0, 3)), np.zeros(0), FedConfig(), client_id=4)
    assert out is None


def test_client_update_carries_only_parameters():
    # the update message must never grow a field that could carry raw samples
    names = {f.name for f in dataclasses.fields(ClientUpdate)}
    assert names == {"client_id", "n_samples", "weights", "bias"}
    update = ClientUpdate(client_id=0, n_samples=3, weights=np.zeros((2, 2)),
                          bias=np.zeros(2))
    with pytest.raises(dataclasses.FrozenInstanceError):
        update.n_samples = 5


# --- aggregation ---


def test_fed_avg_weighted_mean():
    a = ClientUpdate(client_id=0, n_samples=1, weights=np.zeros((2, 2)), bias=np.zeros(2))
    b = ClientUpdate(client_id=1, n_samples=3, weights=np.ones((2, 2)), bias=np.ones(2))
    weights, bias = fed_avg([a, b])
    np.testing.assert_allclose(weights, 0.75)
    np.testing.assert_allclose(bias, 0.75)
    weights, bias = fed_avg([a, b], sample_counts=[1, 1])
    np.testing.assert_allclose(weights, 0.5)


def test_fed_avg_validation():
    a = ClientUpdate(client_id=0, n_samples=2, weights=np.zeros((2, 2)), bias=np.zeros(2))
    with pytest.raises(ValueError):
        fed_avg([])
    with pytest.raises(ValueError):
        fed_avg([a], sample_counts=[0])
    with pytest.raises(ValueError):
        fed_avg([a], sample_counts=[1, 2])
    b = ClientUpdate(client_id=1, n_samples=2, weights=np.zeros((3, 2)), bias=np.zeros(3))
    with pytest.raises(ValueError):
        fed_avg([a, b])


def test_identical_shards_single_step_equals_centralized():
    # K clients with the same shard, one full-batch step each: the average
    # of their parameters equals one centralized step on the K-fold union,
    # because mean gradients are invariant under duplication.
    rng = substream(3, "fed-linearity")
    x, y = _two_blobs(rng, n_per=15)
    warm = train_logreg(x, y, LogRegConfig(C=1.0, max_iters=3))
    cfg = FedConfig(n_clients=4, local_epochs=1, local_learning_rate=0.3, l2=1e-3)
    updates = [local_train(warm, x, y, cfg, client_id=i) for i in range(4)]
    w_fed, b_fed = fed_avg(updates)

    x_union = np.concatenate([x] * 4)
    y_union = np.concatenate([y] * 4)
    y_idx = np.searchsorted(warm.classes, y_union)
    w_cent, b_cent = gradient_step(warm.weights.copy(), warm.bias.copy(),
                                   x_union, y_idx, 2,
                                   cfg.local_learning_rate, cfg.l2)
    np.testing.assert_allclose(w_fed, w_cent, rtol=0, atol=1e-10)
    np.testing.assert_allclose(b_fed, b_cent, rtol=0, atol=1e-10)


# --- full simulation ---


def test_run_federation_log_structure_and_learning():
    rng = substream(4, "fed-sim")
    x, y = _two_blobs(rng)
    x_test, y_test = _two_blobs(rng, n_per=25)
    cfg = FedConfig(n_clients=5, n_rounds=10, local_epochs=5,
                    local_learning_rate=0.5, seed=0)
    logs = run_federation(x, y, x_test, y_test, cfg)
    assert [entry.round for entry in logs] == list(range(11))
    assert logs[0].clients == [] and logs[0].n_k == []
    for entry in logs[1:]:
        assert entry.clients == list(range(5))
        assert sum(entry.n_k) == 100
    assert logs[-1].accuracy >= 0.9
    assert all(0.0 <= entry.accuracy <= 1.0 for entry in logs)


def test_run_federation_deterministic_and_jobs_parity():
    rng = substream(5, "fed-par")
    x, y = _two_blobs(rng, n_per=20)
    cfg = FedConfig(n_clients=4, n_rounds=3, local_epochs=2, seed=1)
    a = run_federation(x, y, x, y, cfg, jobs=1)
    b = run_federation(x, y, x, y, cfg, jobs=2)
    np.testing.assert_array_equal(a[-1].weights, b[-1].weights)
    np.testing.assert_array_equal(a[-1].bias, b[-1].bias)
    assert [e.accuracy for e in a] == [e.accuracy for e in b]


def test_client_sampling_fraction():
    rng = substream(6, "fed-frac")
    x, y = _two_blobs(rng, n_per=30)
    cfg = FedConfig(n_clients=10, n_rounds=6, local_epochs=1,
                    client_fraction=0.5, seed=0)
    logs = run_federation(x, y, x, y, cfg)
    for entry in logs[1:]:
        assert len(entry.clients) == 5
        assert entry.clients == sorted(entry.clients)
        assert all(0 <= c < 10 for c in entry.clients)
    picks = {tuple(e.clients) for e in logs[1:]}
    assert len(picks) > 1  # selection varies across rounds

    tiny = FedConfig(n_clients=10, n_rounds=1, local_epochs=1,
                     client_fraction=0.05, seed=0)
    logs = run_federation(x, y, x, y, tiny)
    assert len(logs[1].clients) == 1  # fraction rounds down but floors at one


def test_round_log_is_parameter_free_ndjson(tmp_path):
    rng = substream(7, "fed-log")
    x, y = _two_blobs(rng, n_per=10)
    logs = run_federation(x, y, x, y, FedConfig(n_clients=2, n_rounds=2, local_epochs=1))
    path = tmp_path / "rounds.ndjson"
    write_round_log(logs, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 3
    for line in lines:
        record = json.loads(line)
        assert set(record) == {"round", "clients", "n_k", "accuracy"}
    assert "weights" not in path.read_text()


def test_fed_config_validation():
    with pytest.raises(ValueError):
        FedConfig(n_clients=0)
    with pytest.raises(ValueError):
        FedConfig(n_rounds=-1)
    with pytest.raises(ValueError):
        FedConfig(client_fraction=0.0)
    with pytest.raises(ValueError):
        FedConfig(client_fraction=1.5)
    with pytest.raises(ValueError):
        FedConfig(partition="ring")
