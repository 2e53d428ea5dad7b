import numpy as np
import pytest

from tensorhar.baselines import (ForestConfig, KnnConfig, KnnModel,
                                 LogRegConfig, finite_difference_gradient,
                                 forest_oob_predictions, logreg_objective,
                                 predict_forest, predict_knn, softmax,
                                 train_forest, train_knn, train_logreg,
                                 unpack_params)
from tensorhar.tensor import tensor_distance
from tensorhar.util import substream


def _blobs(rng, centers, n_per, spread=0.4):
    xs, ys = [], []
    for label, center in enumerate(centers):
        xs.append(rng.normal(0.0, spread, size=(n_per, len(center))) + np.asarray(center))
        ys.append(np.full(n_per, label))
    return np.concatenate(xs), np.concatenate(ys)


# --- logistic regression ---


def test_softmax_rows_and_shift_invariance():
    rng = substream(0, "lr-softmax")
    z = rng.normal(size=(6, 4)) * 3.0
    p = softmax(z)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, rtol=1e-12)
    assert (p > 0).all()
    np.testing.assert_allclose(softmax(z + 100.0), p, rtol=1e-12)


def test_unpack_params_layout():
    params = np.arange(10, dtype=float)  # 2 classes x 4 features + 2 biases
    w, b = unpack_params(params, 2, 4)
    np.testing.assert_array_equal(w, [[0, 1, 2, 3], [4, 5, 6, 7]])
    np.testing.assert_array_equal(b, [8, 9])


def test_objective_gradient_matches_finite_differences():
    rng = substream(0, "lr-grad")
    n, d, k = 12, 3, 4
    x = rng.normal(size=(n, d))
    y_idx = rng.integers(0, k, size=n)
    for _ in range(5):
        params = rng.normal(size=k * d + k)
        _, grad = logreg_objective(params, x, y_idx, k, l2=0.5)
        fd = finite_difference_gradient(
            params, lambda p: logreg_objective(p, x, y_idx, k, l2=0.5)[0])
        err = np.linalg.norm(grad - fd) / max(np.linalg.norm(grad), 1.0)
        assert err <= 1e-5


def test_objective_scale_is_linear_in_cross_entropy():
    rng = substream(1, "lr-scale")
    n, d, k = 10, 3, 3
    x = rng.normal(size=(n, d))
    y_idx = rng.integers(0, k, size=n)
    params = rng.normal(size=k * d + k)
    loss1, grad1 = logreg_objective(params, x, y_idx, k, l2=0.0, scale=1.0)
    loss_n, grad_n = logreg_objective(params, x, y_idx, k, l2=0.0, scale=1.0 / n)
    assert loss_n == pytest.approx(loss1 / n, rel=1e-12)
    np.testing.assert_allclose(grad_n, grad1 / n, rtol=1e-12)


def test_train_logreg_fits_separable_blobs():
    rng = substream(2, "lr-blobs")
    x, y = _blobs(rng, [(-3, 0), (3, 0), (0, 3)], 20)
    y = y + 3  # labels 3, 4, 5: class values must round-trip
    model = train_logreg(x, y, LogRegConfig(C=10.0))
    assert (model.predict(x) == y).all()
    np.testing.assert_array_equal(model.classes, [3, 4, 5])
    scores = model.predict_scores(x)
    np.testing.assert_allclose(scores.sum(axis=1), 1.0, rtol=1e-9)
    np.testing.assert_array_equal(model.classes[scores.argmax(axis=1)], model.predict(x))
    assert model.diagnostics["converged"]
    trace = model.diagnostics["loss_trace"]
    assert trace[-1] < trace[0]


def test_stronger_regularization_shrinks_weights():
    rng = substream(3, "lr-shrink")
    x, y = _blobs(rng, [(-1, 0), (1, 0)], 25)
    loose = train_logreg(x, y, LogRegConfig(C=100.0))
    tight = train_logreg(x, y, LogRegConfig(C=0.01))
    assert np.linalg.norm(tight.weights) < np.linalg.norm(loose.weights)


def test_logreg_validation():
    x = np.zeros((4, 2))
    with pytest.raises(ValueError):
        train_logreg(x, np.zeros(4))  # single class
    bad = x.copy()
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        train_logreg(bad, np.array([0, 0, 1, 1]))
    with pytest.raises(ValueError):
        LogRegConfig(C=0.0)
    model = train_logreg(np.array([[0.0], [1.0]]), np.array([0, 1]))
    with pytest.raises(ValueError):
        model.decision_function(np.zeros((2, 3)))


# --- k-nearest neighbors ---


def test_knn_one_neighbor_memorizes():
    rng = substream(0, "knn-memo")
    x, y = _blobs(rng, [(-2, 0), (2, 0), (0, 2)], 10)
    model = train_knn(x, y, KnnConfig(k=1))
    np.testing.assert_array_equal(model.predict(x), y)


def test_knn_majority_vote():
    x = np.array([[0.1], [0.2], [5.0]])
    y = np.array([0, 0, 1])
    model = train_knn(x, y, KnnConfig(k=3))
    assert model.predict(np.array([[0.0]]))[0] == 0
    scores = model.predict_scores(np.array([[0.0]]))
    np.testing.assert_allclose(scores[0], [2.0 / 3.0, 1.0 / 3.0])


def test_knn_tie_breaks():
    # equal vote counts: the class with smaller mean neighbor distance wins
    model = train_knn(np.array([[1.0], [-2.0]]), np.array([0, 1]), KnnConfig(k=2))
    assert model.predict(np.array([[0.0]]))[0] == 0
    model = train_knn(np.array([[2.0], [-1.0]]), np.array([0, 1]), KnnConfig(k=2))
    assert model.predict(np.array([[0.0]]))[0] == 1
    # equal counts and equal mean distances: lowest class index wins
    model = train_knn(np.array([[1.0], [-1.0]]), np.array([1, 0]), KnnConfig(k=2))
    assert model.predict(np.array([[0.0]]))[0] == 0


def test_knn_tensor_metric_matches_direct_distance():
    rng = substream(1, "knn-tensor")
    train = rng.normal(size=(6, 2, 3))
    queries = rng.normal(size=(4, 2, 3))
    y = np.array([0, 1, 0, 1, 0, 1])
    model = train_knn(train, y, KnnConfig(k=3, metric="tensor", sigma2=0.7))
    assert model.metric_values is not None  # size 6 grid materializes
    fast = model._distances(queries.reshape(4, -1))
    direct = np.array([[tensor_distance(q, t, sigma2=0.7) for t in train] for q in queries])
    np.testing.assert_allclose(fast, direct, rtol=1e-9, atol=1e-12)

    slow_model = KnnModel(samples=train, labels=y, classes=np.unique(y),
                          config=model.config, metric_values=None)
    np.testing.assert_allclose(slow_model._distances(queries.reshape(4, -1)),
                               direct, rtol=1e-9, atol=1e-12)
    np.testing.assert_array_equal(model.predict(queries), slow_model.predict(queries))


def test_knn_single_query_and_validation():
    x = np.array([[0.0, 0.0], [1.0, 1.0]])
    y = np.array([0, 1])
    model = train_knn(x, y, KnnConfig(k=1))
    assert predict_knn(model, np.array([0.1, 0.1])) == 0
    with pytest.raises(ValueError):
        train_knn(x, y, KnnConfig(k=3))  # k exceeds sample count
    with pytest.raises(ValueError):
        model.predict(np.zeros((2, 3)))  # feature mismatch
    with pytest.raises(ValueError):
        KnnConfig(k=0)
    with pytest.raises(ValueError):
        KnnConfig(metric="cosine")


# --- random forest ---


def test_forest_fits_blobs_and_scores():
    rng = substream(0, "rf-blobs")
    x, y = _blobs(rng, [(-3, 0, 0), (3, 0, 0), (0, 3, 0)], 20)
    y = y * 2 + 1  # labels 1, 3, 5
    model = train_forest(x, y, ForestConfig(n_estimators=15, seed=0))
    assert (model.predict(x) == y).mean() >= 0.95
    np.testing.assert_array_equal(model.classes, [1, 3, 5])
    scores = model.predict_scores(x)
    np.testing.assert_allclose(scores.sum(axis=1), 1.0, rtol=1e-12)
    assert predict_forest(model, x[0]) == model.predict(x[:1])[0]


def test_forest_same_seed_is_deterministic():
    rng = substream(1, "rf-seed")
    x, y = _blobs(rng, [(-2, 0), (2, 0)], 25)
    grid = rng.normal(size=(40, 2)) * 3.0
    cfg = ForestConfig(n_estimators=10, seed=7)
    a = train_forest(x, y, cfg)
    b = train_forest(x, y, cfg)
    for sa, sb in zip(a.bootstrap_indices, b.bootstrap_indices):
        np.testing.assert_array_equal(sa, sb)
    np.testing.assert_array_equal(a.predict(grid), b.predict(grid))
    c = train_forest(x, y, ForestConfig(n_estimators=10, seed=8))
    assert any(not np.array_equal(sa, sc)
               for sa, sc in zip(a.bootstrap_indices, c.bootstrap_indices))


def test_forest_jobs_parity():
    rng = substream(2, "rf-jobs")
    x, y = _blobs(rng, [(-2, 0), (2, 0)], 20)
    cfg = ForestConfig(n_estimators=6, seed=3)
    serial = train_forest(x, y, cfg, jobs=1)
    parallel = train_forest(x, y, cfg, jobs=2)
    for sa, sb in zip(serial.bootstrap_indices, parallel.bootstrap_indices):
        np.testing.assert_array_equal(sa, sb)
    grid = rng.normal(size=(30, 2)) * 3.0
    np.testing.assert_array_equal(serial.predict(grid), parallel.predict(grid))


def test_forest_oob_predictions():
    rng = substream(3, "rf-oob")
    x, y = _blobs(rng, [(-3, 0), (3, 0)], 30)
    model = train_forest(x, y, ForestConfig(n_estimators=30, seed=0))
    oob = forest_oob_predictions(model, x)
    covered = oob != -1
    assert covered.mean() > 0.95  # 30 bootstraps leave almost nobody unseen
    assert (oob[covered] == y[covered]).mean() >= 0.9
    assert set(np.unique(oob)).issubset({-1, 0, 1})


def test_forest_without_bootstrap_has_no_oob():
    rng = substream(4, "rf-noboot")
    x, y = _blobs(rng, [(-2, 0), (2, 0)], 10)
    model = train_forest(x, y, ForestConfig(n_estimators=4, bootstrap=False, seed=0))
    for sample in model.bootstrap_indices:
        np.testing.assert_array_equal(sample, np.arange(20))
    np.testing.assert_array_equal(forest_oob_predictions(model, x), np.full(20, -1))


def test_forest_validation():
    with pytest.raises(ValueError):
        train_forest(np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(ValueError):
        train_forest(np.zeros(5), np.zeros(5))
    bad = np.zeros((4, 2))
    bad[1, 1] = np.inf
    with pytest.raises(ValueError):
        train_forest(bad, np.array([0, 0, 1, 1]))
    with pytest.raises(ValueError):
        ForestConfig(n_estimators=0)
    with pytest.raises(ValueError):
        ForestConfig(min_samples_leaf=0)
    with pytest.raises(ValueError):
        ForestConfig(min_samples_split=1)
    model = train_forest(np.array([[0.0], [1.0]]), np.array([0, 1]),
                         ForestConfig(n_estimators=2, seed=0))
    with pytest.raises(ValueError):
        model.predict(np.zeros((2, 3)))
