import json

import numpy as np
import pytest

from tensorhar.svm import (OvoEnsemble, SvmConfig, binary_svm_from_doc,
                           binary_svm_to_doc, kkt_violations, predict_ovo,
                           primal_objective, resolve_gamma, svm_ovo_from_doc,
                           svm_ovo_to_doc, train_binary_svm, train_ovo,
                           train_pairwise)
from tensorhar.util import substream

# Non-separable 1-D fixture. The optimum of 0.5 w^2 + sum_i hinge_i at C=1
# was located by a dense scan over (w, b) in [-5, 5]^2: w=1, b=0, objective 3.5.
SIX_POINT_X = np.array([[-2.0], [-1.0], [0.5], [-0.5], [1.0], [2.0]])
SIX_POINT_Y = np.array([-1.0, -1.0, -1.0, 1.0, 1.0, 1.0])
SIX_POINT_OBJECTIVE = 3.5


def _blobs(rng, centers, n_per, spread=0.4):
    xs, ys = [], []
    for label, center in enumerate(centers):
        xs.append(rng.normal(0.0, spread, size=(n_per, len(center))) + np.asarray(center))
        ys.append(np.full(n_per, label))
    return np.concatenate(xs), np.concatenate(ys)


# --- binary solver ---


def test_six_point_fixture_objective():
    model = train_binary_svm(SIX_POINT_X, SIX_POINT_Y, SvmConfig(C=1.0))
    primal = primal_objective(model, SIX_POINT_X, SIX_POINT_Y)
    dual = model.diagnostics["dual_objective"]
    assert primal == pytest.approx(SIX_POINT_OBJECTIVE, rel=1e-2)
    assert dual <= primal + 1e-9  # weak duality
    assert primal - dual <= 1e-2


def test_six_point_solution_geometry():
    model = train_binary_svm(SIX_POINT_X, SIX_POINT_Y, SvmConfig(C=1.0))
    assert model.w[0] == pytest.approx(1.0, abs=0.05)
    assert model.bias == pytest.approx(0.0, abs=0.1)
    worst = kkt_violations(model, SIX_POINT_X, SIX_POINT_Y)
    assert max(worst.values()) <= 1e-3


def _qp_reference(x, y, C):
    import cvxpy as cp

    w = cp.Variable(x.shape[1])
    b = cp.Variable()
    hinge = cp.pos(1.0 - cp.multiply(y, x @ w + b))
    problem = cp.Problem(cp.Minimize(0.5 * cp.sum_squares(w) + C * cp.sum(hinge)))
    problem.solve()
    assert problem.status == "optimal"
    return float(problem.value)


def _random_instance(rng, n_max=8, d=2):
    while True:
        n = int(rng.integers(4, n_max + 1))
        x = rng.normal(size=(n, d)) * float(rng.uniform(0.5, 2.0))
        y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        if (y > 0).any() and (y < 0).any():
            return x, y


def test_primal_matches_qp_reference_on_tiny_instances():
    rng = substream(0, "svm-oracle-spot")
    for _ in range(10):
        x, y = _random_instance(rng)
        C = float(rng.choice([0.1, 1.0, 10.0]))
        model = train_binary_svm(x, y, SvmConfig(C=C))
        ours = primal_objective(model, x, y)
        ref = _qp_reference(x, y, C)
        assert ours == pytest.approx(ref, rel=1e-2, abs=1e-6)
        assert max(kkt_violations(model, x, y).values()) <= 1e-3


def test_bound_snapping_is_exact():
    rng = substream(0, "svm-overlap")
    x = np.concatenate([rng.normal(-0.3, 1.0, size=(30, 2)),
                        rng.normal(0.3, 1.0, size=(30, 2))])
    y = np.concatenate([-np.ones(30), np.ones(30)])
    C = 0.5
    model = train_binary_svm(x, y, SvmConfig(C=C))
    alpha = model.diagnostics["alphas_full"]
    assert np.all((alpha >= 0.0) & (alpha <= C))
    # heavy class overlap forces bounded support vectors, at the bound exactly
    assert (alpha == C).sum() > 0


def test_separable_data_reaches_unit_margins():
    rng = substream(0, "svm-separable")
    x = np.concatenate([rng.normal(-3.0, 0.3, size=(20, 2)),
                        rng.normal(3.0, 0.3, size=(20, 2))])
    y = np.concatenate([-np.ones(20), np.ones(20)])
    model = train_binary_svm(x, y, SvmConfig(C=10.0))
    assert (model.predict(x) == y).all()
    assert (y * model.decision_function(x)).min() >= 1.0 - 1e-3


def test_rbf_solves_xor():
    rng = substream(0, "svm-xor")
    corners = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]] * 4)
    x = corners + rng.normal(0.0, 0.05, corners.shape)
    y = np.array([1.0, 1.0, -1.0, -1.0] * 4)
    rbf = train_binary_svm(x, y, SvmConfig(C=10.0, kernel="rbf", gamma=2.0))
    assert (rbf.predict(x) == y).all()
    linear = train_binary_svm(x, y, SvmConfig(C=10.0))
    assert (linear.predict(x) == y).mean() < 1.0


def test_resolve_gamma():
    x = np.array([[0.0, 2.0], [2.0, 0.0]])
    assert resolve_gamma("scale", x) == pytest.approx(1.0 / (2 * x.var()))
    assert resolve_gamma(0.3, x) == 0.3
    assert resolve_gamma("scale", np.zeros((3, 2))) == 1.0


def test_kernel_decision_matches_stored_weights():
    rng = substream(0, "svm-kernel-path")
    x = rng.normal(size=(24, 3))
    y = np.where(x @ np.array([1.0, -1.0, 0.5]) > 0, 1.0, -1.0)
    model = train_binary_svm(x, y, SvmConfig(C=1.0))
    np.testing.assert_allclose(model.kernel_decision_function(x),
                               model.decision_function(x), atol=1e-10)


def test_training_input_validation():
    x = np.zeros((4, 2))
    y = np.array([1.0, -1.0, 1.0, -1.0])
    with pytest.raises(ValueError):
        train_binary_svm(x, np.ones(4))  # single class
    with pytest.raises(ValueError):
        train_binary_svm(x, np.array([1.0, -1.0, 1.0, 2.0]))  # bad label value
    bad = x.copy()
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        train_binary_svm(bad, y)
    with pytest.raises(ValueError):
        train_binary_svm(x, np.ones(3))  # length mismatch
    with pytest.raises(ValueError):
        train_binary_svm(x.ravel(), y)  # not a matrix
    with pytest.raises(ValueError):
        train_binary_svm(x, y, sample_c=np.array([1.0, -1.0, 1.0, 1.0]))
    with pytest.raises(ValueError):
        train_binary_svm(x, y, alpha0=np.zeros(3))
    with pytest.raises(ValueError):
        SvmConfig(C=0.0)
    with pytest.raises(ValueError):
        SvmConfig(kernel="poly")
    with pytest.raises(ValueError):
        SvmConfig(gamma=-2.0)
    with pytest.raises(ValueError):
        SvmConfig(max_passes=0)


def test_per_sample_bounds_cap_the_duals():
    rng = substream(0, "svm-sample-c")
    x = np.concatenate([rng.normal(-0.2, 1.0, size=(15, 2)),
                        rng.normal(0.2, 1.0, size=(15, 2))])
    y = np.concatenate([-np.ones(15), np.ones(15)])
    sample_c = np.full(30, 2.0)
    sample_c[0] = 1e-4
    model = train_binary_svm(x, y, SvmConfig(C=1.0), sample_c=sample_c)
    alpha = model.diagnostics["alphas_full"]
    assert np.all(alpha <= sample_c + 1e-15)
    assert alpha[0] <= 1e-4


def test_warm_start_from_solution_stops_immediately():
    rng = substream(0, "svm-warm")
    x = np.concatenate([rng.normal(-0.5, 1.0, size=(25, 3)),
                        rng.normal(0.5, 1.0, size=(25, 3))])
    y = np.concatenate([-np.ones(25), np.ones(25)])
    cold = train_binary_svm(x, y, SvmConfig(C=1.0))
    warm = train_binary_svm(x, y, SvmConfig(C=1.0),
                            alpha0=cold.diagnostics["alphas_full"])
    assert warm.diagnostics["n_iter"] <= 5
    np.testing.assert_allclose(warm.w, cold.w, atol=5e-3)


def test_infeasible_warm_start_is_projected():
    rng = substream(0, "svm-warm-bad")
    x = rng.normal(size=(20, 2))
    y = np.concatenate([-np.ones(10), np.ones(10)])
    model = train_binary_svm(x, y, SvmConfig(C=1.0), alpha0=np.full(20, 17.0))
    worst = kkt_violations(model, x, y)
    assert worst["alpha_dot_y"] <= 1e-9
    assert max(worst.values()) <= 1e-3


def test_iteration_budget_warns_when_exhausted():
    rng = substream(0, "svm-budget")
    x = rng.normal(size=(60, 2))
    y = np.where(rng.random(60) < 0.5, -1.0, 1.0)
    y[:2] = (-1.0, 1.0)  # both classes guaranteed
    with pytest.warns(RuntimeWarning):
        train_binary_svm(x, y, SvmConfig(C=100.0, max_passes=1, tolerance=1e-9))


# --- one-vs-one ensemble ---


def test_ovo_pair_layout_three_classes():
    rng = substream(0, "svm-ovo3")
    x, y = _blobs(rng, [(-3, 0), (3, 0), (0, 3)], 12)
    ens = train_ovo(x, y, SvmConfig(C=10.0))
    assert ens.pairs == [(0, 1), (0, 2), (1, 2)]
    assert len(ens.models) == 3
    assert (ens.predict(x) == y).all()


def test_ovo_six_classes_has_fifteen_models():
    rng = substream(0, "svm-ovo6")
    angles = np.linspace(0.0, 2.0 * np.pi, 7)[:6]
    centers = [(4.0 * np.cos(a), 4.0 * np.sin(a)) for a in angles]
    x, y = _blobs(rng, centers, 8, spread=0.3)
    ens = train_ovo(x, y, SvmConfig(C=10.0))
    assert len(ens.models) == 6 * 5 // 2 == 15
    assert (ens.predict(x) == y).all()


def test_ovo_two_classes_matches_binary_model():
    rng = substream(0, "svm-ovo2")
    x, y = _blobs(rng, [(-2, 0), (2, 0)], 15)
    ens = train_ovo(x, y, SvmConfig(C=1.0))
    binary = train_binary_svm(x, np.where(y == 0, 1.0, -1.0), SvmConfig(C=1.0))
    np.testing.assert_allclose(np.atleast_1d(ens.models[0].decision_function(x)),
                               binary.decision_function(x))
    np.testing.assert_array_equal(ens.predict(x), np.where(binary.predict(x) == 1, 0, 1))


def test_ovo_jobs_parity():
    rng = substream(0, "svm-ovo-jobs")
    x, y = _blobs(rng, [(-3, 0), (3, 0), (0, 3), (0, -3)], 10)
    serial = train_ovo(x, y, SvmConfig(C=5.0), jobs=1)
    parallel = train_ovo(x, y, SvmConfig(C=5.0), jobs=3)
    assert serial.pairs == parallel.pairs
    for a, b in zip(serial.models, parallel.models):
        np.testing.assert_array_equal(a.w, b.w)
        assert a.bias == b.bias
    np.testing.assert_array_equal(serial.predict(x), parallel.predict(x))


def test_ovo_class_handling_errors():
    rng = substream(0, "svm-ovo-err")
    x, y = _blobs(rng, [(-2, 0), (2, 0)], 8)
    with pytest.raises(ValueError):
        train_ovo(x, y, SvmConfig(), classes=[0, 1, 7])
    with pytest.raises(ValueError):
        train_ovo(x, np.zeros_like(y), SvmConfig())  # single class


class _Stub:
    """Fixed-decision pairwise model for vote accounting tests."""

    def __init__(self, value):
        self.value = value

    def decision_function(self, x):
        return np.full(np.atleast_2d(x).shape[0], self.value)


def test_ovo_tie_breaks_by_score_then_class():
    pairs = [(0, 1), (0, 2), (1, 2)]
    # one vote each; class 2 collected the largest absolute decision value
    ens = OvoEnsemble(classes=np.arange(3), pairs=pairs,
                      models=[_Stub(1.0), _Stub(-2.0), _Stub(0.5)])
    assert ens.predict(np.zeros((1, 4)))[0] == 2
    # one vote each with equal scores: falls back to the lowest class index
    even = OvoEnsemble(classes=np.arange(3), pairs=pairs,
                       models=[_Stub(1.0), _Stub(-1.0), _Stub(1.0)])
    assert even.predict(np.zeros((1, 4)))[0] == 0


def test_ovo_vote_fractions():
    pairs = [(0, 1), (0, 2), (1, 2)]
    ens = OvoEnsemble(classes=np.arange(3), pairs=pairs,
                      models=[_Stub(1.0), _Stub(1.0), _Stub(1.0)])
    scores = ens.predict_scores(np.zeros((2, 4)))
    np.testing.assert_allclose(scores.sum(axis=1), 1.0)
    np.testing.assert_allclose(scores[0], [2.0 / 3.0, 1.0 / 3.0, 0.0])


def test_ovo_model_count_validation():
    with pytest.raises(ValueError):
        OvoEnsemble(classes=np.arange(3), pairs=[(0, 1)], models=[_Stub(1.0)])


def test_predict_ovo_accepts_single_vector():
    rng = substream(0, "svm-ovo-single")
    x, y = _blobs(rng, [(-2, 0), (2, 0)], 8)
    ens = train_ovo(x, y, SvmConfig(C=1.0))
    out = predict_ovo(ens, x[0])
    assert out.shape == (1,)
    assert out[0] == y[0]


# --- serialization ---


def test_binary_doc_round_trip_linear_and_rbf():
    rng = substream(0, "svm-doc")
    x, y = _blobs(rng, [(-2, 0), (2, 0)], 10)
    signed = np.where(y == 0, 1.0, -1.0)
    for cfg in (SvmConfig(C=1.0), SvmConfig(C=1.0, kernel="rbf", gamma=0.5)):
        model = train_binary_svm(x, signed, cfg)
        doc = json.loads(json.dumps(binary_svm_to_doc(model)))
        back = binary_svm_from_doc(doc)
        np.testing.assert_allclose(back.decision_function(x),
                                   model.decision_function(x), atol=1e-12)
        np.testing.assert_array_equal(back.predict(x), model.predict(x))


def test_ovo_doc_round_trip():
    rng = substream(0, "svm-ovo-doc")
    x, y = _blobs(rng, [(-3, 0), (3, 0), (0, 3)], 9)
    ens = train_ovo(x, y, SvmConfig(C=5.0))
    doc = json.loads(json.dumps(svm_ovo_to_doc(ens)))
    back = svm_ovo_from_doc(doc)
    assert back.pairs == ens.pairs
    np.testing.assert_array_equal(back.predict(x), ens.predict(x))


def test_train_pairwise_accepts_custom_trainer():
    rng = substream(0, "svm-pairwise")
    x, y = _blobs(rng, [(-2, 0), (2, 0), (0, 2)], 6)

    calls = []

    def trainer(x_pair, y_signed):
        calls.append((x_pair.shape[0], set(np.unique(y_signed))))
        return _Stub(1.0)

    ens = train_pairwise(x, y, trainer)
    assert len(ens.models) == 3
    assert all(n == 12 and labels == {-1.0, 1.0} for n, labels in calls)
