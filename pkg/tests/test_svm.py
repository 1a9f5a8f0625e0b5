import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from gandl import svm
from gandl.svm import MaxMarginClassifier, SvmConfig

from .oracles import primal_qp


def blobs(rng, n, d, gap=3.0):
    y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    X = rng.standard_normal((n, d)) + gap * y[:, None] * np.eye(d)[0]
    return X, y


def test_one_dimensional_max_margin_exact():
    X = np.array([[-1.0], [1.0]])
    y = np.array([-1.0, 1.0])
    m = svm.fit(X, y, SvmConfig(c=1e6))
    assert m.converged
    assert m.w[0] == pytest.approx(1.0, abs=1e-6) and m.b == pytest.approx(0.0, abs=1e-6)


def test_duplicated_separable_data_same_boundary():
    X, y = blobs(np.random.default_rng(0), 20, 2, gap=4.0)
    cfg = SvmConfig(c=1e4, tol=1e-8, max_iter=100_000)
    a = svm.fit(X, y, cfg)
    b = svm.fit(np.vstack([X, X]), np.concatenate([y, y]), cfg)
    np.testing.assert_allclose(b.w, a.w, atol=1e-5)
    assert b.b == pytest.approx(a.b, abs=1e-5)


@pytest.mark.parametrize("seed", range(50))
def test_matches_independent_primal_solver(seed):
    rng = np.random.default_rng([11, seed])
    n, d = int(rng.integers(4, 41)), int(rng.integers(1, 9))
    X, y = blobs(rng, n, d, gap=float(rng.uniform(0.0, 2.0)))
    c = float(rng.choice([0.1, 1.0, 10.0]))
    m = svm.fit(X, y, SvmConfig(c=c, tol=1e-9, max_iter=200_000))
    ours = svm.primal_objective(m.w, m.b, X, y, c)
    ref = primal_qp(X, y, c)
    assert abs(ours - ref) <= 1e-4 * abs(ref)


@pytest.mark.parametrize("seed", range(50))
def test_separable_2d_instances_match_oracle(seed):
    rng = np.random.default_rng([12, seed])
    X, y = blobs(rng, 30, 2, gap=5.0)
    m = svm.fit(X, y, SvmConfig(c=1.0, tol=1e-9, max_iter=200_000))
    ref = primal_qp(X, y, 1.0)
    assert abs(svm.primal_objective(m.w, m.b, X, y, 1.0) - ref) <= 1e-4 * abs(ref)


def test_dual_trace_nondecreasing_and_kkt():
    rng = np.random.default_rng(2)
    X, y = blobs(rng, 60, 5, gap=0.8)
    cfg = SvmConfig(c=0.5, tol=1e-6)
    m = svm.fit(X, y, cfg)
    assert m.converged
    assert np.all(np.diff(m.dual_objective) >= -1e-12 * np.abs(m.dual_objective[1:]).max())
    margins = y * m.decision_function(X)
    at_zero = m.alpha <= 0
    at_c = m.alpha >= cfg.c
    assert np.all(margins[at_zero] >= 1 - cfg.tol)
    assert np.all(margins[at_c] <= 1 + cfg.tol)


def test_deterministic_given_seed():
    X, y = blobs(np.random.default_rng(3), 40, 4, gap=0.5)
    a = svm.fit(X, y, SvmConfig(seed=4, max_iter=30))
    b = svm.fit(X, y, SvmConfig(seed=4, max_iter=30))
    assert a.w.tobytes() == b.w.tobytes() and a.b == b.b


def test_non_convergence_is_reported_and_model_returned(caplog):
    X, y = blobs(np.random.default_rng(5), 40, 4, gap=0.2)
    m = svm.fit(X, y, SvmConfig(tol=1e-12, max_iter=2))
    assert not m.converged and m.iters_run == 2 and m.violation > 0
    assert "did not converge" in caplog.text


@pytest.mark.parametrize("X,y,match", [
    (np.ones((3, 2)), np.ones(3), "both classes"),
    (np.array([[np.nan, 1.0], [0.0, 1.0]]), np.array([1.0, -1.0]), "non-finite"),
    (np.ones((1, 2)), np.ones(1), "two samples"),
    (np.ones((2, 2)), np.array([0.0, 1.0]), "-1 or"),
])
def test_fit_rejects_bad_input(X, y, match):
    with pytest.raises(ValueError, match=match):
        svm.fit(X, y)


def test_predict_ties_go_positive_and_dims_checked():
    m = svm.LinearModel(np.array([1.0]), 0.0, SvmConfig())
    np.testing.assert_array_equal(svm.predict(m, np.array([[3.0], [0.0], [-2.0]])), [1, 1, -1])
    with pytest.raises(ValueError):
        svm.predict(m, np.ones((1, 2)))


def test_training_accuracy_beats_single_feature_thresholds():
    rng = np.random.default_rng(6)
    X, y = blobs(rng, 50, 3, gap=1.5)
    X = X @ rng.standard_normal((3, 3))
    m = svm.fit(X, y, SvmConfig(c=100.0, max_iter=50_000))
    ours = np.mean(svm.predict(m, X) == y)
    best = 0.0
    for j in range(X.shape[1]):
        for t in np.concatenate([X[:, j], [np.inf]]):
            for sign in (1, -1):
                best = max(best, np.mean(np.where(sign * (X[:, j] - t) >= 0, 1, -1) == y))
    assert ours >= best


def test_scaling_features_keeps_labels():
    rng = np.random.default_rng(7)
    X, y = blobs(rng, 40, 3, gap=4.0)
    base = svm.predict(svm.fit(X, y, SvmConfig(c=10.0)), X)
    for s in (0.5, 2.0, 10.0):
        np.testing.assert_array_equal(svm.predict(svm.fit(s * X, y, SvmConfig(c=10.0)), s * X), base)


def test_model_json_round_trip():
    m = svm.fit(*blobs(np.random.default_rng(8), 10, 2))
    back = svm.LinearModel.from_json(m.to_json())
    np.testing.assert_array_equal(back.w, m.w)
    assert back.b == m.b and back.converged == m.converged and back.iters_run == m.iters_run


# metrics

def test_confusion_perfect_and_all_wrong():
    y = np.array([0, 1, 1, 0, 1])
    cm = svm.confusion_matrix(y, y, 2)
    np.testing.assert_array_equal(cm, [[2, 0], [0, 3]])
    assert svm.accuracy(y, y) == 1.0
    wrong = 1 - y
    np.testing.assert_array_equal(svm.confusion_matrix(y, wrong, 2), [[0, 2], [3, 0]])
    assert svm.accuracy(y, wrong) == 0.0


def test_random_labels_near_chance():
    rng = np.random.default_rng(9)
    t, p = rng.integers(0, 4, 1000), rng.integers(0, 4, 1000)
    cm = svm.confusion_matrix(t, p, 4)
    assert cm.sum() == 1000
    assert abs(svm.accuracy(t, p) - 0.25) < 0.05
    assert svm.accuracy(t, p) == np.trace(cm) / 1000


def test_metric_errors():
    with pytest.raises(ValueError, match="length"):
        svm.confusion_matrix([0, 1], [0], 2)
    with pytest.raises(ValueError, match="outside"):
        svm.confusion_matrix([0, 2], [0, 1], 2)
    with pytest.raises(ValueError):
        svm.accuracy([], [])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=50))
def test_confusion_counts_sum_to_n(pairs):
    t, p = np.array(pairs).T
    cm = svm.confusion_matrix(t, p, 4)
    assert cm.sum() == len(pairs)
    assert svm.accuracy(t, p) == pytest.approx(np.trace(cm) / len(pairs))


# multiclass

def clusters(rng, per=15):
    centres = np.array([[0.0, 6.0], [6.0, -3.0], [-6.0, -3.0]])
    X = np.vstack([c + rng.standard_normal((per, 2)) for c in centres])
    return X, np.repeat(np.arange(3), per)


def test_three_clusters_fully_separated():
    X, y = clusters(np.random.default_rng(10))
    models = svm.fit_multiclass(X, y, 3)
    assert np.mean(svm.predict_multiclass(models, X) == y) == 1.0


def test_two_class_reduction_matches_binary():
    X, y01 = clusters(np.random.default_rng(11))
    keep = y01 < 2
    X, y01 = X[keep], y01[keep]
    models = svm.fit_multiclass(X, y01, 2)
    binary = svm.fit(X, np.where(y01 == 1, 1.0, -1.0))
    grid = np.random.default_rng(12).uniform(-8, 8, (200, 2))
    f = binary.decision_function(grid)
    ovr = svm.predict_multiclass(models, grid)
    decided = np.abs(f) > 1e-6
    np.testing.assert_array_equal(ovr[decided], (f[decided] > 0).astype(int))


def test_relabeling_permutes_models():
    X, y = clusters(np.random.default_rng(13))
    perm = np.array([2, 0, 1])
    a = svm.fit_multiclass(X, y, 3)
    b = svm.fit_multiclass(X, perm[y], 3)
    for c in range(3):
        np.testing.assert_allclose(b[perm[c]].w, a[c].w, atol=1e-9)


def test_argmax_ties_pick_lowest_class():
    models = [svm.LinearModel(np.zeros(1), 1.0, SvmConfig()) for _ in range(3)]
    np.testing.assert_array_equal(svm.predict_multiclass(models, np.ones((2, 1))), [0, 0])


def test_missing_class_rejected():
    with pytest.raises(ValueError, match="no samples"):
        svm.fit_multiclass(np.ones((4, 2)), np.array([0, 0, 2, 2]), 3)


# estimator

def test_estimator_binary_and_multiclass():
    X, y = clusters(np.random.default_rng(14))
    names = np.array(["a", "b", "c"])[y]
    est = MaxMarginClassifier().fit(X, names)
    assert list(est.classes_) == ["a", "b", "c"] and est.score(X, names) == 1.0
    two = names != "c"
    est2 = clone(est).fit(X[two], names[two])
    assert est2.decision_function(X[two]).shape == (two.sum(),)
    assert est2.get_params()["C"] == 1.0


# standardization

def test_standardized_fit_acts_on_raw_features():
    rng = np.random.default_rng(15)
    X, y = blobs(rng, 40, 4, gap=1.0)
    X = X * np.array([1e-3, 10.0, 1.0, 0.1]) + 5.0
    cfg = SvmConfig(standardize=True)
    m = svm.fit(X, y, cfg)
    mean, scale = X.mean(axis=0), X.std(axis=0)
    ref = svm.fit((X - mean) / scale, y, SvmConfig())
    np.testing.assert_allclose(m.decision_function(X), ref.decision_function((X - mean) / scale),
                               rtol=1e-10, atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(1e-3, 1e3), min_size=3, max_size=3), st.integers(0, 2**31 - 1))
def test_standardized_predictions_ignore_feature_units(scales, seed):
    X, y = blobs(np.random.default_rng(seed), 30, 3, gap=1.0)
    cfg = SvmConfig(standardize=True, max_iter=500)
    base = svm.fit(X, y, cfg)
    scaled = svm.fit(X * np.array(scales), y, cfg)
    np.testing.assert_allclose(scaled.decision_function(X * np.array(scales)),
                               base.decision_function(X), rtol=1e-7, atol=1e-7)


def test_constant_feature_survives_standardization():
    X, y = blobs(np.random.default_rng(16), 20, 2, gap=3.0)
    X = np.hstack([X, np.full((20, 1), 2.0)])
    m = svm.fit(X, y, SvmConfig(standardize=True))
    assert np.all(np.isfinite(m.w)) and np.mean(svm.predict(m, X) == y) == 1.0
    assert json.loads(m.to_json())["standardize"] is True
