import warnings

import numpy as np
import pytest

from mertk.classical import (
    ConvergenceWarning,
    _best_split,
    build_tree,
    smo,
    train_nb,
    train_rf,
    train_svm,
)
from mertk.classifiers import CLASSIFIER_KINDS, make_classifier, restore_classifier
from mertk.errors import DimensionMismatch, SingleClass


def blobs(rng, n=30, k=3, d=4, sep=4.0):
    centres = rng.standard_normal((k, d)) * sep
    X = np.concatenate([c + rng.standard_normal((n, d)) for c in centres])
    return X, np.repeat(np.arange(k), n)


# --- SVM ------------------------------------------------------------------

def test_smo_satisfies_kkt(rng):
    X = rng.standard_normal((40, 2))
    y = np.where(X[:, 0] + 0.3 * rng.standard_normal(40) > 0, 1.0, -1.0)
    K = np.exp(-0.5 * ((X[:, None] - X[None]) ** 2).sum(axis=2))
    C, tol = 1.0, 1e-3
    alpha, rho, ok = smo(K, y, C, tol)
    assert ok
    assert np.all(alpha >= 0) and np.all(alpha <= C)
    assert abs(alpha @ y) < 1e-10
    f = (alpha * y) @ K - rho
    margin = y * f
    assert np.all(margin[alpha == 0] >= 1 - 10 * tol)
    assert np.all(margin[alpha == C] <= 1 + 10 * tol)
    free = (alpha > 0) & (alpha < C)
    np.testing.assert_allclose(margin[free], 1.0, atol=10 * tol)


def test_svm_matches_libsvm(rng):
    svm = pytest.importorskip("sklearn.svm")
    X, y = blobs(rng, sep=1.0)
    model = train_svm(X, y, C=1.0)
    Xs = model.scaler(X)
    ref = svm.SVC(C=1.0, gamma=model.gamma, kernel="rbf", tol=1e-3, decision_function_shape="ovo").fit(Xs, y)
    Xt = rng.standard_normal((50, 4))
    # both orient pair (a, b) so that a positive value votes for a
    np.testing.assert_allclose(model.decision_function(Xt), ref.decision_function(model.scaler(Xt)), atol=5e-3)
    assert np.mean(model.predict(Xt) == ref.predict(model.scaler(Xt))) >= 0.96


def test_svm_gamma_scale_and_linear_kernel(rng):
    X, y = blobs(rng, k=2)
    m = train_svm(X, y)
    Xs = m.scaler(X)
    assert m.gamma == pytest.approx(1.0 / (X.shape[1] * Xs.var()))
    lin = train_svm(X, y, kernel="linear")
    assert np.mean(lin.predict(X) == y) == 1.0


def test_svm_proba_and_errors(rng):
    X, y = blobs(rng)
    m = train_svm(X, y)
    p = m.predict_proba(X)
    np.testing.assert_allclose(p.sum(axis=1), 1.0)
    assert np.mean(m.predict(X) == y) > 0.95
    with pytest.raises(SingleClass):
        train_svm(X, np.zeros(len(X), dtype=int))
    with pytest.raises(DimensionMismatch):
        m.predict(X[:, :2])
    with pytest.raises(ValueError):
        train_svm(X, y, C=0)


def test_svm_iteration_cap_warns(rng):
    X, y = blobs(rng, k=2, sep=0.3)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        m = train_svm(X, y, max_iter=2)
    assert not m.converged
    assert any(issubclass(w.category, ConvergenceWarning) for w in caught)


# --- naive Bayes ----------------------------------------------------------

def test_nb_matches_gaussian_nb(rng):
    nb = pytest.importorskip("sklearn.naive_bayes")
    X, y = blobs(rng, sep=1.0)
    ours = train_nb(X, y, standardize=False)
    ref = nb.GaussianNB(var_smoothing=1e-9).fit(X, y)
    Xt = rng.standard_normal((20, 4))
    np.testing.assert_allclose(ours.predict_proba(Xt), ref.predict_proba(Xt), rtol=1e-9, atol=1e-12)


def test_nb_closed_form(rng):
    X, y = blobs(rng, n=10, k=2, d=2)
    m = train_nb(X, y, standardize=False, var_smoothing=0.0)
    x = X[:1]
    jll = []
    for c in (0, 1):
        mu, var = X[y == c].mean(axis=0), X[y == c].var(axis=0)
        jll.append(np.log(0.5) + np.sum(-0.5 * np.log(2 * np.pi * var) - (x[0] - mu) ** 2 / (2 * var)))
    np.testing.assert_allclose(m.joint_log_likelihood(x)[0], jll, rtol=1e-12)
    np.testing.assert_allclose(m.predict_proba(x)[0], np.exp(jll) / np.exp(jll).sum(), rtol=1e-10)


def test_nb_constant_feature_is_safe():
    X = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 5.0], [1.0, 6.0]])
    m = train_nb(X, np.array([0, 0, 1, 1]))
    assert np.all(np.isfinite(m.predict_proba(X)))
    np.testing.assert_array_equal(m.predict(X), [0, 0, 1, 1])


# --- trees and forests ----------------------------------------------------

def _gini_brute(X, y, feats, k):
    best = np.inf
    for f in feats:
        vals = np.unique(X[:, f])
        for lo, hi in zip(vals[:-1], vals[1:]):
            m = X[:, f] <= (lo + hi) / 2
            g = 0.0
            for part in (y[m], y[~m]):
                p = np.bincount(part, minlength=k) / len(part)
                g += len(part) * (1 - (p ** 2).sum())
            best = min(best, g / len(y))
    return best


def test_best_split_minimises_gini(rng):
    for _ in range(30):
        X = rng.integers(0, 5, size=(25, 4)).astype(float)
        y = rng.integers(0, 3, 25)
        feats = np.array([0, 2, 3])
        split = _best_split(X, y, feats, 3)
        f, thr = split
        m = X[:, f] <= thr
        g = sum(len(p) * (1 - ((np.bincount(p, minlength=3) / len(p)) ** 2).sum()) for p in (y[m], y[~m])) / 25
        assert g == pytest.approx(_gini_brute(X, y, feats, 3), abs=1e-12)


def test_tree_grows_to_purity(rng):
    X = rng.standard_normal((60, 3))
    y = rng.integers(0, 3, 60)
    tree = build_tree(X, y, 3, 3, np.random.default_rng(0))
    np.testing.assert_array_equal(tree.predict(X), y)


def test_forest_votes_and_determinism(rng):
    X, y = blobs(rng)
    a = train_rf(X, y, n_trees=15, seed=4)
    b = train_rf(X, y, n_trees=15, seed=4)
    np.testing.assert_array_equal(a.predict_proba(X), b.predict_proba(X))
    p = a.predict_proba(X)
    np.testing.assert_allclose(p * 15, np.round(p * 15))
    assert a.max_features == 2
    assert np.mean(a.predict(X) == y) > 0.95


def test_forest_vote_ties_go_to_lowest_class():
    X = np.array([[0.0], [1.0]])
    model = train_rf(X, np.array([0, 1]), n_trees=2, seed=0)
    votes = model._votes(X)
    tied = votes[:, 0] == votes[:, 1]
    assert np.all(model.predict(X)[tied] == 0)


# --- unified wrappers -----------------------------------------------------

@pytest.mark.parametrize("kind", CLASSIFIER_KINDS)
def test_state_round_trip(kind, rng):
    X, y = blobs(rng, n=20, d=64)
    sched = {"max_epochs": 2, "patience": None}
    clf = make_classifier(kind, 3, seed=1, schedule=sched if kind in ("mlp", "cnn", "rnn") else None)
    clf.fit(X, y, X[::3], y[::3])
    meta, tensors = clf.to_state()
    again = restore_classifier(kind, meta, tensors)
    np.testing.assert_array_equal(again.predict_proba(X), clf.predict_proba(X))
    assert clf.predict_proba(X).shape == (len(X), 3)


def test_make_classifier_rejects_unknown_kind():
    with pytest.raises(ValueError):
        make_classifier("knn", 3)


def test_absent_class_gets_zero_probability(rng):
    X, y = blobs(rng, k=2)
    clf = make_classifier("nb", 4).fit(X, y)
    p = clf.predict_proba(X)
    assert p.shape == (len(X), 4) and np.all(p[:, 2:] == 0)
