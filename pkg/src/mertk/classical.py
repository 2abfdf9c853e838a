"""SVM (SMO, one-vs-one), Gaussian naive Bayes and random forest classifiers.

Labels are integer class indices ``0..K-1``; the classifiers remember the
sorted set of classes seen in training and always return members of it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import DimensionMismatch, SingleClass


class ConvergenceWarning(UserWarning):
    pass


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X):
        std = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(std > 0, std, 1.0))

    def __call__(self, X):
        return (X - self.mean) / self.scale


def _check_fit_input(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise DimensionMismatch(f"X {X.shape} and y {y.shape} disagree")
    classes = np.unique(y)
    if len(classes) < 2:
        raise SingleClass(f"need at least 2 classes, got {classes.tolist()}")
    return X, y, classes


def _check_predict_input(X, d):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != d:
        raise DimensionMismatch(f"model was trained on {d} features, got input {X.shape}")
    return X


def _votes_to_proba(votes):
    return votes / votes.sum(axis=1, keepdims=True)


# --------------------------------------------------------------------------
# SVM


def _kernel(kind, gamma, A, B):
    if kind == "linear":
        return A @ B.T
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def smo(K, y, C, tol=1e-3, max_iter=100_000):
    """Solve the binary soft-margin dual with second-order working-set selection.

    ``K`` is the kernel matrix, ``y`` in {-1, +1}. Returns
    ``(alpha, rho, converged)``; the decision function is
    ``sum_i alpha_i y_i K(x_i, x) - rho``.
    """
    n = len(y)
    alpha = np.zeros(n)
    G = -np.ones(n)  # gradient of 0.5 a'Qa - e'a
    diag = np.diag(K).copy()
    converged = False
    for _ in range(max_iter):
        minus_yG = -y * G
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        i = int(np.argmax(np.where(up, minus_yG, -np.inf)))
        m_up = minus_yG[i]
        m_low = np.min(np.where(low, minus_yG, np.inf))
        if m_up - m_low < tol:
            converged = True
            break
        b = m_up - minus_yG
        a = diag[i] + diag - 2.0 * K[i]
        a = np.where(a > 0, a, 1e-12)
        cand = low & (b > 0)
        j = int(np.argmin(np.where(cand, -(b * b) / a, np.inf)))

        step = b[j] / a[j]
        step = min(step, C - alpha[i] if y[i] > 0 else alpha[i])
        step = min(step, alpha[j] if y[j] > 0 else C - alpha[j])
        alpha[i] += y[i] * step
        alpha[j] -= y[j] * step
        alpha[i] = min(max(alpha[i], 0.0), C)
        alpha[j] = min(max(alpha[j], 0.0), C)
        G += y * step * (K[:, i] - K[:, j])

    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(yG[free].mean())
    else:
        minus_yG = -yG
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        hi = np.max(minus_yG[up]) if up.any() else 0.0
        lo = np.min(minus_yG[low]) if low.any() else 0.0
        rho = float(-(hi + lo) / 2.0)
    return alpha, rho, converged


@dataclass
class SvmModel:
    kernel: str
    C: float
    gamma: float
    classes: np.ndarray
    scaler: Standardizer
    support: np.ndarray  # standardized support vectors (union over pairs)
    coef: list  # per pair: (sv indices into support, alpha*y)
    rho: np.ndarray
    pairs: list
    converged: bool = True

    @property
    def n_features(self):
        return len(self.scaler.mean)

    def decision_function(self, X):
        """One column per class pair (a, b): positive votes for ``a``."""
        X = self.scaler(_check_predict_input(X, self.n_features))
        Kx = _kernel(self.kernel, self.gamma, X, self.support)
        out = np.empty((len(X), len(self.pairs)))
        for p, (idx, dual) in enumerate(self.coef):
            out[:, p] = Kx[:, idx] @ dual - self.rho[p]
        return out

    def _votes(self, X):
        dec = self.decision_function(X)
        votes = np.zeros((len(dec), len(self.classes)))
        for p, (a, b) in enumerate(self.pairs):
            votes[:, a] += dec[:, p] > 0
            votes[:, b] += dec[:, p] <= 0
        return votes

    def predict(self, X):
        return self.classes[self._votes(X).argmax(axis=1)]

    def predict_proba(self, X):
        return _votes_to_proba(self._votes(X))


def train_svm(X, y, C: float = 1.0, gamma: float | str = "scale", kernel: str = "rbf",
              tol: float = 1e-3, max_iter: int = 100_000) -> SvmModel:
    X, y, classes = _check_fit_input(X, y)
    if C <= 0:
        raise ValueError("C must be positive")
    scaler = Standardizer.fit(X)
    Xs = scaler(X)
    if gamma == "scale":
        var = Xs.var()
        gamma = 1.0 / (Xs.shape[1] * var) if var > 0 else 1.0
    if kernel not in ("rbf", "linear") or gamma <= 0:
        raise ValueError(f"bad kernel/gamma: {kernel}, {gamma}")
    K = _kernel(kernel, gamma, Xs, Xs)

    pairs, raw, rhos, converged = [], [], [], True
    used = np.zeros(len(X), dtype=bool)
    for a, b in combinations(range(len(classes)), 2):
        rows = np.flatnonzero((y == classes[a]) | (y == classes[b]))
        ys = np.where(y[rows] == classes[a], 1.0, -1.0)
        alpha, rho, ok = smo(K[np.ix_(rows, rows)], ys, C, tol, max_iter)
        if not ok:
            converged = False
            warnings.warn(f"SMO hit the iteration cap for classes {a} vs {b}", ConvergenceWarning)
        sv = alpha > 0
        used[rows[sv]] = True
        pairs.append((a, b))
        raw.append((rows[sv], alpha[sv] * ys[sv]))
        rhos.append(rho)

    keep = np.flatnonzero(used)
    remap = np.full(len(X), -1)
    remap[keep] = np.arange(len(keep))
    coef = [(remap[r], d) for r, d in raw]
    return SvmModel(kernel, float(C), float(gamma), classes, scaler, Xs[keep], coef,
                    np.array(rhos), pairs, converged)


# --------------------------------------------------------------------------
# Gaussian naive Bayes


@dataclass
class NbModel:
    classes: np.ndarray
    log_prior: np.ndarray
    means: np.ndarray  # [K, d]
    variances: np.ndarray  # [K, d], smoothed
    scaler: Standardizer

    @property
    def priors(self):
        return np.exp(self.log_prior)

    def joint_log_likelihood(self, X):
        X = self.scaler(_check_predict_input(X, self.means.shape[1]))
        ll = -0.5 * (np.log(2.0 * np.pi * self.variances).sum(axis=1)[None, :]
                     + (((X[:, None, :] - self.means[None]) ** 2) / self.variances[None]).sum(axis=2))
        return ll + self.log_prior

    def predict_log_proba(self, X):
        jll = self.joint_log_likelihood(X)
        top = jll.max(axis=1, keepdims=True)
        return jll - (top + np.log(np.exp(jll - top).sum(axis=1, keepdims=True)))

    def predict_proba(self, X):
        return np.exp(self.predict_log_proba(X))

    def predict(self, X):
        return self.classes[self.joint_log_likelihood(X).argmax(axis=1)]


def train_nb(X, y, var_smoothing: float = 1e-9, standardize: bool = True) -> NbModel:
    X, y, classes = _check_fit_input(X, y)
    scaler = Standardizer.fit(X) if standardize else Standardizer(np.zeros(X.shape[1]), np.ones(X.shape[1]))
    Xs = scaler(X)
    eps = var_smoothing * Xs.var(axis=0).max()
    means = np.stack([Xs[y == c].mean(axis=0) for c in classes])
    variances = np.stack([Xs[y == c].var(axis=0) for c in classes]) + eps
    if np.any(variances <= 0):
        # every feature constant in every class: fall back to unit variance
        variances = np.where(variances > 0, variances, 1.0)
    counts = np.array([(y == c).sum() for c in classes], dtype=np.float64)
    return NbModel(classes, np.log(counts / counts.sum()), means, variances, scaler)


# --------------------------------------------------------------------------
# random forest


@dataclass
class Tree:
    feature: np.ndarray  # -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # [nodes, K] class counts

    def apply(self, X):
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return node

    def predict(self, X):
        return self.value[self.apply(X)].argmax(axis=1)

    @property
    def n_nodes(self):
        return len(self.feature)


def _best_split(Xn, yn, feats, n_classes):
    """Best Gini split over the candidate features; returns (feature, threshold) or None."""
    V = Xn[:, feats]
    order = np.argsort(V, axis=0, kind="stable")
    Vs = np.take_along_axis(V, order, axis=0)
    onehot = np.eye(n_classes)[yn]
    cum = np.cumsum(onehot[order], axis=0)[:-1]  # [n-1, m, K]: left counts for split after row i
    n = len(yn)
    nl = np.arange(1, n)[:, None]
    nr = n - nl
    total = onehot.sum(axis=0)
    right = total - cum
    score = (cum ** 2).sum(axis=2) / nl + (right ** 2).sum(axis=2) / nr
    valid = Vs[:-1] < Vs[1:]
    if not valid.any():
        return None
    score = np.where(valid, score, -np.inf)
    flat = int(np.argmax(score.T.reshape(-1)))  # feature-major: first feature wins ties
    col, row = divmod(flat, n - 1)
    lo, hi = Vs[row, col], Vs[row + 1, col]
    thr = lo + (hi - lo) / 2.0
    if not (lo <= thr < hi):
        thr = lo
    return feats[col], thr


def build_tree(X, y, n_classes, max_features, rng) -> Tree:
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(np.bincount(y[idx], minlength=n_classes).astype(np.float64))
        return len(feature) - 1

    stack = [(new_node(np.arange(len(y))), np.arange(len(y)))]
    while stack:
        node, idx = stack.pop()
        if np.count_nonzero(value[node]) <= 1:
            continue
        Xn = X[idx]
        varying = Xn.max(axis=0) > Xn.min(axis=0)
        perm = rng.permutation(X.shape[1])
        feats = perm[varying[perm]][:max_features]
        if len(feats) == 0:
            continue
        split = _best_split(Xn, y[idx], feats, n_classes)
        if split is None:
            continue
        f, thr = split
        mask = Xn[:, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = int(f), float(thr)
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri))
        stack.append((left[node], li))
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
                np.array(right, dtype=np.int64), np.array(value).reshape(-1, n_classes))


@dataclass
class RfModel:
    classes: np.ndarray
    trees: list = field(default_factory=list)
    n_features: int = 0
    max_features: int = 1
    seed: int = 0

    @property
    def n_trees(self):
        return len(self.trees)

    def _votes(self, X):
        X = _check_predict_input(X, self.n_features)
        votes = np.zeros((len(X), len(self.classes)))
        rows = np.arange(len(X))
        for tree in self.trees:
            votes[rows, tree.predict(X)] += 1
        return votes

    def predict_proba(self, X):
        return _votes_to_proba(self._votes(X))

    def predict(self, X):
        return self.classes[self._votes(X).argmax(axis=1)]


def train_rf(X, y, n_trees: int = 100, seed: int = 0, max_features: int | None = None) -> RfModel:
    """Bootstrap-aggregated CART trees grown to purity on sqrt(d) features per split.

    A single-label training set is allowed; every prediction is then that label.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise DimensionMismatch(f"X {X.shape} and y {y.shape} disagree")
    if len(X) < 2:
        raise ValueError("random forest needs at least 2 samples")
    classes, codes = np.unique(y, return_inverse=True)
    d = X.shape[1]
    m = max_features or max(1, int(np.sqrt(d)))
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng([seed, t])
        boot = rng.integers(0, len(X), size=len(X))
        trees.append(build_tree(X[boot], codes[boot], len(classes), m, rng))
    return RfModel(classes, trees, d, m, seed)


def predict(model, X):
    return model.predict(X)


def predict_proba(model, X):
    return model.predict_proba(X)
