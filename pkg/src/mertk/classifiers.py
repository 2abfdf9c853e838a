"""Uniform wrappers over the six classifier families.

Every wrapper exposes ``fit(X, y, X_val, y_val)``, ``predict``,
``predict_proba`` and ``to_state`` (undone by :func:`restore_classifier`) to serialize into a
tensor container plus a small JSON-able metadata dict. ``X`` is either a
clip-level matrix [n, d] or a sequence tensor [n, T, d]; non-recurrent
models mean-pool sequences over time, the recurrent model treats a matrix
as length-1 sequences.
"""

from __future__ import annotations

import numpy as np

from . import classical
from .classical import NbModel, RfModel, Standardizer, SvmModel, Tree
from .nn import TrainSchedule, build_cnn, build_mlp, build_rnn, fit

CLASSIFIER_KINDS = ("svm", "nb", "rf", "mlp", "cnn", "rnn")
NEURAL_KINDS = ("mlp", "cnn", "rnn")


def as_vectors(X):
    X = np.asarray(X, dtype=np.float64)
    return X.mean(axis=1) if X.ndim == 3 else X


def as_sequences(X):
    X = np.asarray(X, dtype=np.float64)
    return X[:, None, :] if X.ndim == 2 else X


class _Classical:
    kind = ""
    uses_validation = False

    def __init__(self, n_classes, seed=0, **hyper):
        self.n_classes = n_classes
        self.seed = seed
        self.hyper = hyper
        self.model = None
        self.history = []

    def fit(self, X, y, X_val=None, y_val=None):
        self.model = self._train(as_vectors(X), np.asarray(y))
        return self

    def predict(self, X):
        return self.model.predict(as_vectors(X))

    def predict_proba(self, X):
        """[n, n_classes] probabilities; classes absent from training get 0."""
        p = self.model.predict_proba(as_vectors(X))
        out = np.zeros((len(p), self.n_classes))
        out[:, self.model.classes] = p
        return out

    def to_state(self):
        meta, tensors = self._state()
        meta["n_classes"] = self.n_classes
        return meta, tensors


class SvmClassifier(_Classical):
    kind = "svm"

    def _train(self, X, y):
        return classical.train_svm(X, y, **self.hyper)

    def _state(self):
        m: SvmModel = self.model
        tensors = {"scaler/mean": m.scaler.mean, "scaler/scale": m.scaler.scale,
                   "support": m.support, "rho": m.rho}
        for p, (idx, dual) in enumerate(m.coef):
            tensors[f"pair{p}/index"] = idx.astype(np.float64)
            tensors[f"pair{p}/dual"] = dual
        meta = {"kernel": m.kernel, "C": m.C, "gamma": m.gamma, "classes": m.classes.tolist(),
                "pairs": [list(p) for p in m.pairs], "converged": m.converged}
        return meta, tensors

    def _restore(self, meta, t):
        coef = [(t[f"pair{p}/index"].astype(np.int64), t[f"pair{p}/dual"]) for p in range(len(meta["pairs"]))]
        self.model = SvmModel(meta["kernel"], meta["C"], meta["gamma"], np.array(meta["classes"]),
                              Standardizer(t["scaler/mean"], t["scaler/scale"]), t["support"], coef,
                              t["rho"], [tuple(p) for p in meta["pairs"]], meta["converged"])


class NbClassifier(_Classical):
    kind = "nb"

    def _train(self, X, y):
        return classical.train_nb(X, y, **self.hyper)

    def _state(self):
        m: NbModel = self.model
        return {"classes": m.classes.tolist()}, {
            "log_prior": m.log_prior, "means": m.means, "variances": m.variances,
            "scaler/mean": m.scaler.mean, "scaler/scale": m.scaler.scale}

    def _restore(self, meta, t):
        self.model = NbModel(np.array(meta["classes"]), t["log_prior"], t["means"], t["variances"],
                             Standardizer(t["scaler/mean"], t["scaler/scale"]))


class RfClassifier(_Classical):
    kind = "rf"

    def _train(self, X, y):
        return classical.train_rf(X, y, seed=self.seed, **self.hyper)

    def _state(self):
        m: RfModel = self.model
        tensors = {}
        for i, tree in enumerate(m.trees):
            for key in ("feature", "threshold", "left", "right", "value"):
                tensors[f"tree{i}/{key}"] = getattr(tree, key).astype(np.float64)
        meta = {"classes": m.classes.tolist(), "n_trees": m.n_trees, "n_features": m.n_features,
                "max_features": m.max_features, "seed": m.seed}
        return meta, tensors

    def _restore(self, meta, t):
        trees = []
        for i in range(meta["n_trees"]):
            g = lambda k: t[f"tree{i}/{k}"]  # noqa: E731
            trees.append(Tree(g("feature").astype(np.int64), g("threshold"), g("left").astype(np.int64),
                              g("right").astype(np.int64), g("value")))
        self.model = RfModel(np.array(meta["classes"]), trees, meta["n_features"], meta["max_features"],
                             meta["seed"])


class _Neural:
    kind = ""
    uses_validation = True

    def __init__(self, n_classes, seed=0, schedule: TrainSchedule | None = None, **hyper):
        self.n_classes = n_classes
        self.seed = seed
        self.schedule = schedule or TrainSchedule(seed=seed)
        self.hyper = hyper
        self.net = None
        self.scaler = None
        self.input_dim = None
        self.history = []

    def _prepare(self, X):
        raise NotImplementedError

    def _build(self, d):
        raise NotImplementedError

    def fit(self, X, y, X_val=None, y_val=None):
        X = self._prepare(X)
        flat = X.reshape(-1, X.shape[-1])
        self.scaler = Standardizer.fit(flat)
        self.input_dim = X.shape[-1]
        self.net = self._build(self.input_dim).init(self.seed)
        Xv = self.scaler(self._prepare(X_val)) if X_val is not None and len(X_val) else None
        self.net, self.history = fit(self.net, self.scaler(X), np.asarray(y), Xv,
                                     None if Xv is None else np.asarray(y_val), self.schedule)
        return self

    def predict_proba(self, X):
        return self.net.predict_proba(self.scaler(self._prepare(X)))

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)

    def to_state(self):
        tensors = {"scaler/mean": self.scaler.mean, "scaler/scale": self.scaler.scale}
        tensors.update({f"net/{k}": v for k, v in self.net.parameters().items()})
        meta = {"n_classes": self.n_classes, "input_dim": self.input_dim, "hyper": self.hyper,
                "seed": self.seed}
        return meta, tensors

    def _restore(self, meta, t):
        self.input_dim = meta["input_dim"]
        self.scaler = Standardizer(t["scaler/mean"], t["scaler/scale"])
        self.net = self._build(self.input_dim)
        self.net.init(0)
        self.net.load_state_dict({k[4:]: v for k, v in t.items() if k.startswith("net/")})


class MlpClassifier(_Neural):
    kind = "mlp"

    def _prepare(self, X):
        return as_vectors(X)

    def _build(self, d):
        return build_mlp(d, self.n_classes, **self.hyper)


class CnnClassifier(_Neural):
    kind = "cnn"

    def _prepare(self, X):
        return as_vectors(X)

    def _build(self, d):
        return build_cnn(d, self.n_classes, **self.hyper)


class RnnClassifier(_Neural):
    kind = "rnn"

    def _prepare(self, X):
        return as_sequences(X)

    def _build(self, d):
        return build_rnn(d, self.n_classes, **self.hyper)


_CLASSES = {"svm": SvmClassifier, "nb": NbClassifier, "rf": RfClassifier,
            "mlp": MlpClassifier, "cnn": CnnClassifier, "rnn": RnnClassifier}

# early stopping (patience 100) for CNN/LSTM; the MLP runs its full 1000 epochs
DEFAULT_SCHEDULES = {
    "mlp": dict(max_epochs=1000, batch_size=32, patience=None),
    "cnn": dict(max_epochs=1000, batch_size=32, patience=100),
    "rnn": dict(max_epochs=1000, batch_size=32, patience=100),
}


def make_classifier(kind: str, n_classes: int, seed: int = 0, schedule: dict | TrainSchedule | None = None,
                    **hyper):
    """Construct an unfitted classifier of ``kind``.

    For neural kinds ``schedule`` may be a :class:`TrainSchedule` or a dict of
    overrides on top of the per-kind defaults; its seed is forced to ``seed``.
    """
    if kind not in _CLASSES:
        raise ValueError(f"unknown classifier {kind!r}; expected one of {CLASSIFIER_KINDS}")
    if kind in NEURAL_KINDS:
        if isinstance(schedule, TrainSchedule):
            opts = {k: getattr(schedule, k) for k in ("max_epochs", "batch_size", "patience", "monitor", "lr")}
        else:
            opts = dict(DEFAULT_SCHEDULES[kind], **(schedule or {}))
        return _CLASSES[kind](n_classes, seed, TrainSchedule(seed=seed, **opts), **hyper)
    return _CLASSES[kind](n_classes, seed, **hyper)


def restore_classifier(kind: str, meta: dict, tensors: dict):
    if kind in NEURAL_KINDS:
        clf = _CLASSES[kind](meta["n_classes"], meta["seed"], **meta["hyper"])
    else:
        clf = _CLASSES[kind](meta["n_classes"])
    clf._restore(meta, tensors)
    return clf
