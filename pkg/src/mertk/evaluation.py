"""Splits, repeated experiments, classification/regression metrics and reports."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .classifiers import make_classifier
from .datasets import LabeledDataset
from .errors import DimensionMismatch, TooSmall, UnknownLabel, ZeroVariance

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.8
    test: float = 0.1
    val: float = 0.1
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        if abs(self.train + self.test + self.val - 1.0) > 1e-9 or min(self.train, self.test, self.val) < 0:
            raise ValueError("split fractions must be non-negative and sum to 1")


def _largest_remainder(quotas, total, caps):
    """Integer allocation summing to ``total``, each within 1 of its quota and <= cap."""
    base = np.minimum(np.floor(quotas).astype(np.int64), caps)
    rest = total - base.sum()
    frac = quotas - np.floor(quotas)
    for k in np.argsort(-frac, kind="stable"):
        if rest <= 0:
            break
        if base[k] < caps[k]:
            base[k] += 1
            rest -= 1
    return base


def split_indices(labels, spec: SplitSpec = SplitSpec()):
    """(train, test, val) index arrays; ``labels`` may be None for unstratified splits."""
    n = len(labels)
    if n < 10:
        raise TooSmall(f"need at least 10 samples to split, got {n}")
    n_test = int(np.floor(n * spec.test + 0.5))
    n_val = int(np.floor(n * spec.val + 0.5))
    if n - n_test - n_val <= 0 or (spec.test > 0 and n_test == 0) or (spec.val > 0 and n_val == 0):
        raise TooSmall(f"{n} samples cannot fill an {spec.train}/{spec.test}/{spec.val} split")
    rng = np.random.default_rng(spec.seed)

    if not spec.stratified or labels is None:
        perm = rng.permutation(n)
        return np.sort(perm[n_test + n_val:]), np.sort(perm[:n_test]), np.sort(perm[n_test:n_test + n_val])

    labels = np.asarray(labels)
    classes = np.unique(labels)
    sizes = np.array([(labels == c).sum() for c in classes])
    test_c = _largest_remainder(sizes * n_test / n, n_test, sizes)
    val_c = _largest_remainder(sizes * n_val / n, n_val, sizes - test_c)
    train, test, val = [], [], []
    for c, t, v in zip(classes, test_c, val_c):
        members = rng.permutation(np.flatnonzero(labels == c))
        test.append(members[:t])
        val.append(members[t:t + v])
        train.append(members[t + v:])
    return tuple(np.sort(np.concatenate(part)) for part in (train, test, val))


def split(dataset: LabeledDataset, spec: SplitSpec = SplitSpec()):
    labels = dataset.labels if spec.stratified else None
    idx = split_indices(labels if labels is not None else np.zeros(len(dataset)), spec)
    return tuple(dataset.subset(i) for i in idx)


# --------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # rows = true, cols = predicted
    classes: tuple

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.counts.sum())

    def __add__(self, other):
        return ConfusionMatrix(self.counts + other.counts, self.classes)


def confusion(y_true, y_pred, classes) -> ConfusionMatrix:
    """``classes`` are names; labels are integer indices into them."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    k = len(classes)
    if y_true.shape != y_pred.shape:
        raise DimensionMismatch("true and predicted labels differ in length")
    bad = np.concatenate([y_true, y_pred])
    bad = bad[(bad < 0) | (bad >= k)]
    if bad.size:
        raise UnknownLabel(f"label index {int(bad[0])} outside {k} classes")
    counts = np.bincount(y_true * k + y_pred, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(counts, tuple(classes))


def f1_score(p, r):
    return 0.0 if p + r == 0 else 2.0 * p * r / (p + r)


def precision_recall_f1(cm: ConfusionMatrix) -> dict:
    """Per-class precision/recall/F1/support, support-weighted averages and accuracy.

    Zero denominators give 0.
    """
    c = cm.counts.astype(np.float64)
    tp = np.diag(c)
    pred = c.sum(axis=0)
    support = c.sum(axis=1)
    precision = np.divide(tp, pred, out=np.zeros_like(tp), where=pred > 0)
    recall = np.divide(tp, support, out=np.zeros_like(tp), where=support > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    total = support.sum()
    w = support / total
    return {
        "classes": list(cm.classes),
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "support": support.astype(np.int64),
        "accuracy": float(tp.sum() / total),
        # support-weighted recall telescopes to sum(tp) / total, i.e. accuracy; use that exact form
        "weighted": {"precision": float(w @ precision), "recall": float(tp.sum() / total), "f1": float(w @ f1)},
    }


def r2(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if len(y_true) < 2:
        raise ZeroVariance("r2 needs at least 2 samples")
    ss_tot = float(((y_true - y_true.mean()) ** 2).sum())
    if ss_tot == 0:
        raise ZeroVariance("true values have zero variance")
    return 1.0 - float(((y_true - y_pred) ** 2).sum()) / ss_tot


# --------------------------------------------------------------------------
# reports


@dataclass
class EvalReport:
    dataset: str
    feature_kind: str
    classifier: str
    classes: list
    reps: int
    confusion: ConfusionMatrix  # pooled over repetitions
    rep_accuracy: list = field(default_factory=list)
    rep_f1: list = field(default_factory=list)
    r2: dict | None = None

    @property
    def per_class(self):
        return precision_recall_f1(self.confusion)

    @property
    def accuracy_mean(self):
        return float(np.mean(self.rep_accuracy))

    @property
    def accuracy_std(self):
        return float(np.std(self.rep_accuracy))

    @property
    def f1_mean(self):
        return float(np.mean(self.rep_f1))

    @property
    def f1_std(self):
        return float(np.std(self.rep_f1))

    def to_dict(self) -> dict:
        m = self.per_class
        return {
            "dataset": self.dataset,
            "feature_kind": self.feature_kind,
            "classifier": self.classifier,
            "reps": self.reps,
            "classes": list(self.classes),
            "accuracy": {"mean": self.accuracy_mean, "std": self.accuracy_std, "per_rep": list(self.rep_accuracy)},
            "weighted_f1": {"mean": self.f1_mean, "std": self.f1_std, "per_rep": list(self.rep_f1)},
            "pooled": {
                "per_class": {
                    name: {"precision": float(m["precision"][i]), "recall": float(m["recall"][i]),
                           "f1": float(m["f1"][i]), "support": int(m["support"][i])}
                    for i, name in enumerate(self.classes)
                },
                "accuracy": m["accuracy"],
                "weighted_avg": m["weighted"],
                "confusion": self.confusion.counts.tolist(),
            },
            "r2": self.r2,
        }


def render_table(report: dict, title: str | None = None) -> str:
    """Aligned text table: one row per class, then Accuracy and Weighted avg (2 decimals)."""
    pooled = report["pooled"]
    title = title or report["dataset"]
    width = max(12, len(title), *(len(c) for c in report["classes"]))
    lines = [f"{title:<{width}}  {'Precision':>9}  {'Recall':>9}  {'F1-score':>9}  {'Support':>7}"]
    for name in report["classes"]:
        row = pooled["per_class"][name]
        lines.append(f"{name:<{width}}  {row['precision']:>9.2f}  {row['recall']:>9.2f}  "
                     f"{row['f1']:>9.2f}  {row['support']:>7d}")
    total = sum(pooled["per_class"][c]["support"] for c in report["classes"])
    lines.append(f"{'Accuracy':<{width}}  {'':>9}  {'':>9}  {pooled['accuracy']:>9.2f}  {total:>7d}")
    w = pooled["weighted_avg"]
    lines.append(f"{'Weighted avg':<{width}}  {w['precision']:>9.2f}  {w['recall']:>9.2f}  "
                 f"{w['f1']:>9.2f}  {total:>7d}")
    acc, f1 = report["accuracy"], report["weighted_f1"]
    lines.append(f"{report['classifier']} on {report['feature_kind']}, {report['reps']} reps: "
                 f"accuracy {acc['mean']:.2f} +/- {acc['std']:.2f}, F1 {f1['mean']:.2f} +/- {f1['std']:.2f}")
    if report.get("r2"):
        lines.append(f"r2  A: {report['r2']['arousal']:.3f}  V: {report['r2']['valence']:.3f}")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# experiments


def run_experiment(dataset: LabeledDataset, classifier: str | Callable = "svm", reps: int = 20,
                   base_seed: int = 0, *, feature_kind: str = "", schedule=None,
                   split_spec: SplitSpec = SplitSpec(), **hyper) -> EvalReport:
    """Monte-Carlo cross-validation: ``reps`` stratified re-splits, train, score on test.

    ``classifier`` is a kind name (see :func:`make_classifier`) or a callable
    ``(n_classes, seed) -> model`` with ``fit``/``predict``.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if dataset.features is None:
        raise ValueError("dataset carries no features")
    k = len(dataset.classes)
    pooled = ConfusionMatrix(np.zeros((k, k), dtype=np.int64), dataset.classes)
    accs, f1s = [], []
    for r in range(reps):
        seed = base_seed + r
        train, test, val = split(dataset, SplitSpec(split_spec.train, split_spec.test, split_spec.val,
                                                    split_spec.stratified, seed))
        if callable(classifier):
            model = classifier(k, seed)
        else:
            model = make_classifier(classifier, k, seed=seed, schedule=schedule, **hyper)
        model.fit(train.features, train.labels, val.features, val.labels)
        cm = confusion(test.labels, model.predict(test.features), dataset.classes)
        pooled = pooled + cm
        m = precision_recall_f1(cm)
        accs.append(m["accuracy"])
        f1s.append(m["weighted"]["f1"])
        log.info("rep %d/%d: accuracy %.4f", r + 1, reps, m["accuracy"])
    name = classifier if isinstance(classifier, str) else getattr(classifier, "__name__", "custom")
    return EvalReport(dataset.kind, feature_kind, name, list(dataset.classes), reps, pooled, accs, f1s)


def ridge_fit(X, Y, lam: float = 1.0):
    """Ridge regression on standardized features with an unpenalized intercept."""
    mu, sd = X.mean(axis=0), X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    Xs = (X - mu) / sd
    y_mu = Y.mean(axis=0)
    A = Xs.T @ Xs + lam * np.eye(X.shape[1])
    W = np.linalg.lstsq(A, Xs.T @ (Y - y_mu), rcond=None)[0]
    return lambda Z: ((np.asarray(Z) - mu) / sd) @ W + y_mu


def run_regression_experiment(dataset: LabeledDataset, reps: int = 20, base_seed: int = 0,
                              regressor: str = "ridge", lam: float = 1.0,
                              split_spec: SplitSpec = SplitSpec(stratified=False)) -> tuple[float, float]:
    """Mean test-split r2 over ``reps`` random splits, returned as (arousal, valence)."""
    if dataset.targets is None:
        raise ValueError("dataset has no continuous (arousal, valence) targets")
    if regressor not in ("ridge", "linear"):
        raise ValueError(f"unknown regressor {regressor!r}")
    X = dataset.features
    X = X.mean(axis=1) if X.ndim == 3 else X
    Y = dataset.targets
    scores = []
    for r in range(reps):
        tr, te, _ = split_indices(np.zeros(len(X)), SplitSpec(split_spec.train, split_spec.test, split_spec.val,
                                                              False, base_seed + r))
        predict = ridge_fit(X[tr], Y[tr], lam if regressor == "ridge" else 0.0)
        P = predict(X[te])
        scores.append((r2(Y[te, 0], P[:, 0]), r2(Y[te, 1], P[:, 1])))
    a, v = np.mean(scores, axis=0)
    return float(a), float(v)
