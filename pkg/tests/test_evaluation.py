import numpy as np
import pytest

from mertk.datasets import LabeledDataset
from mertk.errors import DimensionMismatch, TooSmall, UnknownLabel, ZeroVariance
from mertk.evaluation import (
    SplitSpec,
    confusion,
    precision_recall_f1,
    r2,
    render_table,
    ridge_fit,
    run_experiment,
    run_regression_experiment,
    split,
    split_indices,
)


def test_split_sizes_and_partition():
    labels = np.repeat(np.arange(4), [225, 225, 225, 225])
    tr, te, va = split_indices(labels, SplitSpec(seed=3))
    assert len(te) == len(va) == 90 and len(tr) == 720
    assert len(np.intersect1d(tr, te)) == len(np.intersect1d(tr, va)) == len(np.intersect1d(te, va)) == 0
    assert len(np.union1d(np.union1d(tr, te), va)) == 900
    for part in (te, va):
        counts = np.bincount(labels[part])
        assert set(counts) == {22, 23} and counts.sum() == 90


def test_stratified_uneven_classes_stay_within_one():
    labels = np.repeat(np.arange(4), [52, 45, 31, 34])
    _, te, va = split_indices(labels, SplitSpec(seed=0))
    assert len(te) == len(va) == 16  # floor(16.2 + 0.5)
    for part in (te, va):
        counts = np.bincount(labels[part], minlength=4)
        assert np.all(np.abs(counts - np.array([52, 45, 31, 34]) * 0.1) < 1)


def test_split_is_seeded():
    labels = np.repeat(np.arange(3), 20)
    a = split_indices(labels, SplitSpec(seed=5))
    b = split_indices(labels, SplitSpec(seed=5))
    c = split_indices(labels, SplitSpec(seed=6))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not np.array_equal(a[1], c[1])


def test_split_errors():
    with pytest.raises(TooSmall):
        split_indices(np.zeros(9), SplitSpec())
    with pytest.raises(ValueError):
        SplitSpec(train=0.5, test=0.1, val=0.1)


def test_unstratified_split_of_dataset():
    ds = LabeledDataset("q4audio", "quadrant4", [f"c{i:02d}" for i in range(20)], np.arange(20) % 4)
    tr, te, va = split(ds, SplitSpec(stratified=False, seed=1))
    assert len(tr) + len(te) + len(va) == 20 and len(te) == 2


def test_confusion_counts_and_errors():
    cm = confusion([0, 0, 1, 2], [0, 1, 1, 0], ["a", "b", "c"])
    np.testing.assert_array_equal(cm.counts, [[1, 1, 0], [0, 1, 0], [1, 0, 0]])
    assert cm.accuracy == 0.5 and cm.total == 4
    with pytest.raises(UnknownLabel):
        confusion([0, 3], [0, 0], ["a", "b"])
    with pytest.raises(DimensionMismatch):
        confusion([0, 1], [0], ["a", "b"])


def test_zero_denominators_give_zero():
    m = precision_recall_f1(confusion([0, 0, 1], [0, 0, 0], ["a", "b", "c"]))
    assert m["precision"][1] == 0 and m["recall"][2] == 0 and m["f1"][2] == 0


def test_r2_against_definition(rng):
    y = rng.standard_normal(30)
    p = y + 0.3 * rng.standard_normal(30)
    assert r2(y, p) == pytest.approx(1 - ((y - p) ** 2).sum() / ((y - y.mean()) ** 2).sum(), rel=1e-14)
    assert r2(y, y) == 1.0
    assert r2(y, np.full(30, y.mean())) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ZeroVariance):
        r2(np.ones(5), np.zeros(5))


def test_ridge_with_no_penalty_is_least_squares(rng):
    X = rng.standard_normal((50, 3))
    Y = X @ np.array([[1.0, -2.0], [0.5, 0.0], [0.0, 3.0]]) + 4.0
    predict = ridge_fit(X, Y, lam=0.0)
    np.testing.assert_allclose(predict(X), Y, atol=1e-10)
    shrunk = ridge_fit(X, Y, lam=1e6)
    assert np.abs(shrunk(X) - Y.mean(axis=0)).max() < 0.1


def test_regression_experiment_recovers_linear_targets(rng):
    X = rng.standard_normal((200, 5))
    Y = np.stack([X[:, 0] + 0.1 * rng.standard_normal(200), -X[:, 1] + 0.1 * rng.standard_normal(200)], axis=1)
    ds = LabeledDataset("emomusic", "quadrant4", [f"c{i:03d}" for i in range(200)], np.zeros(200, int),
                        targets=Y, features=X)
    a, v = run_regression_experiment(ds, reps=5)
    assert a > 0.95 and v > 0.95


def test_run_experiment_report_and_table(rng):
    X = np.concatenate([rng.standard_normal((20, 3)) + 6 * k for k in range(4)])
    y = np.repeat(np.arange(4), 20)
    ds = LabeledDataset("q4audio", "quadrant4", [f"c{i:03d}" for i in range(80)], y, features=X)
    rep = run_experiment(ds, "nb", reps=3, feature_kind="toy")
    d = rep.to_dict()
    assert d["reps"] == 3 and len(d["accuracy"]["per_rep"]) == 3
    assert sum(sum(r) for r in d["pooled"]["confusion"]) == 3 * 8
    table = render_table(d).splitlines()
    assert table[0].split() == ["q4audio", "Precision", "Recall", "F1-score", "Support"]
    assert [line.split()[0] for line in table[1:5]] == ["Q1", "Q2", "Q3", "Q4"]
    assert table[5].startswith("Accuracy") and table[6].startswith("Weighted avg")
    assert table[1].split()[1] == f"{d['pooled']['per_class']['Q1']['precision']:.2f}"

    calls = []

    def factory(n_classes, seed):
        calls.append(seed)
        from mertk.classifiers import make_classifier
        return make_classifier("nb", n_classes)

    run_experiment(ds, factory, reps=2, base_seed=10)
    assert calls == [10, 11]
