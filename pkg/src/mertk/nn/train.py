"""Mini-batch Adam training with optional early stopping."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import EmptyDataset, NonFiniteLoss
from .layers import Sequential
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainSchedule:
    max_epochs: int = 1000
    batch_size: int = 32
    patience: int | None = None
    monitor: str = "val_loss"
    seed: int = 0
    lr: float = 0.001

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")
        if self.patience is not None and not (0 <= self.patience < self.max_epochs):
            raise ValueError("patience must be in [0, max_epochs)")
        if self.monitor not in ("val_loss", "val_acc"):
            raise ValueError(f"unknown monitor {self.monitor!r}")


def evaluate(net: Sequential, X, y) -> tuple[float, float]:
    """(mean CCE loss, accuracy) of clip-level predictions."""
    probs = net.predict_proba(X)
    p_true = np.maximum(probs[np.arange(len(y)), y], 1e-12)
    return float(-np.log(p_true).mean()), float((probs.argmax(axis=1) == y).mean())


def _score(entry, monitor):
    # larger is better
    return -entry["val_loss"] if monitor == "val_loss" else entry["val_acc"]


def fit(net: Sequential, X, y, X_val=None, y_val=None, schedule: TrainSchedule = TrainSchedule()):
    """Train ``net`` in place and return ``(net, history)``.

    ``history`` holds one dict per completed epoch (``epoch``, ``loss`` and,
    when a validation set is given, ``val_loss``/``val_acc``). With
    ``patience`` set, the monitored value before the first epoch is the
    baseline; training stops once ``patience`` consecutive epochs fail to
    improve on the best value seen, and the best parameters are restored.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise EmptyDataset("empty training set")
    has_val = X_val is not None and len(X_val) > 0
    if schedule.patience is not None and not has_val:
        raise EmptyDataset("early stopping needs a non-empty validation set")
    if has_val:
        X_val = np.asarray(X_val, dtype=np.float64)
        y_val = np.asarray(y_val, dtype=np.int64)

    state = AdamState(lr=schedule.lr)
    history: list[dict] = []
    best_state = best_score = None
    if schedule.patience is not None:
        vl, va = evaluate(net, X_val, y_val)
        best_score = _score({"val_loss": vl, "val_acc": va}, schedule.monitor)
        best_state = net.state_dict()
    wait = 0

    for epoch in range(1, schedule.max_epochs + 1):
        order = np.random.default_rng([schedule.seed, epoch]).permutation(len(X))
        total = 0.0
        for s in range(0, len(X), schedule.batch_size):
            idx = order[s:s + schedule.batch_size]
            loss = net.loss_and_grad(X[idx], y[idx])
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss became {loss} at epoch {epoch}")
            total += loss * len(idx)
            adam_step(net.parameters(), net.gradients(), state)
        entry = {"epoch": epoch, "loss": total / len(X)}
        if has_val:
            entry["val_loss"], entry["val_acc"] = evaluate(net, X_val, y_val)
        history.append(entry)

        if schedule.patience is not None:
            score = _score(entry, schedule.monitor)
            if score > best_score:
                best_score, best_state, wait = score, net.state_dict(), 0
            else:
                wait += 1
                if wait >= max(schedule.patience, 1):
                    log.debug("early stop at epoch %d", epoch)
                    break
    if best_state is not None:
        net.load_state_dict(best_state)
    return net, history
