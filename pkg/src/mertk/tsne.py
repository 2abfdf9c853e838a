"""Exact t-SNE (O(n^2)) for embedding visualisation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CalibrationFailure

PERPLEXITY_TOL = 1e-5


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    output_dims: int = 2
    iters: int = 1000
    learning_rate: float = 200.0
    momentum: float = 0.5
    final_momentum: float = 0.8
    momentum_switch: int = 250
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    min_gain: float = 0.01
    seed: int = 0

    def validate(self, n: int) -> None:
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if not 1 < self.perplexity < n / 3:
            raise ValueError(f"perplexity {self.perplexity} must lie in (1, n/3) for n={n}")


@dataclass(frozen=True)
class TsneResult:
    coords: np.ndarray
    final_kl: float
    initial_kl: float
    config: TsneConfig


def _row_probs(d, beta):
    p = np.exp(-(d - d.min()) * beta)
    s = p.sum()
    p /= s
    # entropy in nats; the shift by d.min() cancels in the normalisation
    h = float(beta * (d * p).sum() - beta * d.min() + np.log(s))
    return p, h


def perplexity_calibration(sq_distances, perplexity: float = 30.0, tol: float = PERPLEXITY_TOL,
                           max_steps: int = 200) -> np.ndarray:
    """Conditional affinities P(j|i) with each row's perplexity matched to ``perplexity``.

    ``sq_distances`` is the symmetric [n, n] matrix of squared distances. For
    each row a bisection on the Gaussian precision drives 2**H(P_i) to the
    target; rows sum to 1 and the diagonal is 0.
    """
    D = np.asarray(sq_distances, dtype=np.float64)
    n = len(D)
    if D.shape != (n, n) or np.any(D < 0):
        raise ValueError("expected a non-negative square distance matrix")
    target = np.log(perplexity)
    P = np.zeros((n, n))
    for i in range(n):
        d = np.delete(D[i], i)
        if np.ptp(d) == 0:
            # constant row: the only attainable perplexity is n - 1
            if abs((n - 1) - perplexity) > tol:
                raise CalibrationFailure(f"row {i}: all distances equal, perplexity is fixed at {n - 1}")
            P[i, np.arange(n) != i] = 1.0 / (n - 1)
            continue
        beta, lo, hi = 1.0 / max(np.median(d[d > 0]) if np.any(d > 0) else 1.0, 1e-12), 0.0, np.inf
        for _ in range(max_steps):
            p, h = _row_probs(d, beta)
            if abs(np.exp(h) - perplexity) < tol:
                break
            if h > target:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (beta + lo) / 2.0
        else:
            raise CalibrationFailure(f"row {i}: perplexity {np.exp(h):.6f} after {max_steps} steps")
        P[i, np.arange(n) != i] = p
    return P


def row_perplexities(P) -> np.ndarray:
    """2**H of every row of a conditional-affinity matrix (entropy in bits)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        H = -np.where(P > 0, P * np.log2(P), 0.0).sum(axis=1)
    return 2.0 ** H


def joint_probabilities(X, perplexity: float) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    sd = X.std(axis=0)
    X = (X - X.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    sq = (X * X).sum(axis=1)
    D = np.maximum(sq[:, None] + sq[None, :] - 2.0 * X @ X.T, 0.0)
    np.fill_diagonal(D, 0.0)
    P = perplexity_calibration(D, perplexity)
    P = (P + P.T) / (2.0 * len(X))
    return np.maximum(P, 1e-300)


def _q_and_kl(Y, P):
    sq = (Y * Y).sum(axis=1)
    num = 1.0 / (1.0 + np.maximum(sq[:, None] + sq[None, :] - 2.0 * Y @ Y.T, 0.0))
    np.fill_diagonal(num, 0.0)
    Q = np.maximum(num / num.sum(), 1e-300)
    mask = ~np.eye(len(Y), dtype=bool)
    kl = float((P[mask] * np.log(P[mask] / Q[mask])).sum())
    return num, Q, kl


def tsne(X, config: TsneConfig = TsneConfig()) -> TsneResult:
    """Embed the rows of X in ``config.output_dims`` dimensions.

    Rows are put in a canonical (lexicographic) order before the seeded
    initialisation, so permuting the input permutes the output identically.
    """
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    if n < 10:
        raise ValueError("t-SNE needs at least 10 points")
    config.validate(n)
    order = np.lexsort(X.T[::-1])
    Xc = X[order]
    P = joint_probabilities(Xc, config.perplexity)
    np.fill_diagonal(P, 0.0)

    rng = np.random.default_rng(config.seed)
    Y = 1e-4 * rng.standard_normal((n, config.output_dims))
    _, _, initial_kl = _q_and_kl(Y, P)
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    for it in range(config.iters):
        exag = config.early_exaggeration if it < config.exaggeration_iters else 1.0
        momentum = config.momentum if it < config.momentum_switch else config.final_momentum
        num, Q, _ = _q_and_kl(Y, P)
        W = (exag * P - Q) * num
        grad = 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)
        gains = np.where(np.sign(grad) != np.sign(update), gains + 0.2, gains * 0.8)
        gains = np.maximum(gains, config.min_gain)
        update = momentum * update - config.learning_rate * gains * grad
        Y = Y + update
        Y = Y - Y.mean(axis=0)
    _, _, final_kl = _q_and_kl(Y, P)

    coords = np.empty_like(Y)
    coords[order] = Y
    return TsneResult(coords, final_kl, initial_kl, config)
