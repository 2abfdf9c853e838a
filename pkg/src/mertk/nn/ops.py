"""Forward and backward kernels for the trainable layers (float64 numpy).

Backward functions take the upstream gradient plus whatever the forward pass
cached and return gradients in the order (input, *parameters).
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch

PROB_FLOOR = 1e-12


def _check(cond, msg):
    if not cond:
        raise ShapeMismatch(msg)


# dense ---------------------------------------------------------------------

def dense_forward(x, W, b):
    _check(x.shape[-1] == W.shape[0] and b.shape == (W.shape[1],),
           f"dense: x {x.shape}, W {W.shape}, b {b.shape}")
    return x @ W + b


def dense_backward(dy, x, W):
    """Gradients for ``y = x W + b``; leading axes of x are treated as batch."""
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    return dy @ W.T, x2.T @ dy2, dy2.sum(axis=0)


# conv1d (valid padding, stride 1, cross-correlation) -------------------------

def _windows(x, k):
    # [n, L', k, C]
    return np.lib.stride_tricks.sliding_window_view(x, k, axis=1).transpose(0, 1, 3, 2)


def conv1d_forward(x, kernels, bias=None):
    """x [n, L, C_in], kernels [k, C_in, C_out] -> [n, L-k+1, C_out]."""
    k, cin, cout = kernels.shape
    _check(x.ndim == 3 and x.shape[2] == cin, f"conv1d: x {x.shape} vs kernels {kernels.shape}")
    _check(x.shape[1] >= k, f"conv1d: length {x.shape[1]} shorter than kernel {k}")
    y = np.tensordot(_windows(x, k), kernels, axes=([2, 3], [0, 1]))
    if bias is not None:
        y = y + bias
    return y


def conv1d_backward(dy, x, kernels):
    k, cin, cout = kernels.shape
    n, L, _ = x.shape
    dK = np.tensordot(_windows(x, k), dy, axes=([0, 1], [0, 1]))  # [k, C_in, C_out]
    dx = np.zeros_like(x)
    for j in range(k):
        dx[:, j:j + L - k + 1, :] += dy @ kernels[j].T
    return dx, dK, dy.sum(axis=(0, 1))


# maxpool1d -----------------------------------------------------------------

def maxpool1d_forward(x, pool, stride=None):
    """Windowed max over axis 1 of [n, L, C]; returns (y, argmax indices into L).

    Ties resolve to the first index in the window.
    """
    stride = pool if stride is None else stride
    _check(x.ndim == 3 and pool <= x.shape[1], f"maxpool1d: pool {pool} on {x.shape}")
    win = np.lib.stride_tricks.sliding_window_view(x, pool, axis=1)[:, ::stride]  # [n, L', C, pool]
    local = win.argmax(axis=-1)
    y = np.take_along_axis(win, local[..., None], axis=-1)[..., 0]
    idx = local + (np.arange(win.shape[1]) * stride)[None, :, None]
    return y, idx


def maxpool1d_backward(dy, idx, input_shape):
    dx = np.zeros(input_shape)
    n, lo, c = dy.shape
    nn_ = np.broadcast_to(np.arange(n)[:, None, None], dy.shape)
    cc = np.broadcast_to(np.arange(c)[None, None, :], dy.shape)
    np.add.at(dx, (nn_, idx, cc), dy)
    return dx


# relu ----------------------------------------------------------------------

def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(dy, x):
    return dy * (x > 0)


# softmax / cross-entropy ---------------------------------------------------

def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cce_loss(probs, targets):
    """Mean over rows of -log p[true]; ``targets`` one-hot or integer labels.

    p[true] is clamped at 1e-12 so a degenerate prediction gives a large but
    finite loss.
    """
    probs = np.asarray(probs)
    if np.ndim(targets) == probs.ndim:
        p_true = (probs * targets).sum(axis=-1)
    else:
        p_true = np.take_along_axis(probs, np.asarray(targets)[..., None], axis=-1)[..., 0]
    return float(-np.log(np.maximum(p_true, PROB_FLOOR)).mean())


def softmax_cce(logits, labels):
    """Fused softmax + CCE: returns (loss, probs, dL/dlogits)."""
    probs = softmax(logits)
    flat = probs.reshape(-1, probs.shape[-1])
    lab = np.asarray(labels).reshape(-1)
    loss = cce_loss(flat, lab)
    grad = flat.copy()
    grad[np.arange(len(lab)), lab] -= 1.0
    return loss, probs, (grad / len(lab)).reshape(probs.shape)


# LSTM ----------------------------------------------------------------------

def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def lstm_forward(x, Wx, Wh, b):
    """Unrolled LSTM with zero initial state.

    x [n, T, d], Wx [d, 4h], Wh [h, 4h], b [4h]; gate blocks ordered
    (input, forget, cell candidate, output). Returns (h_seq [n, T, h], cache).
    """
    n, T, d = x.shape
    hdim = Wh.shape[0]
    _check(T >= 1, "lstm: empty sequence")
    _check(Wx.shape == (d, 4 * hdim) and Wh.shape == (hdim, 4 * hdim) and b.shape == (4 * hdim,),
           f"lstm: x {x.shape}, Wx {Wx.shape}, Wh {Wh.shape}, b {b.shape}")
    h = np.zeros((n, hdim))
    c = np.zeros((n, hdim))
    xw = x @ Wx + b
    hs, cs, gates = [], [], []
    for t in range(T):
        a = xw[:, t] + h @ Wh
        i = sigmoid(a[:, :hdim])
        f = sigmoid(a[:, hdim:2 * hdim])
        g = np.tanh(a[:, 2 * hdim:3 * hdim])
        o = sigmoid(a[:, 3 * hdim:])
        c = f * c + i * g
        h = o * np.tanh(c)
        hs.append(h)
        cs.append(c)
        gates.append((i, f, g, o))
    h_seq = np.stack(hs, axis=1)
    return h_seq, (x, Wx, Wh, h_seq, np.stack(cs, axis=1), gates)


def lstm_backward(dh_seq, cache):
    """Backpropagation through time; returns (dx, dWx, dWh, db)."""
    x, Wx, Wh, h_seq, c_seq, gates = cache
    n, T, d = x.shape
    hdim = Wh.shape[0]
    dWh = np.zeros_like(Wh)
    da_seq = np.zeros((n, T, 4 * hdim))
    dh_next = np.zeros((n, hdim))
    dc_next = np.zeros((n, hdim))
    for t in reversed(range(T)):
        i, f, g, o = gates[t]
        c = c_seq[:, t]
        c_prev = c_seq[:, t - 1] if t > 0 else np.zeros_like(c)
        dh = dh_seq[:, t] + dh_next
        tc = np.tanh(c)
        do = dh * tc
        dc = dh * o * (1 - tc ** 2) + dc_next
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dc_next = dc * f
        da = np.concatenate([di * i * (1 - i), df * f * (1 - f), dg * (1 - g ** 2), do * o * (1 - o)], axis=1)
        da_seq[:, t] = da
        if t > 0:
            dWh += h_seq[:, t - 1].T @ da
        dh_next = da @ Wh.T
    dx = da_seq @ Wx.T
    dWx = x.reshape(-1, d).T @ da_seq.reshape(-1, 4 * hdim)
    db = da_seq.sum(axis=(0, 1))
    return dx, dWx, dWh, db
