"""Trainable layers and a minimal sequential container."""

from __future__ import annotations

import numpy as np

from . import ops


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    """Base layer. ``params`` and ``grads`` share keys; stateless layers leave both empty."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def init(self, rng):
        pass

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError


class Dense(Layer):
    """Affine map on the last axis (applied pointwise over any leading axes)."""

    def __init__(self, n_in, n_out):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out

    def init(self, rng):
        self.params = {"W": glorot_uniform(rng, (self.n_in, self.n_out), self.n_in, self.n_out),
                       "b": np.zeros(self.n_out)}

    def forward(self, x):
        self._x = x
        return ops.dense_forward(x, self.params["W"], self.params["b"])

    def backward(self, dy):
        dx, dW, db = ops.dense_backward(dy, self._x, self.params["W"])
        self.grads = {"W": dW, "b": db}
        return dx


class Conv1D(Layer):
    def __init__(self, kernel_size, c_in, c_out):
        super().__init__()
        self.k, self.c_in, self.c_out = kernel_size, c_in, c_out

    def init(self, rng):
        shape = (self.k, self.c_in, self.c_out)
        self.params = {"K": glorot_uniform(rng, shape, self.k * self.c_in, self.k * self.c_out),
                       "b": np.zeros(self.c_out)}

    def forward(self, x):
        self._x = x
        return ops.conv1d_forward(x, self.params["K"], self.params["b"])

    def backward(self, dy):
        dx, dK, db = ops.conv1d_backward(dy, self._x, self.params["K"])
        self.grads = {"K": dK, "b": db}
        return dx


class MaxPool1D(Layer):
    def __init__(self, pool, stride=None):
        super().__init__()
        self.pool, self.stride = pool, stride

    def forward(self, x):
        self._shape = x.shape
        y, self._idx = ops.maxpool1d_forward(x, self.pool, self.stride)
        return y

    def backward(self, dy):
        return ops.maxpool1d_backward(dy, self._idx, self._shape)


class ReLU(Layer):
    def forward(self, x):
        self._x = x
        return ops.relu(x)

    def backward(self, dy):
        return ops.relu_backward(dy, self._x)


class Reshape(Layer):
    """Reshape everything after the batch axis."""

    def __init__(self, shape):
        super().__init__()
        self.shape = tuple(shape)

    def forward(self, x):
        self._in = x.shape
        return x.reshape((x.shape[0],) + self.shape)

    def backward(self, dy):
        return dy.reshape(self._in)


class Flatten(Reshape):
    def __init__(self):
        super().__init__((-1,))


class LSTM(Layer):
    """Single LSTM layer returning the full hidden sequence [n, T, hidden]."""

    def __init__(self, n_in, hidden, forget_bias=1.0):
        super().__init__()
        self.n_in, self.hidden, self.forget_bias = n_in, hidden, forget_bias

    def init(self, rng):
        h = self.hidden
        scale = 1.0 / np.sqrt(self.n_in + h)
        b = np.zeros(4 * h)
        b[h:2 * h] = self.forget_bias
        self.params = {"Wx": rng.uniform(-scale, scale, (self.n_in, 4 * h)),
                       "Wh": rng.uniform(-scale, scale, (h, 4 * h)),
                       "b": b}

    def forward(self, x):
        y, self._cache = ops.lstm_forward(x, self.params["Wx"], self.params["Wh"], self.params["b"])
        return y

    def backward(self, dy):
        dx, dWx, dWh, db = ops.lstm_backward(dy, self._cache)
        self.grads = {"Wx": dWx, "Wh": dWh, "b": db}
        return dx


class Sequential:
    """A stack of layers producing logits; the loss is fused softmax + CCE on the last axis."""

    def __init__(self, layers):
        self.layers = list(layers)

    def init(self, seed: int):
        rng = np.random.default_rng(seed)
        for layer in self.layers:
            layer.init(rng)
        return self

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dlogits):
        for layer in reversed(self.layers):
            dlogits = layer.backward(dlogits)
        return dlogits

    def parameters(self) -> dict[str, np.ndarray]:
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.params.items()}

    def gradients(self) -> dict[str, np.ndarray]:
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.grads.items()}

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.parameters().items()}

    def load_state_dict(self, state):
        for i, layer in enumerate(self.layers):
            for k in layer.params:
                layer.params[k] = np.array(state[f"{i}.{k}"], dtype=np.float64)

    def loss_and_grad(self, x, labels):
        """Forward + backward on one batch. Sequence logits [n, T, K] share the clip label."""
        logits = self.forward(x)
        labels = np.asarray(labels)
        if logits.ndim == 3:
            labels = np.broadcast_to(labels[:, None], logits.shape[:2])
        loss, _, dlogits = ops.softmax_cce(logits, labels)
        self.backward(dlogits)
        return loss

    def predict_proba(self, x, batch_size: int = 256):
        out = []
        for s in range(0, len(x), batch_size):
            p = ops.softmax(self.forward(x[s:s + batch_size]))
            out.append(p.mean(axis=1) if p.ndim == 3 else p)
        return np.concatenate(out)


def build_mlp(n_in, n_classes, hidden=(512, 512)):
    layers = []
    for h in hidden:
        layers += [Dense(n_in, h), ReLU()]
        n_in = h
    layers.append(Dense(n_in, n_classes))
    return Sequential(layers)


def build_cnn(length, n_classes, filters=64, kernel_size=3, pool=8):
    """Four 64-filter 1-D convolutions with one max-pool after the first, then a softmax head.

    The input vector is treated as a single-channel sequence of ``length`` samples.
    """
    L = length - kernel_size + 1
    layers = [Reshape((length, 1)), Conv1D(kernel_size, 1, filters), ReLU()]
    if L >= pool:
        layers.append(MaxPool1D(pool))
        L = (L - pool) // pool + 1
    for _ in range(3):
        layers += [Conv1D(kernel_size, filters, filters), ReLU()]
        L -= kernel_size - 1
    if L < 1:
        raise ValueError(f"input length {length} too short for the CNN")
    layers += [Flatten(), Dense(L * filters, n_classes)]
    return Sequential(layers)


def build_rnn(n_in, n_classes, hidden=128):
    """LSTM followed by a pointwise (per time step) softmax head."""
    return Sequential([LSTM(n_in, hidden), Dense(hidden, n_classes)])
