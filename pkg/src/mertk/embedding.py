"""Inference-only L3-Net and VGGish audio embedding networks.

A network is a declarative :class:`NetworkDefinition` (ordered layer specs
plus an input shape). :func:`load_weights` binds it to parameters taken from a
``MERT`` container or drawn from a seeded generator, and :func:`forward` runs
a single Mel window through the bound model.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import container
from .dsp import (
    AudioClip,
    Frontend,
    MelSpectrogram,
    VGGISH_FRONTEND,
    frame_windows,
    l3net_frontend,
    log_mel_spectrogram,
    resample,
)
from .errors import EmptySequence, MissingTensor, ShapeMismatch

BN_EPS = 1e-5
LAYER_KINDS = ("conv2d", "batchnorm_inference", "relu", "maxpool2d", "flatten", "dense", "global_maxpool")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    name: str = ""
    kernel: tuple[int, int] = (0, 0)
    in_channels: int = 0
    out_channels: int = 0
    pool: tuple[int, int] = (0, 0)
    units: int = 0
    in_units: int = 0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")

    @property
    def parameterized(self) -> bool:
        return self.kind in ("conv2d", "batchnorm_inference", "dense")

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        if self.kind == "conv2d":
            kh, kw = self.kernel
            return {"kernel": (kh, kw, self.in_channels, self.out_channels),
                    "bias": (self.out_channels,)}
        if self.kind == "dense":
            return {"kernel": (self.in_units, self.units), "bias": (self.units,)}
        if self.kind == "batchnorm_inference":
            c = (self.out_channels,)
            return {"gamma": c, "beta": c, "moving_mean": c, "moving_variance": c}
        return {}


def conv(name, cin, cout, k=(3, 3)):
    return LayerSpec("conv2d", name, kernel=k, in_channels=cin, out_channels=cout)


def batchnorm(name, channels):
    return LayerSpec("batchnorm_inference", name, out_channels=channels)


def relu():
    return LayerSpec("relu")


def maxpool(pool):
    return LayerSpec("maxpool2d", pool=tuple(pool))


def dense(name, n_in, n_out):
    return LayerSpec("dense", name, in_units=n_in, units=n_out)


def propagate_shapes(layers: Sequence[LayerSpec], input_shape) -> list[tuple[int, ...]]:
    """Shape after every layer, starting from a single-channel [H, W] input."""
    shape: tuple[int, ...] = (int(input_shape[0]), int(input_shape[1]), 1)
    shapes = []
    for i, layer in enumerate(layers):
        where = f"layer {i} ({layer.kind} {layer.name})"
        if layer.kind == "conv2d":
            if len(shape) != 3 or shape[2] != layer.in_channels:
                raise ShapeMismatch(f"{where}: expects {layer.in_channels} channels, got shape {shape}")
            shape = (shape[0], shape[1], layer.out_channels)
        elif layer.kind == "batchnorm_inference":
            if shape[-1] != layer.out_channels:
                raise ShapeMismatch(f"{where}: expects {layer.out_channels} channels, got shape {shape}")
        elif layer.kind == "maxpool2d":
            ph, pw = layer.pool
            if len(shape) != 3 or shape[0] < ph or shape[1] < pw:
                raise ShapeMismatch(f"{where}: pool {layer.pool} larger than input {shape}")
            shape = (shape[0] // ph, shape[1] // pw, shape[2])
        elif layer.kind == "global_maxpool":
            shape = (shape[-1],)
        elif layer.kind == "flatten":
            shape = (int(np.prod(shape)),)
        elif layer.kind == "dense":
            if shape != (layer.in_units,):
                raise ShapeMismatch(f"{where}: expects ({layer.in_units},), got {shape}")
            shape = (layer.units,)
        shapes.append(shape)
    return shapes


@dataclass(frozen=True)
class NetworkDefinition:
    """Layer graph for a single-channel 2-D input.

    ``input_layout`` says how a [n_mels x n_frames] Mel spectrogram maps onto
    ``input_shape``: ``"mel_time"`` uses it as is, ``"time_mel"`` transposes.
    """

    name: str
    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, int]
    output_dim: int
    input_layout: str = "mel_time"
    frontend: Frontend | None = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        final = propagate_shapes(self.layers, self.input_shape)[-1]
        if final != (self.output_dim,):
            raise ShapeMismatch(f"{self.name}: layers end in shape {final}, declared output_dim {self.output_dim}")
        names = [l.name for l in self.layers if l.parameterized]
        if len(set(names)) != len(names):
            raise ValueError(f"{self.name}: parameterized layer names must be unique")

    @property
    def parameterized_layers(self) -> list[LayerSpec]:
        return [l for l in self.layers if l.parameterized]

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return {f"{l.name}/{k}": s for l in self.parameterized_layers for k, s in l.param_shapes().items()}


def build_l3net(embedding_size: int = 512, n_mels: int = 256) -> NetworkDefinition:
    """L3-Net audio subnetwork: four conv blocks, BN + ReLU after every conv."""
    if embedding_size not in (512, 6144):
        raise ValueError("embedding_size must be 512 or 6144")
    if n_mels not in (128, 256):
        raise ValueError("n_mels must be 128 or 256")
    frontend = l3net_frontend(n_mels)
    n_frames = frontend.config.n_frames(int(round(frontend.window_s * frontend.sample_rate)))
    layers: list[LayerSpec] = []
    cin = 1
    for block, cout in enumerate((64, 128, 256, 512), start=1):
        for j in (1, 2):
            name = f"conv{block}_{j}"
            layers += [conv(name, cin, cout), batchnorm(f"bn{block}_{j}", cout), relu()]
            cin = cout
        if block < 4:
            layers.append(maxpool((2, 2)))
    if embedding_size == 512:
        layers.append(LayerSpec("global_maxpool"))
    else:
        h, w, _ = propagate_shapes(layers, (n_mels, n_frames))[-1]
        layers += [maxpool((h // 4, w // 3)), LayerSpec("flatten")]
    return NetworkDefinition(f"l3net{embedding_size}_mel{n_mels}", tuple(layers),
                             (n_mels, n_frames), embedding_size, "mel_time", frontend)


def build_vggish() -> NetworkDefinition:
    """VGGish: VGG-style conv stack then 4096-4096-128 fully connected layers."""
    layers = [
        conv("conv1", 1, 64), relu(), maxpool((2, 2)),
        conv("conv2", 64, 128), relu(), maxpool((2, 2)),
        conv("conv3_1", 128, 256), relu(), conv("conv3_2", 256, 256), relu(), maxpool((2, 2)),
        conv("conv4_1", 256, 512), relu(), conv("conv4_2", 512, 512), relu(), maxpool((2, 2)),
        LayerSpec("flatten"),
        dense("fc1_1", 6 * 4 * 512, 4096), relu(),
        dense("fc1_2", 4096, 4096), relu(),
        dense("fc2", 4096, 128),
    ]
    return NetworkDefinition("vggish", tuple(layers), (96, 64), 128, "time_mel", VGGISH_FRONTEND)


def build_network(feature_kind: str) -> NetworkDefinition:
    if feature_kind == "l3net512":
        return build_l3net(512)
    if feature_kind == "l3net6144":
        return build_l3net(6144)
    if feature_kind == "vggish128":
        return build_vggish()
    raise ValueError(f"no embedding network for feature kind {feature_kind!r}")


# --------------------------------------------------------------------------
# weights


@dataclass(frozen=True)
class WeightBundle:
    tensors: dict[str, np.ndarray]
    provenance: str  # "imported" or "random(<seed>)"


@dataclass(frozen=True)
class BoundModel:
    definition: NetworkDefinition
    weights: WeightBundle
    dtype: np.dtype = field(default=np.dtype(np.float32))

    def param(self, layer: LayerSpec, key: str) -> np.ndarray:
        return self.weights.tensors[f"{layer.name}/{key}"]


def random_weights(definition: NetworkDefinition, seed: int, dtype=np.float32) -> WeightBundle:
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in definition.param_shapes().items():
        key = name.rsplit("/", 1)[1]
        if key == "kernel":
            t = rng.uniform(-0.05, 0.05, size=shape)
        elif key in ("gamma", "moving_variance"):
            t = np.ones(shape)
        else:
            t = np.zeros(shape)
        tensors[name] = t.astype(dtype)
    return WeightBundle(tensors, f"random({seed})")


def validate_weights(definition: NetworkDefinition, tensors: dict[str, np.ndarray]) -> None:
    for name, shape in definition.param_shapes().items():
        if name not in tensors:
            raise MissingTensor(f"weights lack tensor {name!r}")
        actual = tuple(tensors[name].shape)
        if actual != tuple(shape):
            raise ShapeMismatch(f"tensor {name!r}: expected shape {'x'.join(map(str, shape))}, "
                                f"got {'x'.join(map(str, actual))}")
        if name.endswith("/moving_variance") and np.any(tensors[name] <= 0):
            raise ValueError(f"tensor {name!r} has non-positive variances")


def load_weights(definition: NetworkDefinition, source, *, dtype=np.float32) -> BoundModel:
    """Bind ``definition`` to weights.

    ``source`` is an int seed (random mode), a path to a ``MERT`` container,
    a :class:`WeightBundle` or a plain name -> array mapping.
    """
    if isinstance(source, (int, np.integer)) and not isinstance(source, bool):
        bundle = random_weights(definition, int(source), dtype)
    elif isinstance(source, WeightBundle):
        bundle = source
    elif isinstance(source, dict):
        bundle = WeightBundle(dict(source), "imported")
    elif isinstance(source, (str, Path)):
        bundle = WeightBundle(container.read_container(source), "imported")
    else:
        raise TypeError(f"unsupported weight source {type(source).__name__}")
    validate_weights(definition, bundle.tensors)
    dt = np.result_type(*bundle.tensors.values()) if bundle.tensors else np.dtype(dtype)
    tensors = {k: np.asarray(v, dtype=dt) for k, v in bundle.tensors.items()}
    for t in tensors.values():
        t.setflags(write=False)
    return BoundModel(definition, WeightBundle(tensors, bundle.provenance), np.dtype(dt))


def save_weights(model: BoundModel, path) -> None:
    container.write_container(path, model.weights.tensors)


# --------------------------------------------------------------------------
# inference kernels; activations are [N, H, W, C]


def conv2d_same(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Stride-1 cross-correlation with zero "same" padding."""
    kh, kw, cin, cout = kernel.shape
    n, h, w, _ = x.shape
    top, left = (kh - 1) // 2, (kw - 1) // 2
    xp = np.pad(x, ((0, 0), (top, kh - 1 - top), (left, kw - 1 - left), (0, 0)))
    out = np.zeros((n * h * w, cout), dtype=np.result_type(x, kernel))
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, i:i + h, j:j + w, :].reshape(-1, cin)
            out += patch @ kernel[i, j]
    out += bias
    return out.reshape(n, h, w, cout)


def maxpool2d(x: np.ndarray, pool) -> np.ndarray:
    ph, pw = pool
    n, h, w, c = x.shape
    ho, wo = h // ph, w // pw
    x = x[:, :ho * ph, :wo * pw, :].reshape(n, ho, ph, wo, pw, c)
    return x.max(axis=(2, 4))


def _apply(model: BoundModel, layer: LayerSpec, x: np.ndarray) -> np.ndarray:
    if layer.kind == "conv2d":
        return conv2d_same(x, model.param(layer, "kernel"), model.param(layer, "bias"))
    if layer.kind == "batchnorm_inference":
        scale = model.param(layer, "gamma") / np.sqrt(model.param(layer, "moving_variance") + BN_EPS)
        return (x - model.param(layer, "moving_mean")) * scale + model.param(layer, "beta")
    if layer.kind == "relu":
        return np.maximum(x, 0)
    if layer.kind == "maxpool2d":
        return maxpool2d(x, layer.pool)
    if layer.kind == "global_maxpool":
        return x.max(axis=(1, 2))
    if layer.kind == "flatten":
        return x.reshape(x.shape[0], -1)
    if layer.kind == "dense":
        return x @ model.param(layer, "kernel") + model.param(layer, "bias")
    raise AssertionError(layer.kind)


def _as_input(model: BoundModel, mel) -> np.ndarray:
    values = mel.values if isinstance(mel, MelSpectrogram) else np.asarray(mel)
    if model.definition.input_layout == "time_mel":
        values = values.T
    if values.shape != model.definition.input_shape:
        raise ShapeMismatch(f"{model.definition.name} expects input {model.definition.input_shape}, "
                            f"got {values.shape} after layout '{model.definition.input_layout}'")
    return values


def forward_batch(model: BoundModel, mels: Sequence) -> np.ndarray:
    """Embeddings for several windows at once, shape [len(mels), output_dim]."""
    x = np.stack([_as_input(model, m) for m in mels]).astype(model.dtype)[..., None]
    for layer in model.definition.layers:
        x = _apply(model, layer, x)
    return x


def forward(model: BoundModel, mel) -> np.ndarray:
    """Embedding of one Mel window (a :class:`MelSpectrogram` or raw [n_mels x n_frames] array)."""
    return forward_batch(model, [mel])[0]


# --------------------------------------------------------------------------
# clip-level embedding


@dataclass(frozen=True)
class EmbeddingSequence:
    frames: np.ndarray  # [T, d], chronological
    hop_s: float
    clip_id: str = ""

    def __len__(self):
        return len(self.frames)


def embed_clip(clip: AudioClip, model: BoundModel, window_s: float | None = None,
               hop_s: float = 0.1, batch_size: int = 8) -> EmbeddingSequence:
    """Slide a window over the clip and embed every window in order."""
    frontend = model.definition.frontend
    if frontend is None:
        raise ValueError(f"{model.definition.name} has no audio front-end")
    window_s = frontend.window_s if window_s is None else window_s
    clip = resample(clip, frontend.sample_rate)
    windows = frame_windows(clip, window_s, hop_s)
    out = []
    for start in range(0, len(windows), batch_size):
        mels = [log_mel_spectrogram(w, frontend.config) for w in windows[start:start + batch_size]]
        out.append(forward_batch(model, mels))
    return EmbeddingSequence(np.concatenate(out).astype(np.float64), hop_s, clip.source_id)


def aggregate(seq, method: str = "mean") -> np.ndarray:
    """Collapse an embedding sequence (or [T, d] array) to one clip-level vector."""
    frames = seq.frames if isinstance(seq, EmbeddingSequence) else np.asarray(seq)
    if len(frames) == 0:
        raise EmptySequence("cannot aggregate an empty embedding sequence")
    if method != "mean":
        raise ValueError(f"unknown aggregation {method!r}")
    return frames.mean(axis=0)
