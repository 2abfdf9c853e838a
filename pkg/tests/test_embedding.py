import numpy as np
import pytest

from mertk.dsp import AudioClip
from mertk.embedding import (
    LayerSpec,
    NetworkDefinition,
    WeightBundle,
    aggregate,
    batchnorm,
    build_l3net,
    build_network,
    build_vggish,
    conv,
    dense,
    embed_clip,
    forward,
    forward_batch,
    load_weights,
    maxpool,
    maxpool2d,
    propagate_shapes,
    random_weights,
    relu,
    save_weights,
)
from mertk.errors import EmptySequence, MissingTensor, ShapeMismatch
from oracles import conv2d_same_loops


def tiny_network():
    layers = [conv("c1", 1, 3), batchnorm("bn1", 3), relu(), maxpool((2, 2)),
              conv("c2", 3, 2, k=(2, 3)), LayerSpec("global_maxpool"), dense("fc", 2, 4)]
    return NetworkDefinition("tiny", layers, (6, 8), 4)


def test_propagate_shapes():
    shapes = propagate_shapes(tiny_network().layers, (6, 8))
    assert shapes == [(6, 8, 3), (6, 8, 3), (6, 8, 3), (3, 4, 3), (3, 4, 2), (2,), (4,)]


def test_definition_rejects_inconsistent_layers():
    with pytest.raises(ShapeMismatch):
        NetworkDefinition("bad", [conv("c", 2, 3), LayerSpec("global_maxpool")], (4, 4), 3)
    with pytest.raises(ShapeMismatch):
        NetworkDefinition("bad", [conv("c", 1, 3), LayerSpec("global_maxpool")], (4, 4), 5)
    with pytest.raises(ShapeMismatch):
        NetworkDefinition("bad", [maxpool((8, 8))], (4, 4), 1)


def test_forward_matches_loop_oracle(rng):
    definition = tiny_network()
    tensors = {name: rng.standard_normal(shape) for name, shape in definition.param_shapes().items()}
    tensors["bn1/moving_variance"] = rng.uniform(0.5, 2.0, 3)
    model = load_weights(definition, tensors)
    assert model.dtype == np.float64
    mel = rng.standard_normal((6, 8))

    x = conv2d_same_loops(mel[None, :, :, None], tensors["c1/kernel"], tensors["c1/bias"])
    x = (x - tensors["bn1/moving_mean"]) / np.sqrt(tensors["bn1/moving_variance"] + 1e-5)
    x = np.maximum(x * tensors["bn1/gamma"] + tensors["bn1/beta"], 0)
    pooled = np.empty((1, 3, 4, 3))
    for r in range(3):
        for c in range(4):
            pooled[0, r, c] = x[0, 2 * r:2 * r + 2, 2 * c:2 * c + 2].max(axis=(0, 1))
    x = conv2d_same_loops(pooled, tensors["c2/kernel"], tensors["c2/bias"]).max(axis=(1, 2))
    expected = x[0] @ tensors["fc/kernel"] + tensors["fc/bias"]
    np.testing.assert_allclose(forward(model, mel), expected, rtol=0, atol=1e-12)


def test_batch_equals_single(rng):
    model = load_weights(tiny_network(), 3, dtype=np.float64)
    mels = [rng.standard_normal((6, 8)) for _ in range(3)]
    batch = forward_batch(model, mels)
    for m, row in zip(mels, batch):
        np.testing.assert_allclose(forward(model, m), row, rtol=0, atol=1e-12)


def test_maxpool2d_drops_remainder():
    x = np.arange(5 * 7, dtype=float).reshape(1, 5, 7, 1)
    out = maxpool2d(x, (2, 3))
    assert out.shape == (1, 2, 2, 1)
    assert out[0, 1, 1, 0] == x[0, 3, 5, 0]


def test_random_weights_are_seeded():
    d = tiny_network()
    a, b, c = random_weights(d, 1), random_weights(d, 1), random_weights(d, 2)
    assert a.provenance == "random(1)"
    for k in a.tensors:
        assert a.tensors[k].dtype == np.float32
        np.testing.assert_array_equal(a.tensors[k], b.tensors[k])
    assert not np.array_equal(a.tensors["c1/kernel"], c.tensors["c1/kernel"])
    assert np.all(a.tensors["bn1/gamma"] == 1) and np.all(a.tensors["c1/bias"] == 0)
    assert np.all(np.abs(a.tensors["c1/kernel"]) <= 0.05)


def test_weight_validation():
    d = tiny_network()
    tensors = dict(random_weights(d, 0).tensors)
    del tensors["fc/bias"]
    with pytest.raises(MissingTensor):
        load_weights(d, tensors)
    tensors = dict(random_weights(d, 0).tensors)
    tensors["c2/kernel"] = np.zeros((3, 3, 3, 2))
    with pytest.raises(ShapeMismatch, match="c2/kernel"):
        load_weights(d, tensors)
    with pytest.raises(TypeError):
        load_weights(d, 1.5)


def test_save_and_reload_weights(tmp_path, rng):
    d = tiny_network()
    model = load_weights(d, 7)
    save_weights(model, tmp_path / "w.mert")
    again = load_weights(d, str(tmp_path / "w.mert"))
    assert again.weights.provenance == "imported"
    mel = rng.standard_normal((6, 8))
    np.testing.assert_array_equal(forward(model, mel), forward(again, mel))
    assert isinstance(load_weights(d, WeightBundle(model.weights.tensors, "x")).weights, WeightBundle)


def test_input_shape_is_checked(rng):
    model = load_weights(tiny_network(), 0)
    with pytest.raises(ShapeMismatch):
        forward(model, rng.standard_normal((8, 6)))


def test_published_architectures():
    l3 = build_l3net(512)
    assert l3.input_shape == (256, 199)
    convs = [l for l in l3.layers if l.kind == "conv2d"]
    assert [l.out_channels for l in convs] == [64, 64, 128, 128, 256, 256, 512, 512]
    assert sum(l.kind == "batchnorm_inference" for l in l3.layers) == 8
    assert build_l3net(512, n_mels=128).input_shape == (128, 199)
    assert build_l3net(6144).output_dim == 6144
    vgg = build_vggish()
    assert [l.units for l in vgg.layers if l.kind == "dense"] == [4096, 4096, 128]
    assert build_network("vggish128").name == "vggish"
    with pytest.raises(ValueError):
        build_network("mfcc80")
    with pytest.raises(ValueError):
        build_l3net(1024)


def test_embed_clip_windows_and_aggregate():
    sr = 16000
    t = np.arange(2 * sr) / sr
    clip = AudioClip(np.sin(2 * np.pi * 300 * t), sr, "c")
    model = load_weights(build_vggish(), 0)
    seq = embed_clip(clip, model, hop_s=0.5, batch_size=2)
    assert seq.frames.shape == (3, 128) and seq.frames.dtype == np.float64
    assert seq.hop_s == 0.5 and len(seq) == 3
    np.testing.assert_allclose(aggregate(seq), seq.frames.mean(axis=0))
    with pytest.raises(EmptySequence):
        aggregate(np.zeros((0, 4)))
    with pytest.raises(ValueError):
        embed_clip(clip, load_weights(tiny_network(), 0))
