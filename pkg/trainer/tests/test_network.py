"""Network structure, determinism, and LPW1 tensor translation."""

import numpy as np
import pytest
import torch

from projtrain import (
    Unet,
    Weights,
    evaluate,
    export_tensors,
    from_weights,
    to_weights,
    weight_manifest,
    xavier_init,
)


def _bn(prefix, c):
    return [(f"{prefix}.{part}", (c,)) for part in ("gamma", "beta", "mean", "var")]


def test_manifest_depth1_base2_exact():
    # hand-derived from the layout contract: encoder top-down, bottleneck,
    # decoder bottom-up, final 1x1; convs (out, in, kh, kw), transposed
    # convs (in, out, kh, kw); batch norms as gamma, beta, mean, var
    expected = (
        [
            ("enc1.conv1.weight", (2, 2, 3, 3)),
            ("enc1.conv1.bias", (2,)),
            *_bn("enc1.bn1", 2),
            ("enc1.conv2.weight", (2, 2, 3, 3)),
            ("enc1.conv2.bias", (2,)),
            *_bn("enc1.bn2", 2),
            ("bott.conv1.weight", (4, 2, 3, 3)),
            ("bott.conv1.bias", (4,)),
            *_bn("bott.bn1", 4),
            ("bott.conv2.weight", (4, 4, 3, 3)),
            ("bott.conv2.bias", (4,)),
            *_bn("bott.bn2", 4),
            ("dec1.up.weight", (4, 2, 2, 2)),
            ("dec1.up.bias", (2,)),
            ("dec1.conv1.weight", (2, 4, 3, 3)),
            ("dec1.conv1.bias", (2,)),
            *_bn("dec1.bn1", 2),
            ("dec1.conv2.weight", (2, 2, 3, 3)),
            ("dec1.conv2.bias", (2,)),
            *_bn("dec1.bn2", 2),
            ("final.conv.weight", (1, 2, 1, 1)),
            ("final.conv.bias", (1,)),
        ]
    )
    assert list(weight_manifest(1, 2)) == expected


def test_manifest_channel_doubling():
    shapes = dict(weight_manifest(3, 8))
    assert shapes["enc1.conv1.weight"] == (8, 2, 3, 3)
    assert shapes["enc2.conv1.weight"] == (16, 8, 3, 3)
    assert shapes["enc3.conv1.weight"] == (32, 16, 3, 3)
    assert shapes["bott.conv1.weight"] == (64, 32, 3, 3)
    assert shapes["dec3.up.weight"] == (64, 32, 2, 2)
    assert shapes["final.conv.weight"] == (1, 8, 1, 1)


def test_manifest_rejects_bad_architecture():
    with pytest.raises(ValueError):
        weight_manifest(0, 4)
    with pytest.raises(ValueError):
        weight_manifest(2, 0)


def test_forward_shape():
    model = Unet(depth=2, base_channels=4)
    out = model(torch.randn(3, 2, 16, 16))
    assert out.shape == (3, 1, 16, 16)


def test_forward_rejects_indivisible_size():
    model = Unet(depth=2, base_channels=4)
    with pytest.raises(ValueError, match="divisible"):
        model(torch.randn(1, 2, 18, 18))


def test_zero_weights_pass_first_channel_through_leaky_relu():
    slope = 0.01
    tensors = {
        name: (np.ones if name.endswith(".var") else np.zeros)(shape, np.float32)
        for name, shape in weight_manifest(2, 4)
    }
    model = from_weights(Weights(2, 4, slope, 1e-5, tensors))
    rng = np.random.default_rng(1)
    inputs = rng.normal(size=(3, 8, 8)) + 1j * rng.normal(size=(3, 8, 8))
    out = evaluate(model, inputs)
    x0 = inputs.real.astype(np.float32)
    np.testing.assert_allclose(out, np.where(x0 >= 0.0, x0, slope * x0), atol=1e-7)


def test_xavier_init_deterministic():
    a = xavier_init(Unet(2, 4), seed=3)
    b = xavier_init(Unet(2, 4), seed=3)
    c = xavier_init(Unet(2, 4), seed=4)
    ta, tb, tc = export_tensors(a), export_tensors(b), export_tensors(c)
    assert all(np.array_equal(ta[k], tb[k]) for k in ta)
    assert any(not np.array_equal(ta[k], tc[k]) for k in ta)
    # biases zero, batch norms at their defaults
    assert not ta["enc1.conv1.bias"].any()
    np.testing.assert_array_equal(ta["enc1.bn1.gamma"], 1.0)
    np.testing.assert_array_equal(ta["enc1.bn1.mean"], 0.0)
    np.testing.assert_array_equal(ta["enc1.bn1.var"], 1.0)


def test_weights_round_trip_through_model():
    rng = np.random.default_rng(5)
    tensors = {}
    for name, shape in weight_manifest(2, 4):
        arr = rng.normal(scale=0.1, size=shape).astype(np.float32)
        if name.endswith(".var"):
            arr = np.abs(arr) + 0.5
        tensors[name] = arr
    w = Weights(2, 4, 0.01, 1e-5, tensors)
    model = from_weights(w)
    back = to_weights(model)
    assert list(back.tensors) == list(tensors)
    for name in tensors:
        np.testing.assert_array_equal(back.tensors[name], tensors[name])
    inputs = rng.normal(size=(2, 16, 16)) + 1j * rng.normal(size=(2, 16, 16))
    np.testing.assert_array_equal(
        evaluate(model, inputs), evaluate(from_weights(back), inputs)
    )


def test_evaluate_batching_is_immaterial():
    model = xavier_init(Unet(2, 4), seed=0)
    rng = np.random.default_rng(2)
    inputs = rng.normal(size=(5, 16, 16)) + 1j * rng.normal(size=(5, 16, 16))
    full = evaluate(model, inputs, batch_size=5)
    split = evaluate(model, inputs, batch_size=2)
    assert full.dtype == np.float32 and full.shape == (5, 16, 16)
    np.testing.assert_allclose(full, split, atol=1e-6)
