"""The contrast projector as a trainable torch module.

The graph matches the inference engine in invscat tensor for tensor:
per resolution level two 3x3 zero-padded convolutions, each followed by
batch normalization and a ReLU; 2x2 max pooling down, 2x2 stride-2
transposed convolutions up with the encoder output of the matching level
concatenated in front of the upsampled channels; a final 1x1 convolution,
the first input channel added on top, and a LeakyReLU.  Channel widths
double per level starting from base_channels.

Module attributes are named so that state_dict keys coincide with the
LPW1 tensor names, except for the batch-norm convention (torch
weight/bias/running_mean/running_var versus gamma/beta/mean/var), which
export_tensors and load_tensors translate.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .formats import Weights

__all__ = [
    "Unet",
    "weight_manifest",
    "xavier_init",
    "export_tensors",
    "load_tensors",
    "to_weights",
    "from_weights",
    "evaluate",
]

_BN_EXPORT = {
    "weight": "gamma",
    "bias": "beta",
    "running_mean": "mean",
    "running_var": "var",
}


def _double_conv_entries(prefix: str, c_in: int, c_out: int) -> list:
    entries = []
    for i, cin in ((1, c_in), (2, c_out)):
        entries.append((f"{prefix}.conv{i}.weight", (c_out, cin, 3, 3)))
        entries.append((f"{prefix}.conv{i}.bias", (c_out,)))
        for part in ("gamma", "beta", "mean", "var"):
            entries.append((f"{prefix}.bn{i}.{part}", (c_out,)))
    return entries


def weight_manifest(depth: int, base_channels: int) -> tuple:
    """Ordered (name, shape) pairs of the LPW1 file for this architecture.

    Evaluation order: encoder levels top-down, bottleneck, decoder levels
    bottom-up, final 1x1 convolution.  Convolutions are (out, in, kh, kw),
    transposed convolutions (in, out, kh, kw).
    """
    if depth < 1 or base_channels < 1:
        raise ValueError(f"need depth >= 1 and base_channels >= 1, got ({depth}, {base_channels})")
    entries = []
    c_in = 2
    for level in range(1, depth + 1):
        c_out = base_channels * 2 ** (level - 1)
        entries += _double_conv_entries(f"enc{level}", c_in, c_out)
        c_in = c_out
    entries += _double_conv_entries("bott", c_in, base_channels * 2**depth)
    for level in range(depth, 0, -1):
        c_skip = base_channels * 2 ** (level - 1)
        entries.append((f"dec{level}.up.weight", (2 * c_skip, c_skip, 2, 2)))
        entries.append((f"dec{level}.up.bias", (c_skip,)))
        entries += _double_conv_entries(f"dec{level}", 2 * c_skip, c_skip)
    entries.append(("final.conv.weight", (1, base_channels, 1, 1)))
    entries.append(("final.conv.bias", (1,)))
    return tuple(entries)


def _norm(channels: int, bn_eps: float) -> nn.BatchNorm2d:
    # momentum=None keeps cumulative-average running statistics, so
    # eval-mode outputs track the trained weights from the first batch on
    return nn.BatchNorm2d(channels, eps=bn_eps, momentum=None)


class _DoubleConv(nn.Module):
    def __init__(self, c_in: int, c_out: int, bn_eps: float):
        super().__init__()
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.bn1 = _norm(c_out, bn_eps)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.bn2 = _norm(c_out, bn_eps)

    def forward(self, x):
        x = F.relu(self.bn1(self.conv1(x)))
        return F.relu(self.bn2(self.conv2(x)))


class _Decoder(nn.Module):
    def __init__(self, c_skip: int, bn_eps: float):
        super().__init__()
        self.up = nn.ConvTranspose2d(2 * c_skip, c_skip, 2, stride=2)
        self.conv1 = nn.Conv2d(2 * c_skip, c_skip, 3, padding=1)
        self.bn1 = _norm(c_skip, bn_eps)
        self.conv2 = nn.Conv2d(c_skip, c_skip, 3, padding=1)
        self.bn2 = _norm(c_skip, bn_eps)

    def forward(self, skip, x):
        x = torch.cat([skip, self.up(x)], dim=1)
        x = F.relu(self.bn1(self.conv1(x)))
        return F.relu(self.bn2(self.conv2(x)))


class _Final(nn.Module):
    def __init__(self, c_in: int):
        super().__init__()
        self.conv = nn.Conv2d(c_in, 1, 1)

    def forward(self, x):
        return self.conv(x)


class Unet(nn.Module):
    """Two input channels (real, imaginary), one output plane."""

    def __init__(
        self,
        depth: int = 4,
        base_channels: int = 32,
        leaky_slope: float = 0.01,
        bn_eps: float = 1e-5,
    ):
        super().__init__()
        self.depth = depth
        self.base_channels = base_channels
        self.leaky_slope = leaky_slope
        self.bn_eps = bn_eps
        c_in = 2
        for level in range(1, depth + 1):
            c_out = base_channels * 2 ** (level - 1)
            setattr(self, f"enc{level}", _DoubleConv(c_in, c_out, bn_eps))
            c_in = c_out
        self.bott = _DoubleConv(c_in, base_channels * 2**depth, bn_eps)
        for level in range(depth, 0, -1):
            setattr(self, f"dec{level}", _Decoder(base_channels * 2 ** (level - 1), bn_eps))
        self.final = _Final(base_channels)

    def forward(self, x):
        if x.shape[-1] % 2**self.depth:
            raise ValueError(
                f"input size {x.shape[-1]} is not divisible by 2^depth = {2**self.depth}"
            )
        skips = []
        cur = x
        for level in range(1, self.depth + 1):
            cur = getattr(self, f"enc{level}")(cur)
            skips.append(cur)
            cur = F.max_pool2d(cur, 2)
        cur = self.bott(cur)
        for level in range(self.depth, 0, -1):
            cur = getattr(self, f"dec{level}")(skips[level - 1], cur)
        out = self.final(cur) + x[:, 0:1]
        return F.leaky_relu(out, self.leaky_slope)


def xavier_init(model: Unet, seed: int) -> Unet:
    """Xavier-uniform convolution weights, zero biases, default batch norms."""
    gen = torch.Generator().manual_seed(seed)
    for mod in model.modules():
        if isinstance(mod, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.xavier_uniform_(mod.weight, generator=gen)
            nn.init.zeros_(mod.bias)
    return model


_BN_IMPORT = {v: k for k, v in _BN_EXPORT.items()}


def _torch_key(name: str) -> str:
    # LPW1 batch-norm leaf names to torch state_dict leaf names
    block, layer, leaf = name.split(".")
    if layer.startswith("bn"):
        leaf = _BN_IMPORT[leaf]
    return f"{block}.{layer}.{leaf}"


def export_tensors(model: Unet) -> dict:
    """State dict as LPW1-named float32 arrays in manifest order."""
    state = model.state_dict()
    out = {}
    for name, shape in weight_manifest(model.depth, model.base_channels):
        t = state[_torch_key(name)]
        arr = t.detach().cpu().numpy().astype(np.float32)
        if arr.shape != shape:
            raise ValueError(f"tensor {name} has shape {arr.shape}, expected {shape}")
        out[name] = arr
    return out


def load_tensors(model: Unet, tensors: dict) -> Unet:
    expected = weight_manifest(model.depth, model.base_channels)
    state = model.state_dict()
    for name, shape in expected:
        arr = tensors.get(name)
        if arr is None:
            raise ValueError(f"missing tensor {name}")
        if tuple(arr.shape) != shape:
            raise ValueError(f"tensor {name} has shape {arr.shape}, expected {shape}")
        # np.array copies, so buffers backed by read-only file data stay safe
        state[_torch_key(name)] = torch.from_numpy(np.array(arr, dtype=np.float32))
    model.load_state_dict(state)
    return model


def to_weights(model: Unet) -> Weights:
    return Weights(
        depth=model.depth,
        base_channels=model.base_channels,
        leaky_slope=model.leaky_slope,
        bn_eps=model.bn_eps,
        tensors=export_tensors(model),
    )


def from_weights(w: Weights) -> Unet:
    model = Unet(w.depth, w.base_channels, w.leaky_slope, w.bn_eps)
    return load_tensors(model, w.tensors)


def evaluate(model: Unet, inputs: np.ndarray, batch_size: int = 32) -> np.ndarray:
    """Run the network on complex (N, n, n) inputs, eval mode, no gradients.

    Real and imaginary parts become the two input channels.  Returns the
    (N, n, n) float32 output planes.
    """
    inputs = np.asarray(inputs)
    x = np.stack([inputs.real, inputs.imag], axis=1).astype(np.float32)
    model.eval()
    outs = []
    with torch.no_grad():
        for i in range(0, len(x), batch_size):
            batch = torch.from_numpy(x[i : i + batch_size])
            outs.append(model(batch)[:, 0].numpy())
    return np.concatenate(outs, axis=0)
