"""Forward evaluation of the learned contrast projector (a small U-Net).

The network is the classic encoder/decoder layout: per resolution level
two 3x3 zero-padded convolutions, each followed by batch normalization
and a ReLU; 2x2 max pooling between encoder levels; 2x2 stride-2
transposed convolutions on the way back up, with the encoder output of
the matching level concatenated in front of the upsampled channels.  A
final 1x1 convolution maps to a single plane, the real part of the
input is added on top, and a LeakyReLU produces the output.

Channel widths double per level starting from ``base_channels``, so the
whole graph is determined by ``(depth, base_channels)``.  Inference is
pure numpy and needs no training framework; weights are stored float32
but activations are evaluated in float64, which keeps the zero-weight
identity case exact.

Weight files ("LPW1") are little-endian: magic, u32 format version,
u32 header length, a UTF-8 header carrying the architecture keys and an
ordered tensor manifest, then each tensor's raw float32 data row-major
in manifest order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ContrastGrid
from .errors import BadMagic, ConfigError, MissingWeights, ShapeMismatch, TruncatedFile

__all__ = [
    "ProjectorWeights",
    "architecture_manifest",
    "zero_weights",
    "load_weights",
    "save_weights",
    "infer",
    "project_contrast",
]

_MAGIC = b"LPW1"
_VERSION = 1
_HEADER_KEYS = ("depth", "base_channels", "leaky_slope", "bn_eps")


def _double_conv_entries(prefix: str, c_in: int, c_out: int) -> list:
    entries = []
    for i, cin in ((1, c_in), (2, c_out)):
        entries.append((f"{prefix}.conv{i}.weight", (c_out, cin, 3, 3)))
        entries.append((f"{prefix}.conv{i}.bias", (c_out,)))
        for part in ("gamma", "beta", "mean", "var"):
            entries.append((f"{prefix}.bn{i}.{part}", (c_out,)))
    return entries


def architecture_manifest(depth: int, base_channels: int) -> tuple:
    """Ordered (name, shape) pairs for every tensor of the network.

    The order is evaluation order: encoder levels top-down, bottleneck,
    decoder levels bottom-up, final 1x1 convolution.  Convolution
    weights are (out, in, kh, kw); transposed-convolution weights are
    (in, out, kh, kw).
    """
    if depth < 1 or base_channels < 1:
        raise ConfigError(
            f"projector needs depth >= 1 and base_channels >= 1, "
            f"got ({depth}, {base_channels})"
        )
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


@dataclass(frozen=True)
class ProjectorWeights:
    """Immutable network weights plus the architecture metadata.

    ``tensors`` maps tensor names to float32 arrays; on construction it
    is reordered into the canonical manifest order and every shape is
    checked against the graph implied by (depth, base_channels).
    """

    depth: int
    base_channels: int
    leaky_slope: float
    bn_eps: float
    tensors: dict

    def __post_init__(self):
        expected = architecture_manifest(self.depth, self.base_channels)
        known = {name for name, _ in expected}
        for name in self.tensors:
            if name not in known:
                raise ShapeMismatch(f"unexpected tensor {name}", name=name)
        canonical = {}
        for name, shape in expected:
            arr = self.tensors.get(name)
            if arr is None:
                raise ShapeMismatch(f"missing tensor {name}", name=name)
            arr = np.ascontiguousarray(arr, dtype=np.float32)
            if arr.shape != shape:
                raise ShapeMismatch(
                    f"tensor {name} has shape {arr.shape}, expected {shape}",
                    name=name,
                )
            if name.endswith(".var") and np.any(arr < 0.0):
                raise ShapeMismatch(
                    f"tensor {name} has a negative running variance", name=name
                )
            arr.setflags(write=False)
            canonical[name] = arr
        object.__setattr__(self, "tensors", canonical)


def zero_weights(
    depth: int = 4,
    base_channels: int = 64,
    leaky_slope: float = 0.01,
    bn_eps: float = 1e-5,
) -> ProjectorWeights:
    """Weights that make the network the identity-plus-LeakyReLU map.

    All convolution and bias tensors are zero and batch norms are set
    to gamma = 1, beta = 0, mean = 0, var = 1, so infer() returns
    LeakyReLU of the input's first channel.  Handy as a fixture.
    """
    tensors = {}
    for name, shape in architecture_manifest(depth, base_channels):
        one = name.endswith(".gamma") or name.endswith(".var")
        tensors[name] = np.ones(shape, np.float32) if one else np.zeros(shape, np.float32)
    return ProjectorWeights(depth, base_channels, leaky_slope, bn_eps, tensors)


def save_weights(path, w: ProjectorWeights) -> None:
    lines = [
        f"depth={w.depth}",
        f"base_channels={w.base_channels}",
        f"leaky_slope={w.leaky_slope!r}",
        f"bn_eps={w.bn_eps!r}",
    ]
    for name, arr in w.tensors.items():
        dims = " ".join(str(d) for d in arr.shape)
        lines.append(f"tensor {name} f32 {arr.ndim} {dims}")
    header = ("\n".join(lines) + "\n").encode("utf-8")
    parts = [_MAGIC, struct.pack("<II", _VERSION, len(header)), header]
    parts += [t.tobytes() for t in w.tensors.values()]
    Path(path).write_bytes(b"".join(parts))


def _take(buf: bytes, offset: int, count: int, path, what: str) -> tuple:
    if offset + count > len(buf):
        raise TruncatedFile(f"{path}: ended while reading {what}")
    return buf[offset : offset + count], offset + count


def _parse_header(path, text: str) -> tuple:
    keys = {}
    manifest = []
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("tensor "):
            fields = line.split()
            if len(fields) < 4:
                raise BadMagic(f"{path}: malformed manifest line {line!r}")
            _, name, dtype, rank = fields[:4]
            if dtype != "f32":
                raise ShapeMismatch(
                    f"{path}: tensor {name} has dtype {dtype}, only f32 is supported",
                    name=name,
                )
            dims = fields[4:]
            if len(dims) != int(rank):
                raise ShapeMismatch(
                    f"{path}: tensor {name} declares rank {rank} "
                    f"but {len(dims)} dims",
                    name=name,
                )
            manifest.append((name, tuple(int(d) for d in dims)))
        elif "=" in line:
            key, _, value = line.partition("=")
            if key not in _HEADER_KEYS:
                raise BadMagic(f"{path}: unknown header key {key!r}")
            keys[key] = value
        else:
            raise BadMagic(f"{path}: unrecognized header line {line!r}")
    missing = [k for k in _HEADER_KEYS if k not in keys]
    if missing:
        raise BadMagic(f"{path}: header missing keys {missing}")
    return keys, manifest


def load_weights(path) -> ProjectorWeights:
    """Read an LPW1 file and validate it against the architecture graph."""
    try:
        buf = Path(path).read_bytes()
    except FileNotFoundError:
        raise MissingWeights(f"projector weight file not found: {path}") from None
    magic, off = _take(buf, 0, 4, path, "magic")
    if magic != _MAGIC:
        raise BadMagic(f"{path}: expected {_MAGIC!r}, found {magic!r}")
    raw, off = _take(buf, off, 8, path, "version and header length")
    version, header_len = struct.unpack("<II", raw)
    if version != _VERSION:
        raise BadMagic(f"{path}: unsupported LPW1 version {version}")
    raw, off = _take(buf, off, header_len, path, "header")
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise BadMagic(f"{path}: header is not valid UTF-8") from None
    keys, manifest = _parse_header(path, text)
    try:
        depth = int(keys["depth"])
        base_channels = int(keys["base_channels"])
        leaky_slope = float(keys["leaky_slope"])
        bn_eps = float(keys["bn_eps"])
        expected = architecture_manifest(depth, base_channels)
    except (ValueError, ConfigError):
        raise BadMagic(f"{path}: invalid architecture keys") from None
    for i in range(max(len(manifest), len(expected))):
        got = manifest[i] if i < len(manifest) else None
        want = expected[i] if i < len(expected) else None
        if got is None:
            raise ShapeMismatch(
                f"{path}: manifest is missing tensor {want[0]}", name=want[0]
            )
        if want is None or got[0] != want[0]:
            raise ShapeMismatch(
                f"{path}: unexpected manifest entry {got[0]}", name=got[0]
            )
        if got[1] != want[1]:
            raise ShapeMismatch(
                f"{path}: tensor {got[0]} declares shape {got[1]}, "
                f"expected {want[1]}",
                name=got[0],
            )
    tensors = {}
    for name, shape in manifest:
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw, off = _take(buf, off, 4 * count, path, f"tensor {name}")
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape)
    if off != len(buf):
        raise BadMagic(f"{path}: {len(buf) - off} trailing bytes after tensor data")
    return ProjectorWeights(depth, base_channels, leaky_slope, bn_eps, tensors)


def _conv3(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    # 3x3 stride-1 cross-correlation with zero padding, via one matmul.
    c, h, wd = x.shape
    padded = np.zeros((c, h + 2, wd + 2), dtype=x.dtype)
    padded[:, 1:-1, 1:-1] = x
    cols = np.empty((c, 3, 3, h, wd), dtype=x.dtype)
    for dy in range(3):
        for dx in range(3):
            cols[:, dy, dx] = padded[:, dy : dy + h, dx : dx + wd]
    out = np.tensordot(w, cols, axes=([1, 2, 3], [0, 1, 2]))
    return out + b[:, None, None]


def _conv1x1(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.tensordot(w[:, :, 0, 0], x, axes=([1], [0]))
    return out + b[:, None, None]


def _maxpool(x: np.ndarray) -> np.ndarray:
    c, h, wd = x.shape
    return x.reshape(c, h // 2, 2, wd // 2, 2).max(axis=(2, 4))


def _conv_transpose(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    # 2x2 stride-2 transposed convolution; weight layout (in, out, 2, 2).
    # Output pixel (2i+ky, 2j+kx) receives sum_c x[c,i,j] * w[c,o,ky,kx].
    out = np.einsum("iokl,ihw->ohkwl", w, x)
    o = out.shape[0]
    return out.reshape(o, 2 * x.shape[1], 2 * x.shape[2]) + b[:, None, None]


def _batch_norm(x: np.ndarray, t: dict, prefix: str, eps: float) -> np.ndarray:
    var = t[prefix + ".var"].astype(np.float64)
    scale = t[prefix + ".gamma"] / np.sqrt(var + eps)
    shift = t[prefix + ".beta"] - t[prefix + ".mean"] * scale
    return x * scale[:, None, None] + shift[:, None, None]


def _level(t: dict, prefix: str, x: np.ndarray, eps: float) -> np.ndarray:
    for i in ("1", "2"):
        x = _conv3(x, t[f"{prefix}.conv{i}.weight"], t[f"{prefix}.conv{i}.bias"])
        x = _batch_norm(x, t, f"{prefix}.bn{i}", eps)
        x = np.maximum(x, 0.0)
    return x


def infer(w: ProjectorWeights, x) -> np.ndarray:
    """Run the network on planes (2, n, n): channel 1 real, channel 2 imag.

    Batch norms use the stored running statistics.  After the final 1x1
    convolution the first input channel is added back and a LeakyReLU
    with slope ``w.leaky_slope`` is applied.  Returns an (n, n) real
    matrix; the evaluation is deterministic.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != 2 or x.shape[1] != x.shape[2]:
        raise ShapeMismatch(f"projector input must be (2, n, n), got {x.shape}")
    if x.shape[1] % 2**w.depth:
        raise ShapeMismatch(
            f"input size {x.shape[1]} is not divisible by 2^depth = {2**w.depth}"
        )
    t = w.tensors
    skips = []
    cur = x
    for level in range(1, w.depth + 1):
        cur = _level(t, f"enc{level}", cur, w.bn_eps)
        skips.append(cur)
        cur = _maxpool(cur)
    cur = _level(t, "bott", cur, w.bn_eps)
    for level in range(w.depth, 0, -1):
        up = _conv_transpose(cur, t[f"dec{level}.up.weight"], t[f"dec{level}.up.bias"])
        cur = np.concatenate([skips[level - 1], up], axis=0)
        cur = _level(t, f"dec{level}", cur, w.bn_eps)
    out = _conv1x1(cur, t["final.conv.weight"], t["final.conv.bias"])[0]
    out = out + x[0]
    return np.where(out > 0.0, out, w.leaky_slope * out)


def project_contrast(w: ProjectorWeights, m: ContrastGrid) -> ContrastGrid:
    """Apply the projector to a contrast, returning a real-valued contrast."""
    planes = np.stack([m.values.real, m.values.imag])
    return m.with_values(infer(w, planes).astype(np.complex128))
