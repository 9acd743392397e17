"""Readers and writers for the binary formats shared with the solver package.

The trainer exchanges data with invscat exclusively through files and its
command line, so the two formats it needs are implemented here from their
byte layouts rather than imported.

CTR1 (contrast): magic "CTR1", f64 rho, u32 n, u8 flag (0 real, 1
complex), then n*n f64 values row-major, interleaved (re, im) when the
flag is 1.

LPW1 (projector weights): magic "LPW1", u32 format version (1), u32
header length, a UTF-8 header, then raw float32 tensor data row-major in
header order.  The header holds one "key=value" line for each of depth,
base_channels, leaky_slope and bn_eps, followed by one
"tensor <name> f32 <rank> <dims...>" line per tensor.  Floats in the
header are written with repr() so a round trip preserves them exactly.

Everything is little-endian.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "FormatError",
    "Weights",
    "read_contrast",
    "write_contrast",
    "read_weights",
    "write_weights",
]

_CTR_MAGIC = b"CTR1"
_LPW_MAGIC = b"LPW1"
_LPW_VERSION = 1


class FormatError(Exception):
    """A file does not follow the CTR1 or LPW1 byte layout."""


def _take(buf: bytes, offset: int, count: int, path, what: str) -> tuple[bytes, int]:
    if offset + count > len(buf):
        raise FormatError(f"{path}: ended while reading {what}")
    return buf[offset : offset + count], offset + count


def read_contrast(path) -> tuple[float, np.ndarray]:
    """Read a CTR1 file, returning (rho, values) with complex values."""
    buf = Path(path).read_bytes()
    magic, off = _take(buf, 0, 4, path, "magic")
    if magic != _CTR_MAGIC:
        raise FormatError(f"{path}: expected {_CTR_MAGIC!r}, found {magic!r}")
    raw, off = _take(buf, off, 13, path, "contrast header")
    rho, n, flag = struct.unpack("<dIB", raw)
    if flag not in (0, 1):
        raise FormatError(f"{path}: contrast flag must be 0 or 1, found {flag}")
    count = n * n * (2 if flag else 1)
    raw, off = _take(buf, off, 8 * count, path, "values")
    data = np.frombuffer(raw, dtype="<f8")
    if flag:
        v = data[0::2] + 1j * data[1::2]
    else:
        v = data.astype(np.complex128)
    return rho, v.reshape(int(n), int(n))


def write_contrast(path, rho: float, values: np.ndarray) -> None:
    v = np.asarray(values, dtype=np.complex128)
    if v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise FormatError(f"contrast values must be square, got shape {v.shape}")
    real = bool(np.all(v.imag == 0.0))
    parts = [
        _CTR_MAGIC,
        struct.pack("<dIB", float(rho), v.shape[0], 0 if real else 1),
    ]
    if real:
        parts.append(np.ascontiguousarray(v.real, dtype="<f8").tobytes())
    else:
        inter = np.empty((*v.shape, 2), dtype="<f8")
        inter[..., 0] = v.real
        inter[..., 1] = v.imag
        parts.append(inter.tobytes())
    Path(path).write_bytes(b"".join(parts))


@dataclass(frozen=True)
class Weights:
    """An LPW1 payload: architecture keys plus ordered named tensors."""

    depth: int
    base_channels: int
    leaky_slope: float
    bn_eps: float
    tensors: dict  # name -> float32 array, in file order


def write_weights(path, w: Weights) -> None:
    lines = [
        f"depth={w.depth}",
        f"base_channels={w.base_channels}",
        f"leaky_slope={w.leaky_slope!r}",
        f"bn_eps={w.bn_eps!r}",
    ]
    payload = []
    for name, arr in w.tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        dims = " ".join(str(d) for d in arr.shape)
        lines.append(f"tensor {name} f32 {arr.ndim} {dims}")
        payload.append(arr.tobytes())
    header = ("\n".join(lines) + "\n").encode("utf-8")
    parts = [_LPW_MAGIC, struct.pack("<II", _LPW_VERSION, len(header)), header]
    Path(path).write_bytes(b"".join(parts + payload))


def read_weights(path) -> Weights:
    buf = Path(path).read_bytes()
    magic, off = _take(buf, 0, 4, path, "magic")
    if magic != _LPW_MAGIC:
        raise FormatError(f"{path}: expected {_LPW_MAGIC!r}, found {magic!r}")
    raw, off = _take(buf, off, 8, path, "version and header length")
    version, header_len = struct.unpack("<II", raw)
    if version != _LPW_VERSION:
        raise FormatError(f"{path}: unsupported LPW1 version {version}")
    raw, off = _take(buf, off, header_len, path, "header")
    keys = {}
    manifest = []
    for line in raw.decode("utf-8").splitlines():
        if not line.strip():
            continue
        if line.startswith("tensor "):
            fields = line.split()
            if len(fields) < 4 or fields[2] != "f32":
                raise FormatError(f"{path}: malformed manifest line {line!r}")
            name, rank, dims = fields[1], int(fields[3]), fields[4:]
            if len(dims) != rank:
                raise FormatError(f"{path}: tensor {name} rank/dims mismatch")
            manifest.append((name, tuple(int(d) for d in dims)))
        elif "=" in line:
            key, _, value = line.partition("=")
            keys[key] = value
        else:
            raise FormatError(f"{path}: unrecognized header line {line!r}")
    try:
        meta = (
            int(keys["depth"]),
            int(keys["base_channels"]),
            float(keys["leaky_slope"]),
            float(keys["bn_eps"]),
        )
    except (KeyError, ValueError):
        raise FormatError(f"{path}: missing or invalid architecture keys") from None
    tensors = {}
    for name, shape in manifest:
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw, off = _take(buf, off, 4 * count, path, f"tensor {name}")
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape)
    if off != len(buf):
        raise FormatError(f"{path}: {len(buf) - off} trailing bytes after tensor data")
    return Weights(*meta, tensors)
