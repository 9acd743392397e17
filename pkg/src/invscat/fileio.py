"""Binary readers and writers for contrast (CTR1) and far-field (FFD1) files.

Both formats are little-endian with a 4-byte ASCII magic.

CTR1: magic "CTR1", f64 rho, u32 n, u8 flag (0 real, 1 complex), then n*n
f64 values row-major (flag 0) or n*n (re, im) f64 pairs row-major (flag 1).

FFD1: magic "FFD1", f64 k, u32 p, u32 q, then p*q (re, im) f64 pairs in
p-major row order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .core import ContrastGrid, FarField, Grid
from .errors import BadMagic, TruncatedFile

__all__ = [
    "read_contrast",
    "write_contrast",
    "read_far_field",
    "write_far_field",
]

_CTR_MAGIC = b"CTR1"
_FFD_MAGIC = b"FFD1"


def _take(buf: bytes, offset: int, count: int, path, what: str) -> tuple[bytes, int]:
    if offset + count > len(buf):
        raise TruncatedFile(f"{path}: ended while reading {what}")
    return buf[offset : offset + count], offset + count


def write_contrast(path, m: ContrastGrid) -> None:
    v = m.values
    real = bool(np.all(v.imag == 0.0))
    parts = [
        _CTR_MAGIC,
        struct.pack("<d", m.grid.rho),
        struct.pack("<I", m.grid.n),
        struct.pack("<B", 0 if real else 1),
    ]
    if real:
        parts.append(np.ascontiguousarray(v.real, dtype="<f8").tobytes())
    else:
        inter = np.empty((m.grid.n, m.grid.n, 2), dtype="<f8")
        inter[..., 0] = v.real
        inter[..., 1] = v.imag
        parts.append(inter.tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_contrast(path) -> ContrastGrid:
    buf = Path(path).read_bytes()
    magic, off = _take(buf, 0, 4, path, "magic")
    if magic != _CTR_MAGIC:
        raise BadMagic(f"{path}: expected {_CTR_MAGIC!r}, found {magic!r}")
    raw, off = _take(buf, off, 8, path, "rho")
    (rho,) = struct.unpack("<d", raw)
    raw, off = _take(buf, off, 4, path, "n")
    (n,) = struct.unpack("<I", raw)
    raw, off = _take(buf, off, 1, path, "flag")
    flag = raw[0]
    if flag not in (0, 1):
        raise BadMagic(f"{path}: contrast flag must be 0 or 1, found {flag}")
    count = n * n * (2 if flag else 1)
    raw, off = _take(buf, off, 8 * count, path, "values")
    data = np.frombuffer(raw, dtype="<f8")
    if flag:
        v = data[0::2] + 1j * data[1::2]
    else:
        v = data.astype(np.complex128)
    return ContrastGrid(Grid(rho, int(n)), v.reshape(int(n), int(n)))


def write_far_field(path, ff: FarField) -> None:
    parts = [
        _FFD_MAGIC,
        struct.pack("<d", ff.k),
        struct.pack("<I", ff.p),
        struct.pack("<I", ff.q),
    ]
    inter = np.empty((ff.p, ff.q, 2), dtype="<f8")
    inter[..., 0] = ff.values.real
    inter[..., 1] = ff.values.imag
    parts.append(inter.tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_far_field(path) -> FarField:
    buf = Path(path).read_bytes()
    magic, off = _take(buf, 0, 4, path, "magic")
    if magic != _FFD_MAGIC:
        raise BadMagic(f"{path}: expected {_FFD_MAGIC!r}, found {magic!r}")
    raw, off = _take(buf, off, 8, path, "k")
    (k,) = struct.unpack("<d", raw)
    raw, off = _take(buf, off, 8, path, "p and q")
    p, q = struct.unpack("<II", raw)
    raw, off = _take(buf, off, 16 * p * q, path, "values")
    data = np.frombuffer(raw, dtype="<f8")
    v = (data[0::2] + 1j * data[1::2]).reshape(int(p), int(q))
    return FarField(k, v)
