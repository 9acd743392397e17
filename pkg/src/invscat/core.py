"""Grids, contrasts, far fields, and the small algebra that connects them.

The computational domain is the square C_rho = [-2*rho, 2*rho]^2 discretized
into n x n pixels of side h = 4*rho/n, with pixel centers placed symmetrically
about the origin.  A contrast m lives on such a grid and is supported in the
closed disk B_rho = {|x| <= rho}; the refractive index is n(x) = 1 + m(x).
Far-field data is a p x q complex matrix sampled at p observation and q
incidence directions equispaced on the unit circle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionMismatch

__all__ = [
    "Grid",
    "ContrastGrid",
    "FarField",
    "ScatterConfig",
    "ResidualLog",
    "direction_set",
    "normalize",
    "upscale",
    "downscale",
    "relative_error",
]

# Entrywise sup norms below this threshold are treated as exactly zero by
# normalize(); dividing by them would only amplify round-off.
DEGENERATE_NORM = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Grid:
    """Pixel grid over the square [-2*rho, 2*rho]^2.

    values[i, j] sits at the center (x_i, x_j) with x_i = -2*rho + (i + 1/2)*h,
    so the center set is symmetric under negation.  Rendering transposes; all
    numerical code uses this (i -> first coordinate) convention.
    """

    rho: float
    n: int

    def __post_init__(self):
        if self.rho <= 0:
            raise ConfigError(f"rho must be positive, got {self.rho}")
        if self.n < 1 or self.n != int(self.n):
            raise ConfigError(f"grid side must be a positive integer, got {self.n}")

    @property
    def h(self) -> float:
        return 4.0 * self.rho / self.n

    def centers(self) -> np.ndarray:
        """1D array of the n center coordinates along one axis."""
        return (np.arange(self.n) + 0.5) * self.h - 2.0 * self.rho

    def center_mesh(self) -> tuple[np.ndarray, np.ndarray]:
        c = self.centers()
        return np.meshgrid(c, c, indexing="ij")

    def inside_mask(self, radius: float | None = None) -> np.ndarray:
        """Boolean n x n mask of pixel centers with |x| <= radius (default rho)."""
        r = self.rho if radius is None else radius
        x1, x2 = self.center_mesh()
        return x1 * x1 + x2 * x2 <= r * r


@dataclass(frozen=True, eq=False)
class ContrastGrid:
    """A contrast sampled on a Grid; values are complex and read-only."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.shape != (self.grid.n, self.grid.n):
            raise DimensionMismatch(
                f"values shape {v.shape} does not match grid side {self.grid.n}"
            )
        object.__setattr__(self, "values", _readonly(v))

    @property
    def norm_inf(self) -> float:
        return float(np.max(np.abs(self.values)))

    @property
    def is_real(self) -> bool:
        return bool(np.all(self.values.imag == 0.0))

    def with_values(self, values: np.ndarray) -> "ContrastGrid":
        return ContrastGrid(self.grid, values)


@dataclass(frozen=True, eq=False)
class FarField:
    """Far-field matrix u_inf(xhat_p, d_q) for one wavenumber k.

    Row p is the observation direction xhat_p = (cos 2*pi*p/P, sin 2*pi*p/P),
    column q the incidence direction with the same convention.
    """

    k: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.ndim != 2:
            raise DimensionMismatch(f"far field must be a matrix, got shape {v.shape}")
        if self.k <= 0:
            raise ConfigError(f"wavenumber must be positive, got {self.k}")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def p(self) -> int:
        return self.values.shape[0]

    @property
    def q(self) -> int:
        return self.values.shape[1]

    @property
    def norm(self) -> float:
        """Frobenius norm; the residual norm used throughout."""
        return float(np.linalg.norm(self.values))


def direction_set(count: int) -> np.ndarray:
    """(count, 2) unit vectors at angles 2*pi*j/count, j = 0..count-1."""
    ang = 2.0 * np.pi * np.arange(count) / count
    return np.stack([np.cos(ang), np.sin(ang)], axis=1)


@dataclass(frozen=True)
class ScatterConfig:
    """Discretization and solver settings for one forward problem.

    workers is handed to scipy.fft for batched transforms; 1 keeps every run
    single-threaded.
    """

    rho: float
    k: float
    n: int
    p: int
    q: int
    linsolve_tol: float = 1e-6
    linsolve_maxiter: int = 500
    rng_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.rho <= 0:
            raise ConfigError(f"rho must be positive, got {self.rho}")
        if self.k <= 0:
            raise ConfigError(f"wavenumber must be positive, got {self.k}")
        if self.n < 8 or (self.n & (self.n - 1)) != 0:
            raise ConfigError(f"grid side must be a power of two >= 8, got {self.n}")
        if self.p < 1 or self.q < 1:
            raise ConfigError(f"direction counts must be >= 1, got p={self.p} q={self.q}")
        if not (self.linsolve_tol > 0):
            raise ConfigError(f"linsolve_tol must be positive, got {self.linsolve_tol}")
        if self.linsolve_maxiter < 1:
            raise ConfigError(f"linsolve_maxiter must be >= 1, got {self.linsolve_maxiter}")

    @property
    def grid(self) -> Grid:
        return Grid(self.rho, self.n)

    def replace(self, **kw) -> "ScatterConfig":
        from dataclasses import replace as _replace

        return _replace(self, **kw)


@dataclass
class ResidualLog:
    """Append-only record of residual norms, grouped by stage label.

    Serialized one entry per line as "<stage> <iter> <residual>".
    """

    entries: list[tuple[str, int, float]] = field(default_factory=list)

    def add(self, stage: str, iteration: int, value: float) -> None:
        if " " in stage or not stage:
            raise ValueError(f"stage label must be non-empty and space-free: {stage!r}")
        last = self._last_iter(stage)
        if last is not None and iteration <= last:
            raise ValueError(
                f"iteration indices must increase within a stage: {stage} {iteration}"
            )
        self.entries.append((stage, int(iteration), float(value)))

    def _last_iter(self, stage: str):
        for s, i, _ in reversed(self.entries):
            if s == stage:
                return i
        return None

    def stage(self, stage: str) -> list[tuple[int, float]]:
        return [(i, v) for s, i, v in self.entries if s == stage]

    def extend(self, other: "ResidualLog", prefix: str = "") -> None:
        for s, i, v in other.entries:
            self.add(prefix + s, i, v)

    def to_text(self) -> str:
        return "".join(f"{s} {i} {v!r}\n" for s, i, v in self.entries)

    @classmethod
    def from_text(cls, text: str) -> "ResidualLog":
        log = cls()
        for line in text.splitlines():
            if not line.strip():
                continue
            stage, it, val = line.split()
            log.add(stage, int(it), float(val))
        return log


def normalize(m: ContrastGrid) -> ContrastGrid:
    """Scale a contrast to unit sup norm; degenerate inputs pass through.

    N(m) = m / ||m||_inf with the entrywise maximum modulus; if the norm is
    below 1e-12 the input is returned unchanged.  Idempotent either way.
    """
    s = m.norm_inf
    if s < DEGENERATE_NORM:
        return m
    # Recomputing the sup norm of m/s can land a few ulp off 1.0 for complex
    # entries; treating that band as already normalized keeps idempotence an
    # exact, entrywise equality.
    if abs(s - 1.0) < 8.0 * np.finfo(np.float64).eps:
        return m
    return m.with_values(m.values / s)


def upscale(m: ContrastGrid, d: int) -> ContrastGrid:
    """Block-replicate each pixel into a d x d block (the mapping I_U)."""
    if d < 1 or d != int(d):
        raise DimensionMismatch(f"upscale factor must be a positive integer, got {d}")
    v = np.kron(m.values, np.ones((d, d)))
    return ContrastGrid(Grid(m.grid.rho, m.grid.n * d), v)


def downscale(m: ContrastGrid, d: int) -> ContrastGrid:
    """Average non-overlapping d x d blocks (the mapping I_D).

    Block sums are accumulated pairwise so that downscale(upscale(m, d), d)
    returns m exactly for power-of-two d (the only factors the power-of-two
    grid sides produce).
    """
    if d < 1 or d != int(d):
        raise DimensionMismatch(f"downscale factor must be a positive integer, got {d}")
    n2 = m.grid.n
    if n2 % d != 0:
        raise DimensionMismatch(f"grid side {n2} is not divisible by factor {d}")
    n1 = n2 // d
    blocks = (
        m.values.reshape(n1, d, n1, d).transpose(0, 2, 1, 3).reshape(n1, n1, d * d)
    )
    acc = blocks
    while acc.shape[2] > 1:
        half = acc.shape[2] // 2
        rest = acc[:, :, 2 * half :]
        acc = acc[:, :, :half] + acc[:, :, half : 2 * half]
        if rest.shape[2]:
            acc = np.concatenate([acc, rest], axis=2)
    v = acc[:, :, 0] / float(d * d)
    return ContrastGrid(Grid(m.grid.rho, n1), v)


def relative_error(n_true: ContrastGrid, n_est: ContrastGrid) -> float:
    """RMS of |(n_true - n_est) / n_true| over pixel centers inside B_rho.

    Both arguments are refractive-index grids (contrast + 1) on the same grid.
    """
    if n_true.grid != n_est.grid:
        raise DimensionMismatch(
            f"grids differ: {n_true.grid} vs {n_est.grid}"
        )
    mask = n_true.grid.inside_mask()
    a = n_true.values[mask]
    b = n_est.values[mask]
    if np.any(a == 0):
        raise ValueError("true refractive index vanishes inside B_rho")
    return float(math.sqrt(np.mean(np.abs((a - b) / a) ** 2)))
