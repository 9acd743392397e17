"""Frechet derivative of the contrast-to-far-field map and its adjoint.

For a perturbation q of the contrast m, the derivative field v solves the
Lippmann-Schwinger problem with source k^2 K(u q) and the derivative far
field is the usual quadrature with integrand m*v + q*u.  Eliminating v via
the transposed solve turns each matrix entry into

    (J q)_{pq} = sum_y t_p(y) u_q(y) q(y),      y in B_rho pixels,
    t_p = k^2 K A^{-T}(m * e_p) + e_p,

with e_p the far-field quadrature row and A = I - k^2 K M.  Building a
LinearizedMap therefore costs q forward and p transposed solves, after which
applying J, applying its exact conjugate transpose, and estimating ||J||_2
are dense operations on (p x B) / (q x B) matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ContrastGrid, FarField, ScatterConfig
from .errors import DimensionMismatch
from .forward import (
    LippmannSolver,
    TotalFieldSet,
    _masked_values,
    _quadrature_rows,
    get_kernel,
    incident_fields,
)

__all__ = [
    "LinearizedMap",
    "jacobian_apply",
    "jacobian_adjoint",
    "operator_norm",
    "NormEstimate",
]


@dataclass(frozen=True, eq=False)
class LinearizedMap:
    """The derivative F'(m) at one contrast, in factored form."""

    cfg: ScatterConfig
    mask_idx: np.ndarray  # flat indices of pixels inside B_rho
    tmat: np.ndarray  # (p, |B|)
    umat: np.ndarray  # (q, |B|)
    emat: np.ndarray  # (p, |B|) plain quadrature rows
    m_b: np.ndarray  # (|B|,) masked contrast on those pixels
    fields: TotalFieldSet

    @classmethod
    def build(cls, m: ContrastGrid, cfg: ScatterConfig) -> "LinearizedMap":
        mv = _masked_values(m, cfg)
        kernel = get_kernel(cfg.grid, cfg.k)
        solver = LippmannSolver(kernel, mv, cfg)
        ui = incident_fields(cfg)
        u = solver.solve(ui)
        mask_idx = np.flatnonzero(cfg.grid.inside_mask().ravel())
        e_rows = _quadrature_rows(cfg, mask_idx)
        n = cfg.n
        rhs = np.zeros((cfg.p, n * n), dtype=np.complex128)
        rhs[:, mask_idx] = mv.ravel()[mask_idx][None, :] * e_rows
        w = solver.solve_transpose(rhs.reshape(cfg.p, n, n))
        t = cfg.k**2 * kernel.convolve(w, cfg.workers)
        tmat = t.reshape(cfg.p, -1)[:, mask_idx] + e_rows
        umat = u.reshape(cfg.q, -1)[:, mask_idx]
        if solver.support.size:
            res = u - ui - cfg.k**2 * kernel.convolve(mv[None] * u, cfg.workers)
            worst = float(
                np.max(
                    np.linalg.norm(res.reshape(cfg.q, -1), axis=1)
                    / np.linalg.norm(ui.reshape(cfg.q, -1), axis=1)
                )
            )
        else:
            worst = 0.0
        return cls(
            cfg,
            mask_idx,
            tmat,
            umat,
            e_rows,
            mv.ravel()[mask_idx],
            TotalFieldSet(cfg.grid, cfg.k, u, worst),
        )

    def base_far_field(self) -> FarField:
        """F(m) at the expansion point, reusing the stored total fields."""
        g = self.m_b[None, :] * self.umat
        return FarField(self.cfg.k, (g @ self.emat.T).T)

    def apply_raw(self, q: np.ndarray) -> np.ndarray:
        s = q.reshape(-1)[self.mask_idx]
        return ((self.umat * s[None, :]) @ self.tmat.T).T

    def adjoint_raw(self, w: np.ndarray) -> np.ndarray:
        c = self.tmat.conj().T @ w  # (|B|, q)
        vb = np.einsum("bq,qb->b", c, self.umat.conj())
        out = np.zeros(self.cfg.n * self.cfg.n, dtype=np.complex128)
        out[self.mask_idx] = vb
        return out.reshape(self.cfg.n, self.cfg.n)


def jacobian_apply(jmap: LinearizedMap, q: ContrastGrid | np.ndarray) -> FarField:
    """F'(m) q as a far-field matrix; q is masked to B_rho implicitly."""
    qv = q.values if isinstance(q, ContrastGrid) else np.asarray(q, dtype=np.complex128)
    if qv.shape != (jmap.cfg.n, jmap.cfg.n):
        raise DimensionMismatch(f"perturbation shape {qv.shape} != grid {jmap.cfg.n}")
    return FarField(jmap.cfg.k, jmap.apply_raw(qv))


def jacobian_adjoint(jmap: LinearizedMap, w: FarField | np.ndarray) -> ContrastGrid:
    """Adjoint [F'(m)]* w; exact conjugate transpose of jacobian_apply."""
    wv = w.values if isinstance(w, FarField) else np.asarray(w, dtype=np.complex128)
    if wv.shape != (jmap.cfg.p, jmap.cfg.q):
        raise DimensionMismatch(f"data shape {wv.shape} != ({jmap.cfg.p}, {jmap.cfg.q})")
    return ContrastGrid(jmap.cfg.grid, jmap.adjoint_raw(wv))


@dataclass(frozen=True)
class NormEstimate:
    value: float
    converged: bool
    iterations: int
    vector: np.ndarray  # final normalized iterate, reusable as a warm start


def operator_norm(
    jmap: LinearizedMap,
    tol: float = 1e-3,
    start: np.ndarray | None = None,
    maxiter: int = 50,
) -> NormEstimate:
    """Spectral norm ||F'(m)||_2 by power iteration on J*J.

    The start vector defaults to a fixed seed-0 pseudorandom field, so
    repeated calls are identical; callers may pass the previous result's
    vector to warm-start a slowly varying family of maps.  Never raises: the
    flag reports whether the relative change dropped below tol.
    """
    n = jmap.cfg.n
    if start is None:
        rng = np.random.default_rng(0)
        v = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    else:
        v = np.array(start, dtype=np.complex128, copy=True)
    nv = np.linalg.norm(v)
    if nv == 0:
        raise ValueError("start vector must be nonzero")
    v /= nv
    sigma = 0.0
    for it in range(1, maxiter + 1):
        w = jmap.apply_raw(v)
        s = float(np.linalg.norm(w))
        if s == 0.0:
            return NormEstimate(0.0, True, it, v)
        z = jmap.adjoint_raw(w)
        v = z / np.linalg.norm(z)
        if sigma > 0 and abs(s - sigma) <= tol * s:
            return NormEstimate(s, True, it, v)
        sigma = s
    return NormEstimate(sigma, False, maxiter, v)
