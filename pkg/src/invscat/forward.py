"""Forward acoustic scattering on C_rho: fields, far fields, and noise.

The total field for incidence direction d solves the Lippmann-Schwinger
equation

    u(x) = exp(i*k*x.d) + k^2 * integral_{C_rho} Phi(x, y) m(y) u(y) dy,

with Phi(x, y) = (i/4) * H0^(1)(k|x - y|).  On the pixel grid the integral
becomes a discrete convolution (midpoint rule, weight h^2, analytic mean of
Phi over the singular cell), evaluated by FFT with the kernel truncated at
radius 2*rho; for sources and targets inside B_rho the truncated circular
convolution coincides with the true one, so the padding is exact rather than
approximate.

Because m vanishes outside its support S, the linear system closes on S.
Small supports are solved by dense LU of the restricted system; large ones by
a restarted GMRES whose operator applications are batched FFT convolutions,
right-preconditioned by a dense LU of the same operator on a coarser grid
(restarted GMRES alone stagnates once k^2 ||m|| gets large).  The far field
is the quadrature

    u_inf(xhat, d) = k^(3/2) e^(i pi/4) / sqrt(8 pi)
                     * integral exp(-i k xhat.y) m(y) u(y, d) dy

over pixels inside B_rho.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft
import scipy.linalg as sla
from scipy.special import hankel1

from .core import ContrastGrid, FarField, Grid, ScatterConfig, direction_set
from .errors import DimensionMismatch, NoConvergence

__all__ = [
    "GreenKernel",
    "TotalFieldSet",
    "apply_volume_potential",
    "solve_forward",
    "far_field",
    "born_far_field",
    "add_noise",
    "incident_fields",
    "far_field_constant",
]

# Supports at or below this size use the dense LU path (a 64-grid disk has
# ~804 pixels inside B_rho); larger ones use batched GMRES.
DENSE_SUPPORT_CAP = 1200

EULER_GAMMA = 0.5772156649015328606

_GMRES_RESTART = 50


def far_field_constant(k: float) -> complex:
    """Prefactor k^(3/2) e^(i pi/4) / sqrt(8 pi) of the far-field quadrature."""
    return k**1.5 * np.exp(1j * np.pi / 4.0) / np.sqrt(8.0 * np.pi)


def _singular_cell_mean(k: float, h: float) -> complex:
    # Mean of Phi over one h-cell from the small-argument expansion
    # H0(z) ~ 1 + (2i/pi)(ln(z/2) + gamma); the cell mean of ln r over a
    # square of side h is ln(h/2) + ln(2)/2 + pi/4 - 3/2.
    mean_log_r = np.log(h / 2.0) + 0.5 * np.log(2.0) + np.pi / 4.0 - 1.5
    return 0.25j - (EULER_GAMMA + np.log(k / 2.0) + mean_log_r) / (2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class GreenKernel:
    """Truncated Helmholtz kernel sampled for circular convolution.

    tensor[u, v] holds h^2 * Phi(delta) at the wrapped displacement
    delta = (du*h, dv*h), du = ((u + n) mod 2n) - n, zeroed beyond radius
    2*rho; symbol is its 2n x 2n DFT.
    """

    grid: Grid
    k: float
    tensor: np.ndarray
    symbol: np.ndarray

    @classmethod
    def build(cls, grid: Grid, k: float) -> "GreenKernel":
        n, h = grid.n, grid.h
        d = (np.arange(2 * n) + n) % (2 * n) - n
        d2 = d[:, None] ** 2 + d[None, :] ** 2
        r = h * np.sqrt(d2)
        with np.errstate(invalid="ignore", divide="ignore"):
            vals = 0.25j * hankel1(0, k * r)
        vals[0, 0] = _singular_cell_mean(k, h)
        # |delta| <= 2*rho in exact integer arithmetic: d2 <= (n/2)^2.
        vals[d2 > (n // 2) ** 2] = 0.0
        tensor = (h * h) * vals
        symbol = sfft.fft2(tensor)
        for a in (tensor, symbol):
            a.flags.writeable = False
        return cls(grid, float(k), tensor, symbol)

    def convolve(self, f: np.ndarray, workers: int = 1) -> np.ndarray:
        """Apply the volume potential to (..., n, n) source arrays."""
        n = self.grid.n
        if f.shape[-2:] != (n, n):
            raise DimensionMismatch(f"source shape {f.shape} does not match n={n}")
        pad = np.zeros(f.shape[:-2] + (2 * n, 2 * n), dtype=np.complex128)
        pad[..., :n, :n] = f
        ft = sfft.fft2(pad, axes=(-2, -1), workers=workers)
        ft *= self.symbol
        out = sfft.ifft2(ft, axes=(-2, -1), workers=workers)
        return np.ascontiguousarray(out[..., :n, :n])

    def dense_block(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Kernel matrix between the flat pixel indices rows and cols."""
        n = self.grid.n
        ri, rj = np.divmod(rows, n)
        ci, cj = np.divmod(cols, n)
        return self.tensor[
            (ri[:, None] - ci[None, :]) % (2 * n),
            (rj[:, None] - cj[None, :]) % (2 * n),
        ]


@lru_cache(maxsize=8)
def _cached_kernel(rho: float, n: int, k: float) -> GreenKernel:
    return GreenKernel.build(Grid(rho, n), k)


def get_kernel(grid: Grid, k: float) -> GreenKernel:
    return _cached_kernel(grid.rho, grid.n, float(k))


def apply_volume_potential(kernel: GreenKernel, f: np.ndarray, workers: int = 1) -> np.ndarray:
    """Discrete volume potential (K f)(x_ij), quadrature weight included."""
    return kernel.convolve(np.asarray(f, dtype=np.complex128), workers)


def _gmres_batched(apply_fn, rhs, tol, maxiter, restart=_GMRES_RESTART):
    """Restarted GMRES on A x = b for a batch of right-hand sides (rows).

    apply_fn acts row-wise on (batch, dim) arrays with one shared operator.
    Modified Gram-Schmidt Arnoldi with Givens residual tracking; all rows
    iterate in lockstep and converged rows drop out at restart boundaries.
    Returns the solution stack; raises NoConvergence if any row still exceeds
    tol * ||b|| after maxiter total inner steps.
    """
    rhs = np.asarray(rhs, dtype=np.complex128)
    nb, dim = rhs.shape
    x = np.zeros_like(rhs)
    bnorm = np.linalg.norm(rhs, axis=1)
    target = tol * np.where(bnorm > 0, bnorm, 1.0)
    active = np.flatnonzero(bnorm > 0)
    used = 0
    while active.size:
        r = rhs[active] - apply_fn(x[active], active)
        beta = np.linalg.norm(r, axis=1)
        done = beta <= target[active]
        if done.all():
            break
        if used >= maxiter:
            worst = float(np.max(beta / np.where(bnorm[active] > 0, bnorm[active], 1.0)))
            raise NoConvergence(
                f"GMRES exhausted {maxiter} iterations (worst relative residual {worst:.3e})",
                residual=worst,
            )
        active = active[~done]
        r = r[~done]
        beta = np.linalg.norm(r, axis=1)
        na = active.size
        steps = min(restart, maxiter - used)
        v = np.empty((steps + 1, na, dim), dtype=np.complex128)
        hcol = np.zeros((na, steps + 1, steps), dtype=np.complex128)
        cs = np.zeros((na, steps), dtype=np.complex128)
        sn = np.zeros((na, steps), dtype=np.complex128)
        g = np.zeros((na, steps + 1), dtype=np.complex128)
        g[:, 0] = beta
        v[0] = r / beta[:, None]
        j_end = 0
        for j in range(steps):
            used += 1
            w = apply_fn(v[j], active)
            for i in range(j + 1):
                hij = np.einsum("bd,bd->b", v[i].conj(), w)
                hcol[:, i, j] = hij
                w -= hij[:, None] * v[i]
            hh = np.linalg.norm(w, axis=1)
            hcol[:, j + 1, j] = hh
            v[j + 1] = np.where(hh[:, None] > 0, w / np.where(hh[:, None] > 0, hh[:, None], 1.0), 0)
            # Givens sweep: rotate the new column, then append one rotation.
            for i in range(j):
                t = hcol[:, i, j]
                hcol[:, i, j] = cs[:, i].conj() * t + sn[:, i].conj() * hcol[:, i + 1, j]
                hcol[:, i + 1, j] = -sn[:, i] * t + cs[:, i] * hcol[:, i + 1, j]
            denom = np.sqrt(np.abs(hcol[:, j, j]) ** 2 + np.abs(hcol[:, j + 1, j]) ** 2)
            safe = denom > 0
            cs[:, j] = np.where(safe, hcol[:, j, j] / np.where(safe, denom, 1.0), 1.0)
            sn[:, j] = np.where(safe, hcol[:, j + 1, j] / np.where(safe, denom, 1.0), 0.0)
            hcol[:, j, j] = cs[:, j].conj() * hcol[:, j, j] + sn[:, j].conj() * hcol[:, j + 1, j]
            hcol[:, j + 1, j] = 0.0
            g[:, j + 1] = -sn[:, j] * g[:, j]
            g[:, j] = cs[:, j].conj() * g[:, j]
            j_end = j + 1
            if (np.abs(g[:, j + 1]) <= target[active]).all() or used >= maxiter:
                break
        # Back-substitute the triangular systems and fold into x.
        y = np.zeros((na, j_end), dtype=np.complex128)
        for i in range(j_end - 1, -1, -1):
            acc = g[:, i] - np.einsum("bk,bk->b", hcol[:, i, i + 1 : j_end], y[:, i + 1 :])
            diag = hcol[:, i, i]
            y[:, i] = np.where(np.abs(diag) > 0, acc / np.where(np.abs(diag) > 0, diag, 1.0), 0.0)
        x[active] += np.einsum("bk,kbd->bd", y, v[:j_end])
    return x


class LippmannSolver:
    """Solves (I - k^2 K M) u = f and its transpose for one fixed contrast.

    M is multiplication by m; the unknown is restricted to S = supp(m) and the
    complement recovered explicitly.  Since the kernel is even, K^T = K and
    the transposed operator is I - k^2 M K; the adjoint follows by
    conjugation.  Construction picks dense LU or batched GMRES by |S|; the
    GMRES path carries a two-grid right preconditioner, a dense LU of the
    block-averaged contrast on the finest power-of-two grid whose support
    still fits the dense cap.
    """

    def __init__(self, kernel: GreenKernel, m: np.ndarray, cfg: ScatterConfig):
        self.kernel = kernel
        self.cfg = cfg
        self.n = kernel.grid.n
        self.m = np.asarray(m, dtype=np.complex128)
        flat = self.m.ravel()
        self.support = np.flatnonzero(flat)
        self.m_s = flat[self.support]
        self.k2 = kernel.k**2
        self._lu = None
        self._coarse = None
        if 0 < self.support.size <= DENSE_SUPPORT_CAP:
            kss = kernel.dense_block(self.support, self.support)
            a = -self.k2 * kss * self.m_s[None, :]
            a[np.diag_indices_from(a)] += 1.0
            self._lu = sla.lu_factor(a, overwrite_a=True)
        elif self.support.size:
            self._coarse = self._build_coarse()

    def _build_coarse(self):
        """(n_c, support_c, LU) for the coarsest-grid copy of the operator."""
        nc = self.n // 2
        while nc >= 8:
            d = self.n // nc
            mc = self.m.reshape(nc, d, nc, d).mean(axis=(1, 3))
            sc = np.flatnonzero(mc.ravel())
            if 0 < sc.size <= DENSE_SUPPORT_CAP:
                kc = get_kernel(Grid(self.kernel.grid.rho, nc), self.kernel.k)
                a = -self.k2 * kc.dense_block(sc, sc) * mc.ravel()[sc][None, :]
                a[np.diag_indices_from(a)] += 1.0
                try:
                    lu = sla.lu_factor(a, overwrite_a=True)
                except np.linalg.LinAlgError:
                    return None
                return nc, sc, lu
            nc //= 2
        return None

    def _coarse_correct(self, z: np.ndarray, trans: int) -> np.ndarray:
        """Right preconditioner M^-1 = I + P (A_c^-1 - I) R on support vectors.

        R block-averages to the coarse grid, P injects piecewise-constant
        back; trans selects the forward (0) or transposed (1) coarse solve.
        """
        nc, sc, lu = self._coarse
        n, b = self.n, z.shape[0]
        d = n // nc
        full = np.zeros((b, n * n), dtype=np.complex128)
        full[:, self.support] = z
        rc = full.reshape(b, nc, d, nc, d).mean(axis=(2, 4)).reshape(b, -1)[:, sc]
        yc = sla.lu_solve(lu, rc.T, trans=trans).T - rc
        fullc = np.zeros((b, nc * nc), dtype=np.complex128)
        fullc[:, sc] = yc
        fine = np.repeat(np.repeat(fullc.reshape(b, nc, nc), d, axis=1), d, axis=2)
        return z + fine.reshape(b, -1)[:, self.support]

    def _conv(self, f):
        return self.kernel.convolve(f, self.cfg.workers)

    def _conv_support(self, z):
        # z: (batch, |S|) coefficients on the support -> K z gathered on S.
        full = np.zeros((z.shape[0], self.n * self.n), dtype=np.complex128)
        full[:, self.support] = z
        out = self._conv(full.reshape(-1, self.n, self.n))
        return out.reshape(z.shape[0], -1)[:, self.support]

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Forward solve for a (batch, n, n) stack of right-hand sides."""
        rhs = np.asarray(rhs, dtype=np.complex128)
        squeeze = rhs.ndim == 2
        if squeeze:
            rhs = rhs[None]
        if self.support.size == 0:
            return rhs[0].copy() if squeeze else rhs.copy()
        flat = rhs.reshape(rhs.shape[0], -1)
        rs = flat[:, self.support]
        if self._lu is not None:
            xs = sla.lu_solve(self._lu, rs.T, trans=0).T
        else:
            def apply_fwd(z, _rows):
                if self._coarse is not None:
                    z = self._coarse_correct(z, 0)
                return z - self.k2 * self._conv_support(self.m_s[None, :] * z)

            xs = _gmres_batched(
                apply_fwd, rs, self.cfg.linsolve_tol, self.cfg.linsolve_maxiter
            )
            if self._coarse is not None:
                xs = self._coarse_correct(xs, 0)
        src = np.zeros_like(flat)
        src[:, self.support] = self.m_s[None, :] * xs
        out = rhs + self.k2 * self._conv(src.reshape(rhs.shape))
        out.reshape(rhs.shape[0], -1)[:, self.support] = xs
        return out[0] if squeeze else out

    def solve_transpose(self, rhs: np.ndarray) -> np.ndarray:
        """Solve (I - k^2 M K) w = r for (batch, n, n) right-hand sides.

        Off-support rows give w = r directly; their coupling into S enters
        the restricted right-hand side through one convolution.
        """
        rhs = np.asarray(rhs, dtype=np.complex128)
        squeeze = rhs.ndim == 2
        if squeeze:
            rhs = rhs[None]
        if self.support.size == 0:
            return rhs[0].copy() if squeeze else rhs.copy()
        flat = rhs.reshape(rhs.shape[0], -1)
        rs = flat[:, self.support].copy()
        off = flat.copy()
        off[:, self.support] = 0.0
        if np.any(off):
            coupled = self._conv(off.reshape(rhs.shape)).reshape(rhs.shape[0], -1)
            rs += self.k2 * self.m_s[None, :] * coupled[:, self.support]
        if self._lu is not None:
            ws = sla.lu_solve(self._lu, rs.T, trans=1).T
        else:
            # Restricted transpose of I - k^2 K_SS M_S is I - k^2 M_S K_SS.
            def apply_t(z, _rows):
                if self._coarse is not None:
                    z = self._coarse_correct(z, 1)
                return z - self.k2 * self.m_s[None, :] * self._conv_support(z)

            ws = _gmres_batched(
                apply_t, rs, self.cfg.linsolve_tol, self.cfg.linsolve_maxiter
            )
            if self._coarse is not None:
                ws = self._coarse_correct(ws, 1)
        out = flat.copy()
        out[:, self.support] = ws
        out = out.reshape(rhs.shape)
        return out[0] if squeeze else out


@dataclass(frozen=True, eq=False)
class TotalFieldSet:
    """Total fields u(x_ij, d_q) for all q incidence directions at one k."""

    grid: Grid
    k: float
    fields: np.ndarray  # (q, n, n) complex
    residual: float  # max over q of ||u - u^i - k^2 K(m u)|| / ||u^i||

    def __post_init__(self):
        f = np.asarray(self.fields, dtype=np.complex128)
        object.__setattr__(self, "fields", f)
        f.flags.writeable = False


def incident_fields(cfg: ScatterConfig) -> np.ndarray:
    """Plane waves exp(i k x.d_q) on the grid, stacked (q, n, n)."""
    x1, x2 = cfg.grid.center_mesh()
    d = direction_set(cfg.q)
    phase = d[:, 0, None, None] * x1[None] + d[:, 1, None, None] * x2[None]
    return np.exp(1j * cfg.k * phase)


def _masked_values(m: ContrastGrid, cfg: ScatterConfig) -> np.ndarray:
    if m.grid.n != cfg.n or m.grid.rho != cfg.rho:
        raise DimensionMismatch(
            f"contrast grid {m.grid} does not match config (rho={cfg.rho}, n={cfg.n})"
        )
    return np.where(m.grid.inside_mask(), m.values, 0.0)


def solve_forward(m: ContrastGrid, cfg: ScatterConfig) -> TotalFieldSet:
    """Total fields for all q incidence directions at wavenumber cfg.k.

    The contrast is masked to B_rho before solving (supports outside the disk
    violate the model and would alias through the truncated kernel).  With
    m identically zero the incident fields are returned unchanged.
    """
    mv = _masked_values(m, cfg)
    kernel = get_kernel(cfg.grid, cfg.k)
    ui = incident_fields(cfg)
    solver = LippmannSolver(kernel, mv, cfg)
    u = solver.solve(ui)
    if solver.support.size:
        res = u - ui - cfg.k**2 * kernel.convolve(mv[None] * u, cfg.workers)
        rel = np.linalg.norm(res.reshape(cfg.q, -1), axis=1) / np.linalg.norm(
            ui.reshape(cfg.q, -1), axis=1
        )
        worst = float(np.max(rel))
        if worst > 10.0 * cfg.linsolve_tol:
            raise NoConvergence(
                f"field residual {worst:.3e} exceeds tolerance", residual=worst
            )
    else:
        worst = 0.0
    return TotalFieldSet(cfg.grid, cfg.k, u, worst)


def _quadrature_rows(cfg: ScatterConfig, where: np.ndarray) -> np.ndarray:
    """(p, |where|) far-field quadrature matrix over the given flat pixels."""
    grid = cfg.grid
    c = grid.centers()
    yi, yj = np.divmod(where, grid.n)
    y1, y2 = c[yi], c[yj]
    xh = direction_set(cfg.p)
    phase = xh[:, 0, None] * y1[None, :] + xh[:, 1, None] * y2[None, :]
    return far_field_constant(cfg.k) * grid.h**2 * np.exp(-1j * cfg.k * phase)


def far_field(m: ContrastGrid, fields: TotalFieldSet, cfg: ScatterConfig) -> FarField:
    """Far-field matrix from total fields: quadrature of m*u over B_rho."""
    if fields.grid.n != cfg.n or fields.k != cfg.k:
        raise DimensionMismatch("field set does not match config")
    mv = _masked_values(m, cfg)
    sup = np.flatnonzero(mv.ravel())
    if sup.size == 0:
        return FarField(cfg.k, np.zeros((cfg.p, cfg.q), dtype=np.complex128))
    e = _quadrature_rows(cfg, sup)
    g = mv.ravel()[sup][None, :] * fields.fields.reshape(cfg.q, -1)[:, sup]
    return FarField(cfg.k, (g @ e.T).T)


def born_far_field(m: ContrastGrid, cfg: ScatterConfig) -> FarField:
    """Born approximation: the far-field quadrature with u replaced by u^i."""
    mv = _masked_values(m, cfg)
    sup = np.flatnonzero(mv.ravel())
    if sup.size == 0:
        return FarField(cfg.k, np.zeros((cfg.p, cfg.q), dtype=np.complex128))
    e = _quadrature_rows(cfg, sup)
    ui = incident_fields(cfg).reshape(cfg.q, -1)[:, sup]
    g = mv.ravel()[sup][None, :] * ui
    return FarField(cfg.k, (g @ e.T).T)


def add_noise(ff: FarField, delta: float, seed: int) -> FarField:
    """Multiplicative noise a -> a * (1 + delta * xi), xi i.i.d. real N(0,1)."""
    if delta < 0:
        raise ValueError(f"noise level must be nonnegative, got {delta}")
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal(ff.values.shape)
    return FarField(ff.k, ff.values * (1.0 + delta * xi))
