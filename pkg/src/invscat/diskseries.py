"""Separation-of-variables reference solution for a penetrable disk.

For a constant contrast c on the disk |x| <= a (refractive index 1 + c inside,
1 outside) the scattered and interior fields expand in cylinder harmonics.
With k1 = k * sqrt(1 + c), matching u and du/dr at r = a gives, per order n,

    a_n = [k  J_n(k1 a) J_n'(k a) - k1 J_n'(k1 a) J_n(k a)] / D_n
    b_n = -2i / (pi a) / D_n
    D_n = k1 J_n'(k1 a) H_n(k a) - k J_n(k1 a) H_n'(k a),

where H_n is the first-kind Hankel function, so that

    u^s(x)   = sum_n i^n a_n H_n(k r)  e^{i n (theta - theta_d)}   (r >= a)
    u(x)     = sum_n i^n b_n J_n(k1 r) e^{i n (theta - theta_d)}   (r <  a)
    u_inf    = sqrt(2/(pi k)) e^{-i pi/4} sum_n a_n e^{i n (theta_obs - theta_d)}.

This module exists as an independent oracle for tests; it shares no machinery
with the grid solver.
"""

from __future__ import annotations

import numpy as np
from scipy.special import h1vp, hankel1, jv, jvp

from .core import FarField, ScatterConfig, direction_set
from .errors import SeriesDivergence

__all__ = ["disk_oracle", "disk_total_field"]

_MAX_ORDER = 200
_TAIL_FRACTION = 1e-12


def _series_coefficients(contrast: float, radius: float, k: float) -> tuple[np.ndarray, np.ndarray]:
    """(a_n, b_n) for n = 0..M, truncated once the last term is negligible."""
    if contrast <= -1.0:
        raise ValueError(f"contrast must exceed -1, got {contrast}")
    if radius <= 0:
        raise ValueError(f"disk radius must be positive, got {radius}")
    k1 = k * np.sqrt(1.0 + contrast)
    order = max(8, int(np.ceil(k * radius)) + 8)
    while True:
        if order > _MAX_ORDER:
            raise SeriesDivergence(
                f"cylinder series did not settle within order {_MAX_ORDER}"
            )
        n = np.arange(order + 1)
        ja, jda = jv(n, k1 * radius), jvp(n, k1 * radius)
        jb, jdb = jv(n, k * radius), jvp(n, k * radius)
        hb, hdb = hankel1(n, k * radius), h1vp(n, k * radius)
        d = k1 * jda * hb - k * ja * hdb
        a_n = (k * ja * jdb - k1 * jda * jb) / d
        b_n = (-2j / (np.pi * radius)) / d
        total = np.sum(np.abs(a_n))
        if total == 0.0 or np.abs(a_n[-1]) < _TAIL_FRACTION * total:
            return a_n, b_n
        order += 8


def disk_oracle(contrast: float, radius: float, cfg: ScatterConfig) -> FarField:
    """Far-field matrix of the penetrable disk on the config's direction sets.

    Depends on the observation and incidence angles only through their
    difference, which the p x q assembly below makes explicit.
    """
    if radius > cfg.rho:
        raise ValueError(f"disk radius {radius} exceeds rho={cfg.rho}")
    a_n, _ = _series_coefficients(contrast, radius, cfg.k)
    ang_p = 2.0 * np.pi * np.arange(cfg.p) / cfg.p
    ang_q = 2.0 * np.pi * np.arange(cfg.q) / cfg.q
    dang = ang_p[:, None] - ang_q[None, :]
    n = np.arange(1, a_n.size)
    vals = a_n[0] + 2.0 * np.einsum("n,npq->pq", a_n[1:], np.cos(n[:, None, None] * dang[None]))
    amp = np.sqrt(2.0 / (np.pi * cfg.k)) * np.exp(-1j * np.pi / 4.0)
    return FarField(cfg.k, amp * vals)


def disk_total_field(
    contrast: float,
    radius: float,
    k: float,
    points: np.ndarray,
    direction: np.ndarray,
) -> np.ndarray:
    """Total field of the penetrable disk at arbitrary points.

    points is (N, 2); direction a unit vector.  Interior points use the
    J_n(k1 r) expansion, exterior ones the incident wave plus the Hankel
    series.
    """
    pts = np.asarray(points, dtype=float)
    d = np.asarray(direction, dtype=float)
    a_n, b_n = _series_coefficients(contrast, radius, k)
    k1 = k * np.sqrt(1.0 + contrast)
    r = np.hypot(pts[:, 0], pts[:, 1])
    phi = np.arctan2(pts[:, 1], pts[:, 0]) - np.arctan2(d[1], d[0])
    out = np.empty(pts.shape[0], dtype=np.complex128)
    inner = r < radius
    n = np.arange(a_n.size)
    i_n = 1j**n

    if np.any(inner):
        rad = jv(n[None, :], k1 * r[inner, None]) * (i_n * b_n)[None, :]
        ang = np.cos(n[None, 1:] * phi[inner, None])
        out[inner] = rad[:, 0] + 2.0 * np.sum(rad[:, 1:] * ang, axis=1)
    if np.any(~inner):
        ext = ~inner
        rad = hankel1(n[None, :], k * r[ext, None]) * (i_n * a_n)[None, :]
        ang = np.cos(n[None, 1:] * phi[ext, None])
        scat = rad[:, 0] + 2.0 * np.sum(rad[:, 1:] * ang, axis=1)
        out[ext] = np.exp(1j * k * pts[ext] @ d) + scat
    return out
