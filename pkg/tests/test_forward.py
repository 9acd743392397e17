"""Forward solver: kernel oracle, solver contracts, far fields, noise.

The brute-force oracle builds the dense volume-potential matrix from its
definition: h^2 * (i/4) * H0(k|x_i - x_j|) off the diagonal, truncated at
radius 2*rho, with the diagonal equal to the small-argument cell mean of
Phi whose log-mean term is integrated numerically here rather than taken
from the library's closed form.
"""

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import hankel1

import invscat.forward as fwd
from invscat import (
    ContrastGrid,
    DimensionMismatch,
    FarField,
    Grid,
    NoConvergence,
    ScatterConfig,
    add_noise,
    apply_volume_potential,
    born_far_field,
    disk_oracle,
    far_field,
    get_kernel,
    incident_fields,
    solve_forward,
)
from invscat.forward import GreenKernel, far_field_constant

from conftest import disk_contrast

EULER_GAMMA = 0.5772156649015328606


def _mean_log_r_numeric(h: float) -> float:
    # mean of ln|x| over the square [-h/2, h/2]^2, by symmetry 8 wedges:
    # (8/h^2) * int_0^{pi/4} int_0^{h/(2 cos t)} ln(r) r dr dt, with the
    # inner integral in closed form R^2/2 (ln R - 1/2).
    def outer(t):
        r_max = h / (2.0 * np.cos(t))
        return 0.5 * r_max**2 * (np.log(r_max) - 0.5)

    val, err = quad(outer, 0.0, np.pi / 4.0, epsabs=1e-14, epsrel=1e-13)
    assert err < 1e-12
    return 8.0 * val / h**2


def _dense_potential_matrix(grid: Grid, k: float) -> np.ndarray:
    """Independent n^2 x n^2 realization of the truncated volume potential."""
    n, h = grid.n, grid.h
    idx = np.arange(n)
    di = idx[:, None, None, None] - idx[None, None, :, None]
    dj = idx[None, :, None, None] - idx[None, None, None, :]
    d2 = (di**2 + dj**2).reshape(n * n, n * n)
    r = h * np.sqrt(d2)
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = 0.25j * hankel1(0, k * r)
    mean_log = _mean_log_r_numeric(h)
    vals[d2 == 0] = 0.25j - (EULER_GAMMA + np.log(k / 2.0) + mean_log) / (2.0 * np.pi)
    vals[d2 > (n // 2) ** 2] = 0.0
    return h * h * vals


# ------------------------------------------------------ volume potential


def test_apply_volume_potential_brute_force():
    grid = Grid(1.0, 16)
    k = 3.0
    kernel = GreenKernel.build(grid, k)
    rng = np.random.default_rng(0)
    f = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
    got = apply_volume_potential(kernel, f)
    want = (_dense_potential_matrix(grid, k) @ f.ravel()).reshape(16, 16)
    rel = np.linalg.norm(got - want) / np.linalg.norm(want)
    assert rel <= 1e-12


def test_volume_potential_delta_column():
    grid = Grid(1.0, 16)
    k, h = 2.0, grid.h
    kernel = GreenKernel.build(grid, k)
    f = np.zeros((16, 16), complex)
    f[8, 8] = 1.0
    out = apply_volume_potential(kernel, f)
    # off-singular cells carry h^2 * Phi at the center distance
    for i, j in [(8, 9), (10, 8), (12, 13)]:
        dist = h * np.hypot(i - 8, j - 8)
        want = h * h * 0.25j * hankel1(0, k * dist)
        assert abs(out[i, j] - want) <= 1e-13 * abs(want)


def test_volume_potential_zero_and_shape():
    grid = Grid(1.0, 16)
    kernel = GreenKernel.build(grid, 3.0)
    np.testing.assert_array_equal(
        apply_volume_potential(kernel, np.zeros((16, 16))), np.zeros((16, 16))
    )
    with pytest.raises(DimensionMismatch):
        apply_volume_potential(kernel, np.zeros((8, 8)))


def test_singular_cell_matches_full_quadrature():
    # The small-argument cell mean must agree with numerically integrating
    # the exact (i/4) H0(kr) over the cell; the expansion error is O((kh)^2).
    grid = Grid(1.0, 512)
    k, h = 1.0, grid.h
    got = GreenKernel.build(grid, k).tensor[0, 0] / h**2

    def wedge(fn):
        def outer(t):
            r_max = h / (2.0 * np.cos(t))
            inner, _ = quad(lambda r: fn(k * r) * r, 0.0, r_max, epsabs=1e-15)
            return inner

        val, _ = quad(outer, 0.0, np.pi / 4.0, epsabs=1e-15)
        return 8.0 * val / h**2

    want = 0.25j * (wedge(lambda z: hankel1(0, z).real) + 1j * wedge(lambda z: hankel1(0, z).imag))
    assert abs(got - want) / abs(want) <= 1e-3


def test_kernel_cache_returns_same_object():
    a = get_kernel(Grid(1.0, 8), 3.0)
    b = get_kernel(Grid(1.0, 8), 3.0)
    assert a is b
    assert get_kernel(Grid(1.0, 8), 5.0) is not a


# ------------------------------------------------------- forward solves


def test_solve_forward_zero_contrast_exact():
    cfg = ScatterConfig(rho=1.0, k=3.0, n=16, p=4, q=4)
    m = ContrastGrid(cfg.grid, np.zeros((16, 16)))
    fields = solve_forward(m, cfg)
    np.testing.assert_array_equal(fields.fields, incident_fields(cfg))
    assert fields.residual == 0.0
    np.testing.assert_array_equal(
        far_field(m, fields, cfg).values, np.zeros((4, 4))
    )


def test_solve_forward_residual_contract():
    cfg = ScatterConfig(rho=1.0, k=3.0, n=32, p=4, q=4)
    m = disk_contrast(cfg.grid, 0.8 + 0.3j, 0.6)
    fields = solve_forward(m, cfg)
    kernel = get_kernel(cfg.grid, cfg.k)
    ui = incident_fields(cfg)
    mv = np.where(cfg.grid.inside_mask(), m.values, 0.0)
    res = fields.fields - ui - cfg.k**2 * kernel.convolve(mv[None] * fields.fields)
    rel = np.linalg.norm(res.reshape(4, -1), axis=1) / np.linalg.norm(
        ui.reshape(4, -1), axis=1
    )
    assert np.max(rel) <= cfg.linsolve_tol
    assert fields.residual == pytest.approx(np.max(rel))


def test_disk_interior_field_matches_series():
    # constant m = 1 on disk radius 0.5, k = 3: interior total field vs the
    # Bessel-series solution, <= 1% relative L2 over interior pixels.
    from invscat import disk_total_field

    cfg = ScatterConfig(rho=1.0, k=3.0, n=128, p=1, q=1)
    m = disk_contrast(cfg.grid, 1.0, 0.5)
    fields = solve_forward(m, cfg)
    mask = cfg.grid.inside_mask(0.5)
    x1, x2 = cfg.grid.center_mesh()
    pts = np.stack([x1[mask], x2[mask]], axis=1)
    want = disk_total_field(1.0, 0.5, cfg.k, pts, np.array([1.0, 0.0]))
    got = fields.fields[0][mask]
    assert np.linalg.norm(got - want) / np.linalg.norm(want) <= 0.01


def test_gmres_path_matches_dense_path(monkeypatch):
    cfg = ScatterConfig(rho=1.0, k=3.0, n=32, p=8, q=4)
    m = disk_contrast(cfg.grid, 1.0, 0.5)
    dense = far_field(m, solve_forward(m, cfg), cfg)
    monkeypatch.setattr(fwd, "DENSE_SUPPORT_CAP", 0)
    iterative = far_field(m, solve_forward(m, cfg), cfg)
    rel = np.linalg.norm(iterative.values - dense.values) / np.linalg.norm(dense.values)
    assert rel <= 1e-5


def test_gmres_exhaustion_raises(monkeypatch):
    monkeypatch.setattr(fwd, "DENSE_SUPPORT_CAP", 0)
    cfg = ScatterConfig(
        rho=1.0, k=3.0, n=32, p=4, q=4, linsolve_tol=1e-12, linsolve_maxiter=2
    )
    m = disk_contrast(cfg.grid, 1.0, 0.5)
    with pytest.raises(NoConvergence):
        solve_forward(m, cfg)


def test_contrast_grid_mismatch_rejected():
    cfg = ScatterConfig(rho=1.0, k=3.0, n=16, p=4, q=4)
    with pytest.raises(DimensionMismatch):
        solve_forward(ContrastGrid(Grid(1.0, 8), np.zeros((8, 8))), cfg)


# ----------------------------------------------------------- far field


def test_far_field_constant_value():
    c = far_field_constant(3.0)
    assert abs(c) == pytest.approx(3.0**1.5 / np.sqrt(8.0 * np.pi))
    assert np.angle(c) == pytest.approx(np.pi / 4.0)


def test_disk_far_field_monotone_refinement():
    oracle = disk_oracle(1.0, 0.5, ScatterConfig(rho=1.0, k=3.0, n=64, p=32, q=16))
    errs = []
    for n in (64, 128):
        cfg = ScatterConfig(rho=1.0, k=3.0, n=n, p=32, q=16)
        m = disk_contrast(cfg.grid, 1.0, 0.5)
        ff = far_field(m, solve_forward(m, cfg), cfg)
        errs.append(np.linalg.norm(ff.values - oracle.values) / np.linalg.norm(oracle.values))
    assert errs[1] <= errs[0]


# ---------------------------------------------------------------- born


def test_born_zero_and_linearity():
    cfg = ScatterConfig(rho=1.0, k=3.0, n=16, p=8, q=4)
    zero = ContrastGrid(cfg.grid, np.zeros((16, 16)))
    np.testing.assert_array_equal(born_far_field(zero, cfg).values, np.zeros((8, 4)))
    rng = np.random.default_rng(2)
    mask = cfg.grid.inside_mask()
    m1 = ContrastGrid(cfg.grid, rng.standard_normal((16, 16)) * mask)
    m2 = ContrastGrid(cfg.grid, rng.standard_normal((16, 16)) * mask)
    lhs = born_far_field(
        ContrastGrid(cfg.grid, 2.0 * m1.values - 0.5 * m2.values), cfg
    ).values
    rhs = 2.0 * born_far_field(m1, cfg).values - 0.5 * born_far_field(m2, cfg).values
    assert np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs) <= 1e-12


def test_born_first_order_accuracy():
    # ||F(sm) - F_b(sm)|| / ||F_b(sm)|| = O(s): shrinking s by 10 shrinks the
    # relative gap by roughly 10.
    cfg = ScatterConfig(rho=1.0, k=1.0, n=32, p=8, q=8)
    base = disk_contrast(cfg.grid, 0.01, 0.6)

    def gap(scale):
        m = ContrastGrid(cfg.grid, scale * base.values)
        full = far_field(m, solve_forward(m, cfg), cfg).values
        born = born_far_field(m, cfg).values
        return np.linalg.norm(full - born) / np.linalg.norm(born)

    ratio = gap(1.0) / gap(0.1)
    assert 5.0 <= ratio <= 20.0


# --------------------------------------------------------------- noise


def test_add_noise_identity_and_determinism():
    rng = np.random.default_rng(4)
    ff = FarField(3.0, rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8)))
    np.testing.assert_array_equal(add_noise(ff, 0.0, seed=1).values, ff.values)
    a = add_noise(ff, 0.05, seed=42)
    b = add_noise(ff, 0.05, seed=42)
    np.testing.assert_array_equal(a.values, b.values)
    c = add_noise(ff, 0.05, seed=43)
    assert np.any(c.values != a.values)
    assert a.k == ff.k


def test_add_noise_monte_carlo_level():
    ff = FarField(1.0, np.full((64, 64), 2.0 + 1.0j))
    noisy = add_noise(ff, 0.05, seed=7)
    # a_delta = a (1 + delta xi) with real standard normal xi
    xi = (noisy.values / ff.values - 1.0) / 0.05
    np.testing.assert_allclose(xi.imag, 0.0, atol=1e-12)
    assert abs(np.std(xi.real) - 1.0) <= 0.1
    assert abs(np.mean(xi.real)) <= 0.1
