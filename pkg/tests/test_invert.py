"""Landweber, IRGNM, the combined sweep, and the learned outer loop."""

import numpy as np
import pytest

from invscat import (
    CombinedParams,
    ConfigError,
    ContrastGrid,
    DimensionMismatch,
    FarField,
    IrgnmParams,
    LandweberParams,
    LearnedParams,
    ResidualLog,
    ScatterConfig,
    combined,
    far_field,
    irgnm,
    jacobian_adjoint,
    jacobian_apply,
    landweber,
    learned_combined,
    multi_frequency_landweber,
    simplified_learned_combined,
    solve_forward,
)
from invscat.linearize import LinearizedMap

from conftest import disk_contrast, seeded_weights


def _forward(m, cfg):
    return far_field(m, solve_forward(m, cfg), cfg)


def _zero(cfg):
    return ContrastGrid(cfg.grid, np.zeros((cfg.n, cfg.n)))


# --------------------------------------------------------- validation


def test_params_validation():
    cfg = ScatterConfig(rho=1.0, k=3.0, n=16, p=4, q=4)
    zero = _zero(cfg)
    with pytest.raises(ConfigError):
        LandweberParams(n_la=0, initial=zero)
    with pytest.raises(ConfigError):
        IrgnmParams(n_ir=0, alphas=(1.0,), initial=zero)
    with pytest.raises(ConfigError):
        IrgnmParams(n_ir=2, alphas=(1.0,), initial=zero)  # too few alphas
    with pytest.raises(ConfigError):
        IrgnmParams(n_ir=2, alphas=(1.0, 2.0), initial=zero)  # increasing
    with pytest.raises(ConfigError):
        IrgnmParams(n_ir=2, alphas=(1.0, 0.0), initial=zero)  # not positive


def test_data_checks():
    cfg = ScatterConfig(rho=1.0, k=3.0, n=16, p=4, q=4)
    zero = _zero(cfg)
    params = LandweberParams(n_la=1, initial=zero)
    with pytest.raises(ConfigError):
        landweber(params, FarField(2.0, np.zeros((4, 4), complex)), cfg)
    with pytest.raises(DimensionMismatch):
        landweber(params, FarField(3.0, np.zeros((4, 8), complex)), cfg)


def test_combined_params_validation():
    cfg = ScatterConfig(rho=1.0, k=2.0, n=16, p=4, q=4)
    ff = FarField(2.0, np.zeros((4, 4), complex))
    ff3 = FarField(3.0, np.zeros((4, 4), complex))
    good = dict(
        frequencies=(2.0, 3.0),
        landweber_data=(ff, ff3),
        n_la=1,
        n1=16,
        k_next=2.5,
        irgnm_data=FarField(2.5, np.zeros((4, 4), complex)),
        n_ir=1,
        alphas=(1.0,),
        n2=32,
    )
    CombinedParams(**good)
    with pytest.raises(ConfigError):
        CombinedParams(**{**good, "frequencies": (3.0, 2.0), "landweber_data": (ff3, ff)})
    with pytest.raises(ConfigError):
        CombinedParams(**{**good, "n2": 24})
    with pytest.raises(ConfigError):
        CombinedParams(**{**good, "landweber_data": (ff, ff)})  # k mismatch
    assert CombinedParams(**good).d == 2


# -------------------------------------------------------- fixed points


def test_landweber_fixed_point():
    cfg = ScatterConfig(rho=1.0, k=3.0, n=16, p=8, q=8)
    m0 = disk_contrast(cfg.grid, 0.5, 0.5)
    data = _forward(m0, cfg)
    params = LandweberParams(n_la=3, initial=m0)
    m_out, log = landweber(params, data, cfg)
    drift = np.linalg.norm(m_out.values - m0.values) / np.linalg.norm(m0.values)
    assert drift <= 3.0 * 1e-8  # 1e-8 per step
    assert [it for it, _ in log.stage("landweber")] == [0, 1, 2, 3]


def test_irgnm_fixed_point():
    cfg = ScatterConfig(rho=1.0, k=3.0, n=16, p=8, q=8)
    m0 = disk_contrast(cfg.grid, 0.5, 0.5)
    data = _forward(m0, cfg)
    params = IrgnmParams(n_ir=2, alphas=(1.0, 0.5), initial=m0)
    m_out, log = irgnm(params, data, cfg)
    drift = np.linalg.norm(m_out.values - m0.values) / np.linalg.norm(m0.values)
    assert drift <= 2.0 * 1e-8
    assert [it for it, _ in log.stage("irgnm")] == [0, 1, 2]


# ------------------------------------------------------------ descent


def test_landweber_descends_on_disk():
    cfg = ScatterConfig(rho=1.0, k=3.0, n=16, p=8, q=8)
    data = _forward(disk_contrast(cfg.grid, 0.5, 0.5), cfg)
    params = LandweberParams(n_la=100, initial=_zero(cfg))
    m_out, log = landweber(params, data, cfg)
    hist = log.stage("landweber")
    assert len(hist) == 101  # one pre-update entry per iteration plus final
    assert hist[-1][1] < hist[0][1]
    assert m_out.norm_inf > 0.1


def test_irgnm_descends_after_landweber():
    cfg = ScatterConfig(rho=1.0, k=3.0, n=16, p=8, q=8)
    data = _forward(disk_contrast(cfg.grid, 0.5, 0.5), cfg)
    m1, _ = landweber(LandweberParams(n_la=10, initial=_zero(cfg)), data, cfg)
    _, log = irgnm(
        IrgnmParams(n_ir=3, alphas=(10.0, 5.0, 2.5), initial=m1), data, cfg
    )
    hist = log.stage("irgnm")
    assert hist[-1][1] <= hist[0][1]


def test_irgnm_cg_warns_on_budget():
    cfg = ScatterConfig(rho=1.0, k=3.0, n=16, p=8, q=8)
    data = _forward(disk_contrast(cfg.grid, 0.5, 0.5), cfg)
    _, log = irgnm(
        IrgnmParams(
            n_ir=1, alphas=(0.001,), initial=_zero(cfg), cg_tol=1e-12, cg_maxiter=1
        ),
        data,
        cfg,
    )
    assert log.stage("irgnm_cgwarn")  # budget too small to meet cg_tol


def test_irgnm_first_step_matches_dense_normal_equations():
    cfg = ScatterConfig(rho=1.0, k=3.0, n=8, p=4, q=4)
    m0 = disk_contrast(cfg.grid, 0.5, 0.6)
    data = _forward(disk_contrast(cfg.grid, 0.7, 0.5), cfg)
    alpha = 0.3
    m1, _ = irgnm(
        IrgnmParams(n_ir=1, alphas=(alpha,), initial=m0, cg_tol=1e-12, cg_maxiter=400),
        data,
        cfg,
    )
    h_cg = (m1.values - m0.values).ravel()

    jmap = LinearizedMap.build(m0, cfg)
    cols = []
    for flat in range(cfg.n * cfg.n):
        e = np.zeros(cfg.n * cfg.n)
        e[flat] = 1.0
        cols.append(jacobian_apply(jmap, e.reshape(cfg.n, cfg.n)).values.ravel())
    a = np.stack(cols, axis=1)
    b = (data.values - jmap.base_far_field().values).ravel()
    h_dense = np.linalg.solve(
        a.conj().T @ a + alpha * np.eye(cfg.n * cfg.n), a.conj().T @ b
    )
    assert np.linalg.norm(h_cg - h_dense) / np.linalg.norm(h_dense) <= 1e-6


# ----------------------------------------------------------- combined


def _combined_params(cfg_n1, n2, n_la=2, n_ir=1, truth_value=0.8):
    """Simulate disk data at a finer grid and bundle combined params."""
    freqs = (2.0, 3.0)
    k_next = 2.5
    sim = ScatterConfig(rho=1.0, k=freqs[0], n=64, p=cfg_n1.p, q=cfg_n1.q)
    truth = disk_contrast(sim.grid, truth_value, 0.6)
    data = tuple(_forward(truth, sim.replace(k=k)) for k in freqs)
    ir_data = _forward(truth, sim.replace(k=k_next))
    return CombinedParams(
        frequencies=freqs,
        landweber_data=data,
        n_la=n_la,
        n1=cfg_n1.n,
        k_next=k_next,
        irgnm_data=ir_data,
        n_ir=n_ir,
        alphas=tuple(10.0 * 0.5**i for i in range(n_ir)),
        n2=n2,
    )


def test_combined_zero_data_stays_zero():
    cfg = ScatterConfig(rho=1.0, k=2.0, n=16, p=8, q=8)
    zero_ff = lambda k: FarField(k, np.zeros((8, 8), complex))
    params = CombinedParams(
        frequencies=(2.0, 3.0),
        landweber_data=(zero_ff(2.0), zero_ff(3.0)),
        n_la=2,
        n1=16,
        k_next=2.5,
        irgnm_data=zero_ff(2.5),
        n_ir=2,
        alphas=(1.0, 0.5),
        n2=32,
    )
    result = combined(params, cfg)
    assert result.m_hat.norm_inf <= 1e-6
    assert result.m_hat.grid.n == 32
    assert result.m_tilde_n1.grid.n == 16
    assert result.m_tilde_n2.grid.n == 32


def test_combined_reconstructs_disk(tmp_path):
    cfg = ScatterConfig(rho=1.0, k=2.0, n=16, p=8, q=8)
    params = _combined_params(cfg, 32, n_la=20, n_ir=3)
    result = combined(params, cfg, snapshot_dir=tmp_path)
    # reconstruction should recover the bulk of the disk contrast
    truth = disk_contrast(result.m_hat.grid, 0.8, 0.6)
    err = np.linalg.norm(result.m_hat.values - truth.values) / np.linalg.norm(truth.values)
    assert err < 0.6
    assert (tmp_path / "landweber1_k2.ctr").exists()
    assert (tmp_path / "landweber2_k3.ctr").exists()
    assert (tmp_path / "irgnm_k2.5.ctr").exists()
    stages = {s for s, _, _ in result.log.entries}
    assert {"landweber1_k2", "landweber2_k3", "irgnm_k2.5"} <= stages


def test_multi_frequency_landweber_descends():
    cfg = ScatterConfig(rho=1.0, k=2.0, n=16, p=8, q=8)
    params = _combined_params(cfg, 32, n_la=5)
    m_out, log = multi_frequency_landweber(
        params.frequencies, params.landweber_data, 5, cfg
    )
    assert m_out.grid.n == 16
    for stage in ("landweber1_k2", "landweber2_k3"):
        hist = log.stage(stage)
        assert len(hist) == 6
        assert hist[-1][1] < hist[0][1]


# ------------------------------------------------------------- learned


def test_learned_loop_semantics():
    cfg = ScatterConfig(rho=1.0, k=2.0, n=16, p=8, q=8)
    weights = seeded_weights(depth=2, base_channels=4, seed=5)
    for n_o in (0, 2):
        params = LearnedParams(
            combined=_combined_params(cfg, 32, n_la=2, n_ir=1),
            weights=weights,
            n_o=n_o,
        )
        result = learned_combined(params, cfg)
        assert result.m_hat.grid.n == 16  # output at resolution N1
        assert 1 <= result.outer_iterations <= n_o + 1
        r0 = result.log.stage("r0")
        r1 = result.log.stage("r1")
        assert len(r0) == result.outer_iterations == len(r1)
        for i in range(result.outer_iterations):
            assert result.log.stage(f"outer{i + 1}_irgnm")
        if n_o == 0:
            assert result.outer_iterations == 1 and not result.stopped_early


def test_simplified_is_same_loop():
    cfg = ScatterConfig(rho=1.0, k=2.0, n=16, p=8, q=8)
    params = LearnedParams(
        combined=_combined_params(cfg, 32), weights=seeded_weights(seed=5), n_o=1
    )
    a = learned_combined(params, cfg)
    b = simplified_learned_combined(params, cfg)
    np.testing.assert_array_equal(a.m_hat.values, b.m_hat.values)
    assert a.outer_iterations == b.outer_iterations


def test_learned_params_validation():
    cfg = ScatterConfig(rho=1.0, k=2.0, n=16, p=8, q=8)
    good = _combined_params(cfg, 32)
    with pytest.raises(ConfigError):
        LearnedParams(combined=good, weights=seeded_weights(), n_o=-1)
    with pytest.raises(ConfigError):
        # n1 = 16 not divisible by 2^depth for depth 5
        LearnedParams(combined=good, weights=seeded_weights(depth=5, seed=1), n_o=1)


def test_learned_snapshots(tmp_path):
    cfg = ScatterConfig(rho=1.0, k=2.0, n=16, p=8, q=8)
    params = LearnedParams(
        combined=_combined_params(cfg, 32), weights=seeded_weights(seed=5), n_o=0
    )
    learned_combined(params, cfg, snapshot_dir=tmp_path)
    names = {p.name for p in tmp_path.iterdir()}
    assert {"landweber1_k2.ctr", "landweber2_k3.ctr", "outer1_proj.ctr", "outer1_irgnm.ctr"} <= names


# ------------------------------------------------------- residual logs


def test_log_threading_and_prefixing():
    cfg = ScatterConfig(rho=1.0, k=3.0, n=16, p=4, q=4)
    data = _forward(disk_contrast(cfg.grid, 0.5, 0.5), cfg)
    shared = ResidualLog()
    landweber(LandweberParams(n_la=1, initial=_zero(cfg)), data, cfg, log=shared, stage="a")
    landweber(LandweberParams(n_la=1, initial=_zero(cfg)), data, cfg, log=shared, stage="b")
    assert shared.stage("a") and shared.stage("b")
