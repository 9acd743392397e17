"""Reconstruction algorithms built on the linearized far-field map.

Four entry points, in increasing order of machinery:

  landweber              gradient-type iteration with the spectral stepsize
                         1 / ||F'(m_i)||^2
  irgnm                  iteratively regularized Gauss-Newton: per step a
                         Tikhonov-regularized linearized least-squares
                         problem solved by conjugate gradients
  combined               multi-frequency Landweber at a coarse grid, upscale,
                         then IRGNM at a fine grid and a final frequency
  learned_combined       combined pipeline alternating a learned projector
                         with IRGNM refinements, with a two-residual
                         stopping rule

All of them append to a ResidualLog; stage labels are space-free so the
log serializes one entry per line.  Landweber and IRGNM log the residual
norm ||u_delta - F(m_i)|| before every update and once more for the
final iterate, so a stage with N updates carries N + 1 entries.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    ContrastGrid,
    FarField,
    ResidualLog,
    ScatterConfig,
    downscale,
    normalize,
    upscale,
)
from .errors import ConfigError, DimensionMismatch
from .fileio import write_contrast
from .forward import far_field, solve_forward
from .linearize import LinearizedMap, operator_norm
from .projector import ProjectorWeights, project_contrast

__all__ = [
    "LandweberParams",
    "IrgnmParams",
    "CombinedParams",
    "LearnedParams",
    "CombinedResult",
    "LearnedResult",
    "landweber",
    "irgnm",
    "multi_frequency_landweber",
    "combined",
    "learned_combined",
    "simplified_learned_combined",
]

# Alg. 4 initializes both stopping residuals to 10^4 before the first
# outer iteration.
_RESIDUAL_INIT = 1e4


def _check_data(data: FarField, cfg: ScatterConfig) -> None:
    if data.values.shape != (cfg.p, cfg.q):
        raise DimensionMismatch(
            f"far-field data is {data.values.shape}, config wants ({cfg.p}, {cfg.q})"
        )
    if data.k != cfg.k:
        raise ConfigError(f"data wavenumber {data.k} != config wavenumber {cfg.k}")


def _check_initial(m: ContrastGrid, cfg: ScatterConfig) -> None:
    if m.grid != cfg.grid:
        raise DimensionMismatch(
            f"initial guess lives on {m.grid}, config wants {cfg.grid}"
        )


def _check_alphas(alphas, n_needed: int) -> tuple:
    alphas = tuple(float(a) for a in alphas)
    if len(alphas) < n_needed:
        raise ConfigError(f"need at least {n_needed} alphas, got {len(alphas)}")
    if any(not np.isfinite(a) or a <= 0.0 for a in alphas):
        raise ConfigError("regularization parameters must be positive and finite")
    if any(alphas[i + 1] > alphas[i] for i in range(len(alphas) - 1)):
        raise ConfigError("regularization parameters must be nonincreasing")
    # A factor sigma > 1 with alpha_i <= sigma * alpha_{i+1} always exists
    # for a finite positive nonincreasing sequence, so nothing else to check.
    return alphas


def _forward_residual(m: ContrastGrid, data: FarField, cfg: ScatterConfig) -> float:
    fields = solve_forward(m, cfg)
    ff = far_field(m, fields, cfg)
    return float(np.linalg.norm(data.values - ff.values))


def _snapshot(snapshot_dir, name: str, m: ContrastGrid) -> None:
    if snapshot_dir is not None:
        write_contrast(Path(snapshot_dir) / f"{name}.ctr", m)


@dataclass(frozen=True)
class LandweberParams:
    """Iteration count and start iterate for the Landweber method."""

    n_la: int
    initial: ContrastGrid
    norm_tol: float = 1e-3  # power-iteration tolerance for the stepsize

    def __post_init__(self):
        if self.n_la < 1:
            raise ConfigError(f"n_la must be >= 1, got {self.n_la}")
        if self.norm_tol <= 0.0:
            raise ConfigError(f"norm_tol must be positive, got {self.norm_tol}")


def landweber(
    params: LandweberParams,
    data: FarField,
    cfg: ScatterConfig,
    log: ResidualLog | None = None,
    stage: str = "landweber",
) -> tuple[ContrastGrid, ResidualLog]:
    """Run exactly n_la updates m += J*(u_delta - F(m)) / ||J||^2.

    The spectral norm is estimated by power iteration, warm-started from
    the previous iteration's eigenvector since the map changes slowly.
    """
    _check_data(data, cfg)
    _check_initial(params.initial, cfg)
    if log is None:
        log = ResidualLog()
    m = params.initial
    est = None
    for i in range(params.n_la):
        jmap = LinearizedMap.build(m, cfg)
        r = data.values - jmap.base_far_field().values
        log.add(stage, i, float(np.linalg.norm(r)))
        est = operator_norm(
            jmap, tol=params.norm_tol, start=None if est is None else est.vector
        )
        if est.value > 0.0:
            m = m.with_values(m.values + jmap.adjoint_raw(r) / est.value**2)
        # est.value == 0 means J = 0, hence J* r = 0: the iterate is already
        # a fixed point and the update is skipped rather than divided by zero.
    log.add(stage, params.n_la, _forward_residual(m, data, cfg))
    return m, log


@dataclass(frozen=True)
class IrgnmParams:
    """Settings for the iteratively regularized Gauss-Newton method.

    alphas must be positive and nonincreasing; the anchor of the
    regularization term is the initial guess itself.
    """

    n_ir: int
    alphas: tuple
    initial: ContrastGrid
    cg_tol: float = 1e-4
    cg_maxiter: int = 50

    def __post_init__(self):
        if self.n_ir < 1:
            raise ConfigError(f"n_ir must be >= 1, got {self.n_ir}")
        object.__setattr__(self, "alphas", _check_alphas(self.alphas, self.n_ir))
        if self.cg_tol <= 0.0 or self.cg_maxiter < 1:
            raise ConfigError("cg_tol must be positive and cg_maxiter >= 1")


def _cg_normal(
    jmap: LinearizedMap, alpha: float, rhs: np.ndarray, tol: float, maxiter: int
) -> tuple[np.ndarray, float]:
    """CG on the regularized normal equations (J*J + alpha I) h = rhs.

    Returns the iterate and the final relative residual (0 for a zero
    right-hand side, which has the exact solution h = 0).
    """
    h = np.zeros_like(rhs)
    r0 = float(np.linalg.norm(rhs))
    if r0 == 0.0:
        return h, 0.0
    r = rhs.copy()
    p = r.copy()
    rr = np.vdot(r, r).real
    for _ in range(maxiter):
        ap = jmap.adjoint_raw(jmap.apply_raw(p)) + alpha * p
        denom = np.vdot(p, ap).real
        if denom <= 0.0:
            break  # round-off exhausted a positive definite system
        gamma = rr / denom
        h += gamma * p
        r -= gamma * ap
        rr_new = np.vdot(r, r).real
        if np.sqrt(rr_new) <= tol * r0:
            rr = rr_new
            break
        p = r + (rr_new / rr) * p
        rr = rr_new
    return h, float(np.sqrt(rr) / r0)


def irgnm(
    params: IrgnmParams,
    data: FarField,
    cfg: ScatterConfig,
    log: ResidualLog | None = None,
    stage: str = "irgnm",
) -> tuple[ContrastGrid, ResidualLog]:
    """Gauss-Newton steps h from (J*J + alpha_i I) h = J*(u_delta - F(m)) -
    alpha_i (m - m0), with m0 the initial guess.

    A CG run that exhausts cg_maxiter is recorded as a log entry under
    the stage label suffixed "_cgwarn" carrying the relative residual.
    """
    _check_data(data, cfg)
    _check_initial(params.initial, cfg)
    if log is None:
        log = ResidualLog()
    m0 = params.initial.values
    m = params.initial
    for i in range(params.n_ir):
        jmap = LinearizedMap.build(m, cfg)
        b = data.values - jmap.base_far_field().values
        log.add(stage, i, float(np.linalg.norm(b)))
        alpha = params.alphas[i]
        rhs = jmap.adjoint_raw(b) - alpha * (m.values - m0)
        h, rel = _cg_normal(jmap, alpha, rhs, params.cg_tol, params.cg_maxiter)
        if rel > params.cg_tol:
            log.add(f"{stage}_cgwarn", i, rel)
        m = m.with_values(m.values + h)
    log.add(stage, params.n_ir, _forward_residual(m, data, cfg))
    return m, log


@dataclass(frozen=True)
class CombinedParams:
    """Multi-frequency Landweber stage followed by one IRGNM stage.

    The Landweber sweeps run at wavenumbers frequencies[0] < ... on an
    n1 grid from a zero initial guess, each consuming its own far-field
    data; the result is upscaled by d = n2 // n1 and refined by IRGNM at
    k_next on the n2 grid.
    """

    frequencies: tuple
    landweber_data: tuple
    n_la: int
    n1: int
    k_next: float
    irgnm_data: FarField
    n_ir: int
    alphas: tuple
    n2: int
    cg_tol: float = 1e-4
    cg_maxiter: int = 50
    norm_tol: float = 1e-3

    def __post_init__(self):
        freqs = tuple(float(k) for k in self.frequencies)
        data = tuple(self.landweber_data)
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "landweber_data", data)
        object.__setattr__(self, "alphas", _check_alphas(self.alphas, self.n_ir))
        if not freqs:
            raise ConfigError("the Landweber stage needs at least one frequency")
        if any(freqs[i + 1] <= freqs[i] for i in range(len(freqs) - 1)):
            raise ConfigError(f"frequencies must be strictly increasing: {freqs}")
        if len(data) != len(freqs):
            raise ConfigError(
                f"{len(freqs)} frequencies but {len(data)} far-field datasets"
            )
        for k, ff in zip(freqs, data):
            if ff.k != k:
                raise ConfigError(f"dataset at k={ff.k} listed under frequency {k}")
        if self.irgnm_data.k != self.k_next:
            raise ConfigError(
                f"IRGNM dataset at k={self.irgnm_data.k}, expected k_next={self.k_next}"
            )
        if self.n_la < 1 or self.n_ir < 1:
            raise ConfigError("n_la and n_ir must be >= 1")
        if self.n2 < self.n1 or self.n2 % self.n1:
            raise ConfigError(f"n2 = {self.n2} must be an integer multiple of n1 = {self.n1}")

    @property
    def d(self) -> int:
        return self.n2 // self.n1


@dataclass(frozen=True)
class CombinedResult:
    """Final IRGNM iterate plus the stage intermediates, for inspection."""

    m_hat: ContrastGrid  # IRGNM output on the n2 grid
    m_tilde_n1: ContrastGrid  # Landweber output on the n1 grid
    m_tilde_n2: ContrastGrid  # its upscaling, the IRGNM initial guess
    log: ResidualLog


def multi_frequency_landweber(
    frequencies,
    data,
    n_la: int,
    cfg: ScatterConfig,
    log: ResidualLog | None = None,
    norm_tol: float = 1e-3,
    snapshot_dir=None,
) -> tuple[ContrastGrid, ResidualLog]:
    """Landweber sweeps at increasing wavenumbers from a zero initial guess.

    Each sweep starts from the previous one's output; cfg.k is replaced
    per sweep.  Stage labels are "landweber<idx>_k<k>".
    """
    if log is None:
        log = ResidualLog()
    m = ContrastGrid(cfg.grid, np.zeros((cfg.n, cfg.n)))
    for idx, (k, ff) in enumerate(zip(frequencies, data), 1):
        stage = f"landweber{idx}_k{k:g}"
        lw = LandweberParams(n_la, m, norm_tol=norm_tol)
        m, _ = landweber(lw, ff, cfg.replace(k=k), log=log, stage=stage)
        _snapshot(snapshot_dir, stage, m)
    return m, log


def _landweber_sweep(
    params: CombinedParams, cfg: ScatterConfig, log: ResidualLog, snapshot_dir
) -> ContrastGrid:
    m, _ = multi_frequency_landweber(
        params.frequencies,
        params.landweber_data,
        params.n_la,
        cfg.replace(n=params.n1, k=params.frequencies[0]),
        log=log,
        norm_tol=params.norm_tol,
        snapshot_dir=snapshot_dir,
    )
    return m


def combined(
    params: CombinedParams, cfg: ScatterConfig, snapshot_dir=None
) -> CombinedResult:
    """Landweber sweeps from zero, upscale, one IRGNM refinement.

    cfg supplies rho, the direction counts, and solver settings; its n
    and k are replaced per stage.
    """
    log = ResidualLog()
    m1 = _landweber_sweep(params, cfg, log, snapshot_dir)
    m2 = upscale(m1, params.d)
    ir = IrgnmParams(
        params.n_ir,
        params.alphas,
        m2,
        cg_tol=params.cg_tol,
        cg_maxiter=params.cg_maxiter,
    )
    stage = f"irgnm_k{params.k_next:g}"
    m_hat, _ = irgnm(
        ir, params.irgnm_data, cfg.replace(n=params.n2, k=params.k_next), log=log, stage=stage
    )
    _snapshot(snapshot_dir, stage, m_hat)
    return CombinedResult(m_hat, m1, m2, log)


@dataclass(frozen=True)
class LearnedParams:
    """Combined-stage settings plus projector weights and the outer cap."""

    combined: CombinedParams
    weights: ProjectorWeights
    n_o: int

    def __post_init__(self):
        if self.n_o < 0:
            raise ConfigError(f"n_o must be >= 0, got {self.n_o}")
        if self.combined.n1 % 2**self.weights.depth:
            raise ConfigError(
                f"projector depth {self.weights.depth} does not divide the "
                f"n1 = {self.combined.n1} grid"
            )


@dataclass(frozen=True)
class LearnedResult:
    """Projector-stage contrast the stopping rule settled on, plus context."""

    m_hat: ContrastGrid  # returned projector output on the n1 grid
    m_tilde_n1: ContrastGrid  # Landweber output that seeded the loop
    outer_iterations: int  # outer loops actually run
    stopped_early: bool  # True if the two-residual rule fired before the cap
    log: ResidualLog


def learned_combined(
    params: LearnedParams, cfg: ScatterConfig, snapshot_dir=None
) -> LearnedResult:
    """Alternate the learned projector with IRGNM refinements.

    Outer iteration i (0-based): scale the projector output of the
    normalized current iterate back to its sup-norm, upscale, refine by
    IRGNM at k_next, and compare the residuals before (r0) and after
    (r1) the refinement against the previous outer iteration.  When both
    increase, the previous projector output is returned; otherwise the
    refinement is downscaled and fed back.  At most n_o + 1 outer
    iterations run; r0 and r1 start at 1e4.  Both residual sequences are
    logged under stages "r0" and "r1".
    """
    c = params.combined
    log = ResidualLog()
    m_tilde_n1 = _landweber_sweep(c, cfg, log, snapshot_dir)
    cfg2 = cfg.replace(n=c.n2, k=c.k_next)
    m_tilde = m_tilde_n1
    r0_prev = r1_prev = _RESIDUAL_INIT
    last_proj = None
    stopped = False
    outer = 0
    m_bar = m_tilde_n1
    for i in range(params.n_o + 1):
        outer = i + 1
        scale = m_tilde.norm_inf
        proj = project_contrast(params.weights, normalize(m_tilde))
        m_bar = proj.with_values(scale * proj.values)
        _snapshot(snapshot_dir, f"outer{i + 1}_proj", m_bar)
        ir = IrgnmParams(
            c.n_ir, c.alphas, upscale(m_bar, c.d), cg_tol=c.cg_tol, cg_maxiter=c.cg_maxiter
        )
        stage = f"outer{i + 1}_irgnm"
        refined, _ = irgnm(ir, c.irgnm_data, cfg2, log=log, stage=stage)
        _snapshot(snapshot_dir, stage, refined)
        hist = log.stage(stage)
        r0 = hist[0][1]  # residual of the projected iterate, before refinement
        r1 = hist[-1][1]  # residual after refinement
        log.add("r0", i + 1, r0)
        log.add("r1", i + 1, r1)
        if r0 > r0_prev and r1 > r1_prev:
            stopped = True
            if last_proj is not None:
                m_bar = last_proj
            # with no previous projector output the current one is the best
            # available iterate, so it is returned as-is
            break
        last_proj = m_bar
        r0_prev, r1_prev = r0, r1
        m_tilde = downscale(refined, c.d)
    return LearnedResult(m_bar, m_tilde_n1, outer, stopped, log)


def simplified_learned_combined(
    params: LearnedParams, cfg: ScatterConfig, snapshot_dir=None
) -> LearnedResult:
    """learned_combined run with the synthetic-stage-only projector.

    The loop is identical; the caller supplies weights trained on the
    first stage of the curriculum only.  Kept as a named entry point so
    runs are explicit about which projector they used.
    """
    return learned_combined(params, cfg, snapshot_dir=snapshot_dir)
