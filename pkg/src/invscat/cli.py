"""Command-line front end: simulate, reconstruct, eval, render, gen-data.

All commands read a JSON config file (flat key-value; unknown keys are
rejected) and take a few overriding flags.  Exit codes: 0 success, 2
configuration problems, 3 missing files, 4 solver non-convergence, 5
other I/O or data corruption.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .core import (
    ContrastGrid,
    ScatterConfig,
    downscale,
    relative_error,
    upscale,
)
from .dataset import emit_training_pairs, generate_dataset, load_digit_source
from .errors import (
    ConfigError,
    DimensionMismatch,
    InvscatError,
    MissingWeights,
    NoConvergence,
)
from .fileio import read_contrast, read_far_field, write_contrast, write_far_field
from .forward import add_noise, far_field, solve_forward
from .invert import (
    CombinedParams,
    IrgnmParams,
    LearnedParams,
    combined,
    irgnm,
    learned_combined,
    multi_frequency_landweber,
    simplified_learned_combined,
)
from .projector import load_weights

__all__ = ["main", "load_config"]

_FLOAT_KEYS = (
    "rho",
    "noise_delta",
    "irgnm_frequency",
    "alpha0",
    "alpha_factor",
    "linsolve_tol",
    "cg_tol",
    "norm_tol",
)
_INT_KEYS = (
    "p",
    "q",
    "seed",
    "sim_n",
    "n1",
    "n2",
    "n_la",
    "n_ir",
    "n_o",
    "linsolve_maxiter",
    "cg_maxiter",
    "workers",
    "count",
)
_STR_KEYS = (
    "weights",
    "snapshots",
    "images",
    "labels",
    "out_dir",
    "manifest",
    "pairs_out",
)
_NUMLIST_KEYS = ("frequencies", "amplitude_range")
_STRLIST_KEYS = ("data",)

_DEFAULTS = {
    "rho": 1.0,
    "p": 32,
    "q": 16,
    "seed": 0,
    "noise_delta": 0.05,
    "sim_n": 512,
    "frequencies": [3.0, 5.0, 7.0],
    "irgnm_frequency": 6.0,
    "n1": 64,
    "n2": 256,
    "n_la": 100,
    "n_ir": 10,
    "alpha0": 10.0,
    "alpha_factor": 0.5,
    "n_o": 20,
    "linsolve_tol": 1e-6,
    "linsolve_maxiter": 500,
    "cg_tol": 1e-4,
    "cg_maxiter": 50,
    "norm_tol": 1e-3,
    "workers": 1,
    "amplitude_range": [1.0, 5.0],
}


def load_config(path) -> dict:
    """Read and schema-check a JSON config; unknown keys are an error."""
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    known = _FLOAT_KEYS + _INT_KEYS + _STR_KEYS + _NUMLIST_KEYS + _STRLIST_KEYS
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {unknown}")
    cfg = dict(_DEFAULTS)
    cfg.update(raw)
    for key in _FLOAT_KEYS:
        if key in cfg:
            v = cfg[key]
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{path}: {key} must be a number, got {v!r}")
            cfg[key] = float(v)
    for key in _INT_KEYS:
        if key in cfg:
            v = cfg[key]
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"{path}: {key} must be an integer, got {v!r}")
    for key in _STR_KEYS:
        if key in cfg and not isinstance(cfg[key], str):
            raise ConfigError(f"{path}: {key} must be a string, got {cfg[key]!r}")
    for key in _NUMLIST_KEYS:
        if key in cfg:
            v = cfg[key]
            if not isinstance(v, list) or any(
                isinstance(x, bool) or not isinstance(x, (int, float)) for x in v
            ):
                raise ConfigError(f"{path}: {key} must be a list of numbers")
            cfg[key] = [float(x) for x in v]
    for key in _STRLIST_KEYS:
        if key in cfg:
            v = cfg[key]
            if not isinstance(v, list) or any(not isinstance(x, str) for x in v):
                raise ConfigError(f"{path}: {key} must be a list of strings")
    return cfg


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"config needs the key {key!r} for this command")
    return cfg[key]


def _scatter_config(cfg: dict, n: int, k: float) -> ScatterConfig:
    return ScatterConfig(
        rho=cfg["rho"],
        k=k,
        n=n,
        p=cfg["p"],
        q=cfg["q"],
        linsolve_tol=cfg["linsolve_tol"],
        linsolve_maxiter=cfg["linsolve_maxiter"],
        rng_seed=cfg["seed"],
        workers=cfg["workers"],
    )


def _alphas(cfg: dict) -> tuple:
    return tuple(cfg["alpha0"] * cfg["alpha_factor"] ** i for i in range(cfg["n_ir"]))


def _all_frequencies(cfg: dict) -> list:
    return list(cfg["frequencies"]) + [cfg["irgnm_frequency"]]


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    delta = cfg["noise_delta"] if args.delta is None else args.delta
    seed = cfg["seed"] if args.seed is None else args.seed
    sim_n = cfg["sim_n"] if args.resolution is None else args.resolution
    truth = read_contrast(args.contrast)
    if sim_n < truth.grid.n or sim_n % truth.grid.n:
        raise ConfigError(
            f"simulation side {sim_n} must be a multiple of the "
            f"contrast side {truth.grid.n}"
        )
    m_sim = upscale(truth, sim_n // truth.grid.n)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    freqs = _all_frequencies(cfg)
    noise_seeds = np.random.default_rng(seed).integers(0, 2**63, size=len(freqs))
    clean = {}
    for j, k in enumerate(freqs):
        if k not in clean:
            sc = _scatter_config(cfg, sim_n, k)
            clean[k] = far_field(m_sim, solve_forward(m_sim, sc), sc)
        ff = add_noise(clean[k], delta, int(noise_seeds[j]))
        path = out_dir / f"ff{j}_k{k:g}.ffd"
        write_far_field(path, ff)
        print(f"wrote {path}")
    return 0


def _reconstruct_output(args, cfg, method):
    freqs = cfg["frequencies"]
    data_paths = _require(cfg, "data")
    if len(data_paths) != len(freqs) + 1:
        raise ConfigError(
            f"data must list {len(freqs) + 1} far-field files "
            f"(one per frequency plus the final one), got {len(data_paths)}"
        )
    data = [read_far_field(p) for p in data_paths]
    base1 = _scatter_config(cfg, cfg["n1"], freqs[0])
    k_next = cfg["irgnm_frequency"]

    if method == "landweber":
        return multi_frequency_landweber(
            freqs, data[:-1], cfg["n_la"], base1, norm_tol=cfg["norm_tol"]
        )
    if method == "irgnm":
        cfg2 = _scatter_config(cfg, cfg["n2"], k_next)
        zero = ContrastGrid(cfg2.grid, np.zeros((cfg2.n, cfg2.n)))
        params = IrgnmParams(
            cfg["n_ir"], _alphas(cfg), zero,
            cg_tol=cfg["cg_tol"], cg_maxiter=cfg["cg_maxiter"],
        )
        return irgnm(params, data[-1], cfg2, stage=f"irgnm_k{k_next:g}")

    params = CombinedParams(
        frequencies=freqs,
        landweber_data=tuple(data[:-1]),
        n_la=cfg["n_la"],
        n1=cfg["n1"],
        k_next=k_next,
        irgnm_data=data[-1],
        n_ir=cfg["n_ir"],
        alphas=_alphas(cfg),
        n2=cfg["n2"],
        cg_tol=cfg["cg_tol"],
        cg_maxiter=cfg["cg_maxiter"],
        norm_tol=cfg["norm_tol"],
    )
    snapshots = cfg.get("snapshots") if args.snapshots is None else args.snapshots
    if snapshots is not None:
        Path(snapshots).mkdir(parents=True, exist_ok=True)
    if method == "combined":
        res = combined(params, base1, snapshot_dir=snapshots)
        return res.m_hat, res.log

    weights_path = cfg.get("weights") if args.weights is None else args.weights
    if weights_path is None:
        raise MissingWeights(f"method {method} needs --weights or a config entry")
    weights = load_weights(weights_path)
    lparams = LearnedParams(params, weights, cfg["n_o"])
    run = learned_combined if method == "learned" else simplified_learned_combined
    res = run(lparams, base1, snapshot_dir=snapshots)
    return res.m_hat, res.log


def cmd_reconstruct(args) -> int:
    cfg = load_config(args.config)
    m, log = _reconstruct_output(args, cfg, args.method)
    out = Path(args.out)
    write_contrast(out, m)
    log_path = Path(str(out) + ".log")
    log_path.write_text(log.to_text())
    print(f"wrote {out}")
    print(f"wrote {log_path}")
    return 0


def cmd_eval(args) -> int:
    truth = read_contrast(args.truth)
    est = read_contrast(args.estimate)
    nt, ne = truth.grid.n, est.grid.n
    if ne > nt and ne % nt == 0:
        est = downscale(est, ne // nt)
    elif nt > ne and nt % ne == 0:
        truth = downscale(truth, nt // ne)
    elif nt != ne:
        raise DimensionMismatch(f"incompatible grid sides {nt} and {ne}")
    r = relative_error(
        truth.with_values(truth.values + 1.0), est.with_values(est.values + 1.0)
    )
    line = f"R_e {r:.12g}\n"
    print(line, end="")
    out = Path(args.out) if args.out else Path(str(args.estimate) + ".re.txt")
    out.write_text(line)
    return 0


def cmd_render(args) -> int:
    from matplotlib import image as mpimage

    if args.vmin is not None and args.vmax is not None and args.vmin >= args.vmax:
        raise ConfigError(f"vmin {args.vmin} must be below vmax {args.vmax}")
    m = read_contrast(args.contrast)
    # grid axis 0 is the x coordinate; transpose so x runs horizontally
    arr = m.values.real.T
    mpimage.imsave(
        args.png,
        arr,
        vmin=args.vmin,
        vmax=args.vmax,
        cmap=args.cmap,
        origin="lower",
        format="png",
    )
    print(f"wrote {args.png}")
    return 0


def cmd_gen_data(args) -> int:
    cfg = load_config(args.config)
    seed = cfg["seed"] if args.seed is None else args.seed
    if args.stage is None:
        src = load_digit_source(_require(cfg, "images"), _require(cfg, "labels"))
        out_dir = _require(cfg, "out_dir")
        sc = _scatter_config(cfg, cfg["sim_n"], cfg["irgnm_frequency"])
        manifest = generate_dataset(
            src,
            _require(cfg, "count"),
            cfg["amplitude_range"],
            cfg["frequencies"],
            cfg["irgnm_frequency"],
            cfg["noise_delta"],
            seed,
            out_dir,
            sc,
            n1=cfg["n1"],
        )
        print(f"wrote {Path(out_dir) / 'manifest.json'} ({manifest['count']} samples)")
        return 0

    manifest_path = Path(_require(cfg, "manifest"))
    pairs_out = cfg.get("pairs_out")
    if pairs_out is None:
        pairs_out = manifest_path.parent / f"pairs_{args.stage}"
    weights = None
    weights_path = cfg.get("weights") if args.weights is None else args.weights
    if weights_path is not None:
        weights = load_weights(weights_path)
    index = emit_training_pairs(
        manifest_path,
        args.stage,
        pairs_out,
        n_la=cfg["n_la"],
        weights=weights,
        n_ir=cfg["n_ir"],
        alphas=_alphas(cfg),
        cg_tol=cfg["cg_tol"],
        cg_maxiter=cfg["cg_maxiter"],
        norm_tol=cfg["norm_tol"],
        cfg=_scatter_config(cfg, cfg["n1"], cfg["irgnm_frequency"]),
    )
    print(f"wrote {Path(pairs_out) / 'pairs.json'} ({index['count']} pairs)")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="invscat",
        description="Far-field simulation and contrast reconstruction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate noisy far-field data files")
    p.add_argument("contrast", help="ground-truth CTR1 file")
    p.add_argument("out_dir", help="directory for the FFD1 files")
    p.add_argument("--config", required=True)
    p.add_argument("--delta", type=float, default=None, help="noise level override")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--resolution", type=int, default=None, help="simulation grid side")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="reconstruct a contrast from data files")
    p.add_argument("--config", required=True)
    p.add_argument(
        "--method",
        required=True,
        choices=["landweber", "irgnm", "combined", "learned", "simplified-learned"],
    )
    p.add_argument("--out", default="reconstruction.ctr")
    p.add_argument("--weights", default=None, help="LPW1 projector weight file")
    p.add_argument("--snapshots", default=None, help="directory for stage snapshots")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("eval", help="relative reconstruction error R_e")
    p.add_argument("truth")
    p.add_argument("estimate")
    p.add_argument("--out", default=None, help="where to write the R_e line")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="render a contrast as a PNG heatmap")
    p.add_argument("contrast")
    p.add_argument("png")
    p.add_argument("--vmin", type=float, default=None)
    p.add_argument("--vmax", type=float, default=None)
    p.add_argument("--cmap", default="viridis")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("gen-data", help="generate a dataset or training pairs")
    p.add_argument("--config", required=True)
    p.add_argument("--stage", choices=["S1", "S2", "S3", "S4"], default=None)
    p.add_argument("--weights", default=None, help="projector weights for S2/S4")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_gen_data)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DimensionMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NoConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (InvscatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
