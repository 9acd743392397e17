"""Digit-raster datasets: ground-truth contrasts and simulated far fields.

Ground truths come from 28x28 grayscale rasters (IDX files, the
handwritten-digit container format).  Each raster is resampled to 32x32,
centered on the reconstruction grid so it spans [-rho, rho]^2, masked to
the disk B_rho, and scaled to a drawn sup-norm.  Far-field data is
simulated on a finer grid than reconstruction ever uses and perturbed
with multiplicative noise.

A generated dataset is a directory: one JSON manifest plus per-sample
CTR1 ground truths and FFD1 far fields.  emit_training_pairs derives the
four training-pair sets from such a directory; pairs are CTR1 files and
a JSON index, so training code needs nothing beyond the file formats.
"""

from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .core import ContrastGrid, Grid, ScatterConfig, normalize, upscale
from .errors import (
    BadMagic,
    ConfigError,
    DimensionMismatch,
    MissingWeights,
    TruncatedFile,
)
from .fileio import read_contrast, read_far_field, write_contrast, write_far_field
from .forward import add_noise, far_field, solve_forward
from .invert import IrgnmParams, irgnm, multi_frequency_landweber
from .projector import ProjectorWeights, project_contrast

__all__ = [
    "DigitSource",
    "read_idx",
    "write_idx",
    "load_digit_source",
    "synthesize_contrast",
    "draw_amplitudes",
    "generate_dataset",
    "read_manifest",
    "emit_training_pairs",
]

# Rasters are resampled to this side length before embedding, so the
# digit block spans [-rho, rho]^2 on a grid of side 2 * _DIGIT_SIDE.
_DIGIT_SIDE = 32

_MANIFEST_KEYS = (
    "count",
    "rho",
    "p",
    "q",
    "n1",
    "sim_n",
    "delta",
    "seed",
    "landweber_frequencies",
    "irgnm_frequency",
    "samples",
)

_STAGES = ("S1", "S2", "S3", "S4")


def read_idx(path) -> np.ndarray:
    """Read an IDX array file (gzip-compressed files are transparent).

    Only the unsigned-byte element type is supported, which covers the
    image and label files of the usual digit datasets.
    """
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    if len(raw) < 4:
        raise TruncatedFile(f"{path}: ended while reading magic")
    if raw[0] != 0 or raw[1] != 0:
        raise BadMagic(f"{path}: not an IDX file")
    code, ndim = raw[2], raw[3]
    if code != 0x08:
        raise BadMagic(f"{path}: unsupported IDX element type 0x{code:02x}")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise TruncatedFile(f"{path}: ended while reading dimensions")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    total = int(np.prod(dims, dtype=np.int64))
    if len(raw) < header + total:
        raise TruncatedFile(f"{path}: ended while reading element data")
    return np.frombuffer(raw, np.uint8, count=total, offset=header).reshape(dims)


def write_idx(path, values: np.ndarray) -> None:
    """Write an unsigned-byte IDX file; a .gz suffix enables compression."""
    v = np.ascontiguousarray(values, dtype=np.uint8)
    parts = [bytes([0, 0, 0x08, v.ndim])]
    parts += [struct.pack(">I", d) for d in v.shape]
    parts.append(v.tobytes())
    raw = b"".join(parts)
    path = Path(path)
    if path.suffix == ".gz":
        raw = gzip.compress(raw, mtime=0)
    path.write_bytes(raw)


@dataclass(frozen=True)
class DigitSource:
    """Raster images plus labels; labels are provenance only."""

    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        img = np.asarray(self.images, dtype=np.uint8)
        lbl = np.asarray(self.labels, dtype=np.uint8)
        if img.ndim != 3:
            raise DimensionMismatch(f"images must be (count, h, w), got {img.shape}")
        if lbl.shape != (img.shape[0],):
            raise DimensionMismatch(
                f"{img.shape[0]} images but {lbl.shape} labels"
            )
        img.setflags(write=False)
        lbl.setflags(write=False)
        object.__setattr__(self, "images", img)
        object.__setattr__(self, "labels", lbl)

    def __len__(self) -> int:
        return self.images.shape[0]


def load_digit_source(images_path, labels_path) -> DigitSource:
    return DigitSource(read_idx(images_path), read_idx(labels_path))


def synthesize_contrast(img, amplitude: float, grid: Grid) -> ContrastGrid:
    """Turn one raster into a contrast supported inside B_rho.

    The raster is bilinearly resampled to 32x32, centered on the grid
    (so it occupies [-1, 1]^2 on the 64-grid with rho = 1), masked to
    the disk, and scaled so the sup-norm equals ``amplitude``.  The
    masking happens before the normalization, so the sup-norm is exact
    whenever anything survives the mask; an empty raster gives the zero
    contrast.  Output is real and nonnegative.
    """
    if amplitude <= 0.0:
        raise ConfigError(f"amplitude must be positive, got {amplitude}")
    raster = np.clip(np.asarray(img, dtype=np.float64), 0.0, None)
    if raster.ndim != 2:
        raise DimensionMismatch(f"raster must be 2-d, got shape {raster.shape}")
    if grid.n < _DIGIT_SIDE:
        raise ConfigError(
            f"grid side {grid.n} is smaller than the {_DIGIT_SIDE}-pixel digit block"
        )
    block = ndimage.zoom(
        raster,
        (_DIGIT_SIDE / raster.shape[0], _DIGIT_SIDE / raster.shape[1]),
        order=1,
        grid_mode=True,
        mode="grid-constant",
    )
    full = np.zeros((grid.n, grid.n))
    start = (grid.n - _DIGIT_SIDE) // 2
    full[start : start + _DIGIT_SIDE, start : start + _DIGIT_SIDE] = block
    full[~grid.inside_mask()] = 0.0
    top = full.max()
    if top > 0.0:
        # divide first so the peak is exactly 1.0, hence exactly amplitude
        full = (full / top) * amplitude
    return ContrastGrid(grid, full.astype(np.complex128))


def draw_amplitudes(count: int, lo: float, hi: float, seed) -> np.ndarray:
    """Uniform sup-norm draws on [lo, hi], deterministic given the seed."""
    if not 0.0 < lo <= hi:
        raise ConfigError(f"need 0 < lo <= hi, got [{lo}, {hi}]")
    return np.random.default_rng(seed).uniform(lo, hi, count)


def _sample_id(i: int) -> str:
    return f"s{i:04d}"


def generate_dataset(
    src: DigitSource,
    count: int,
    amplitude_range,
    frequencies,
    k_next: float,
    delta: float,
    seed: int,
    out_dir,
    cfg: ScatterConfig,
    n1: int = 64,
) -> dict:
    """Simulate a far-field dataset for ``count`` randomly chosen digits.

    cfg carries the simulation resolution (cfg.n) and the direction
    counts; its wavenumber is replaced per frequency.  Ground truths are
    written at resolution n1 and upscaled to cfg.n for the solves, so
    reconstruction never runs on the grid that produced the data.
    Returns the manifest, which is also written as JSON into out_dir.
    """
    if count < 1 or count > len(src):
        raise ConfigError(f"count must be in 1..{len(src)}, got {count}")
    if cfg.n % n1 or cfg.n < n1:
        raise ConfigError(f"simulation side {cfg.n} must be a multiple of n1 = {n1}")
    lo, hi = float(amplitude_range[0]), float(amplitude_range[1])
    if not 0.0 < lo <= hi:
        raise ConfigError(f"need 0 < lo <= hi, got [{lo}, {hi}]")
    freqs = tuple(float(k) for k in frequencies)
    if any(freqs[i + 1] <= freqs[i] for i in range(len(freqs) - 1)):
        raise ConfigError(f"frequencies must be strictly increasing: {freqs}")
    if delta < 0.0:
        raise ConfigError(f"noise level must be nonnegative, got {delta}")

    all_freqs = freqs + (float(k_next),)
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(src), size=count, replace=False)
    amps = rng.uniform(lo, hi, count)
    noise_seeds = rng.integers(0, 2**63, size=(count, len(all_freqs)))

    out_dir = Path(out_dir)
    grid1 = Grid(cfg.rho, n1)
    d = cfg.n // n1
    samples = []
    for i in range(count):
        sid = _sample_id(i)
        sample_dir = out_dir / "samples" / sid
        sample_dir.mkdir(parents=True, exist_ok=True)
        m1 = synthesize_contrast(src.images[picks[i]], amps[i], grid1)
        truth_rel = f"samples/{sid}/truth.ctr"
        write_contrast(out_dir / truth_rel, m1)
        m_sim = upscale(m1, d)
        fields = []
        clean = {}
        for j, k in enumerate(all_freqs):
            if k not in clean:
                cfg_k = cfg.replace(k=k)
                clean[k] = far_field(m_sim, solve_forward(m_sim, cfg_k), cfg_k)
            ff = add_noise(clean[k], delta, int(noise_seeds[i, j]))
            ff_rel = f"samples/{sid}/ff{j}_k{k:g}.ffd"
            write_far_field(out_dir / ff_rel, ff)
            fields.append({"k": k, "path": ff_rel, "noise_seed": int(noise_seeds[i, j])})
        samples.append(
            {
                "id": sid,
                "digit_index": int(picks[i]),
                "label": int(src.labels[picks[i]]),
                "amplitude": float(amps[i]),
                "truth": truth_rel,
                "far_fields": fields,
            }
        )
    manifest = {
        "count": count,
        "rho": cfg.rho,
        "p": cfg.p,
        "q": cfg.q,
        "n1": n1,
        "sim_n": cfg.n,
        "delta": delta,
        "seed": seed,
        "landweber_frequencies": list(freqs),
        "irgnm_frequency": float(k_next),
        "samples": samples,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def read_manifest(path) -> dict:
    try:
        manifest = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    missing = [k for k in _MANIFEST_KEYS if k not in manifest]
    if missing:
        raise ConfigError(f"{path}: manifest missing keys {missing}")
    return manifest


def _recon_config(manifest: dict, cfg: ScatterConfig | None) -> ScatterConfig:
    # Reconstruction-side config at the n1 grid; solver knobs may come
    # from the caller but the geometry always comes from the manifest.
    base = cfg if cfg is not None else ScatterConfig(
        rho=manifest["rho"], k=manifest["irgnm_frequency"], n=manifest["n1"],
        p=manifest["p"], q=manifest["q"],
    )
    return base.replace(
        rho=manifest["rho"],
        n=manifest["n1"],
        p=manifest["p"],
        q=manifest["q"],
        k=manifest["irgnm_frequency"],
    )


def _mapping_l(sample: dict, root: Path, manifest: dict, cfg1: ScatterConfig,
               n_la: int, norm_tol: float) -> ContrastGrid:
    freqs = manifest["landweber_frequencies"]
    data = [read_far_field(root / sample["far_fields"][j]["path"])
            for j in range(len(freqs))]
    m, _ = multi_frequency_landweber(freqs, data, n_la, cfg1, norm_tol=norm_tol)
    return m


def emit_training_pairs(
    manifest_path,
    stage: str,
    out_dir,
    n_la: int = 100,
    weights: ProjectorWeights | None = None,
    n_ir: int = 5,
    alphas=None,
    cg_tol: float = 1e-4,
    cg_maxiter: int = 50,
    norm_tol: float = 1e-3,
    cfg: ScatterConfig | None = None,
) -> dict:
    """Write (input, label) CTR1 pairs for one training-set stage.

    The label is always the normalized ground truth.  Inputs per stage:

      S1  normalized output of the multi-frequency Landweber mapping
      S2  the projector (weights required) applied to the S1 input
      S3  the label itself
      S4  normalized output of IRGNM run at the n1 grid and the final
          frequency, started from the scaled projector output (weights
          required); alphas defaults to 10 * 0.2^i

    Landweber outputs are cached next to each sample (keyed by n_la), so
    later stages do not repeat the sweeps.  Returns the pair index,
    which is also written as pairs.json into out_dir.
    """
    if stage not in _STAGES:
        raise ConfigError(f"stage must be one of {_STAGES}, got {stage!r}")
    if stage in ("S2", "S4") and weights is None:
        raise MissingWeights(f"stage {stage} needs projector weights")
    manifest_path = Path(manifest_path)
    manifest = read_manifest(manifest_path)
    root = manifest_path.parent
    cfg1 = _recon_config(manifest, cfg)
    if alphas is None:
        alphas = tuple(10.0 * 0.2**i for i in range(n_ir))

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs = []
    for sample in manifest["samples"]:
        sid = sample["id"]
        truth = read_contrast(root / sample["truth"])
        label = normalize(truth)

        if stage == "S3":
            inp = label
        else:
            cache = root / "samples" / sid / f"mtilde_la{n_la}.ctr"
            if cache.exists():
                m_tilde = read_contrast(cache)
            else:
                m_tilde = _mapping_l(sample, root, manifest, cfg1, n_la, norm_tol)
                write_contrast(cache, m_tilde)
            if stage == "S1":
                inp = normalize(m_tilde)
            elif stage == "S2":
                inp = project_contrast(weights, normalize(m_tilde))
            else:  # S4
                start = project_contrast(weights, normalize(m_tilde))
                start = start.with_values(m_tilde.norm_inf * start.values)
                ff = read_far_field(root / sample["far_fields"][-1]["path"])
                ir = IrgnmParams(n_ir, alphas, start, cg_tol=cg_tol, cg_maxiter=cg_maxiter)
                refined, _ = irgnm(ir, ff, cfg1)
                inp = normalize(refined)

        input_rel = f"input_{sid}.ctr"
        label_rel = f"label_{sid}.ctr"
        write_contrast(out_dir / input_rel, inp)
        write_contrast(out_dir / label_rel, label)
        pairs.append({"id": sid, "input": input_rel, "label": label_rel})
    index = {"stage": stage, "n1": manifest["n1"], "count": len(pairs), "pairs": pairs}
    (out_dir / "pairs.json").write_text(json.dumps(index, indent=2) + "\n")
    return index
