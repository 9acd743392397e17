"""Training materials, produced by driving the invscat command line.

The solver package owns all of the physics: datasets of simulated far
fields come from its gen-data command, Landweber estimates and the
stage-S1/S4 training pairs from gen-data --stage, and reconstruction
baselines from its reconstruct and eval commands.  This module wraps
those invocations, plus the IDX digit corpus they consume and the CTR1
pair files they emit.

Stages S2 and S3 need no solver runs: S3 uses the labels as inputs, and
S2 inputs are computed in-process by running the current network over
the S1 inputs (see train.py).
"""

from __future__ import annotations

import json
import struct
import subprocess
from pathlib import Path

import numpy as np

from .formats import read_contrast

__all__ = [
    "OrchestrationError",
    "run_cli",
    "write_config",
    "write_idx_corpus",
    "generate_dataset",
    "emit_stage",
    "load_pairs",
    "reconstruct",
    "relative_error",
]


class OrchestrationError(RuntimeError):
    """An invscat invocation failed; carries the command and its stderr."""


def run_cli(cli, args, cwd=None) -> str:
    """Run one invscat command, returning stdout; non-zero exit raises."""
    cmd = list(cli) + [str(a) for a in args]
    proc = subprocess.run(cmd, capture_output=True, text=True, cwd=cwd)
    if proc.returncode != 0:
        raise OrchestrationError(
            f"{' '.join(cmd)} exited {proc.returncode}:\n{proc.stderr.strip()}"
        )
    return proc.stdout


def write_config(path, **entries) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(entries, indent=2) + "\n")
    return path


def _raster_corpus(count: int):
    # scikit-learn's 8x8 digits, restored to 28x28 stroke rasters.  Each
    # 8x8 value is the ink coverage of a 4x4 block of the binary 32x32
    # scan it was pooled from, so thresholding the bilinear upsample at
    # half peak recovers the stroke geometry (a plain upsample leaves a
    # fat gray smear with none of the thin features of handwriting); a
    # 3x3 mean then restores scanner-style antialiased edges.  Imported
    # lazily so the solver-facing modules do not depend on sklearn.
    from scipy import ndimage
    from sklearn.datasets import load_digits

    digits = load_digits()
    if count > len(digits.images):
        raise ValueError(f"corpus has {len(digits.images)} digits, asked for {count}")
    out = np.empty((count, 28, 28), dtype=np.uint8)
    for i in range(count):
        up = ndimage.zoom(
            digits.images[i] / 16.0,
            28.0 / 8.0,
            order=1,
            grid_mode=True,
            mode="grid-constant",
        )
        strokes = ndimage.uniform_filter((up >= 0.5 * up.max()).astype(np.float64), 3)
        out[i] = np.clip(np.round(strokes * 255.0), 0.0, 255.0).astype(np.uint8)
    return out, digits.target[:count].astype(np.uint8)


def _write_idx(path, arr: np.ndarray) -> None:
    header = bytes([0, 0, 0x08, arr.ndim]) + b"".join(
        struct.pack(">I", d) for d in arr.shape
    )
    Path(path).write_bytes(header + arr.astype(np.uint8).tobytes())


def write_idx_corpus(out_dir, count: int, offset: int = 0) -> tuple[Path, Path]:
    """Write IDX image/label files holding ``count`` digit rasters.

    ``offset`` skips that many rasters first, so disjoint corpora (for
    example training versus held-out evaluation digits) come from
    non-overlapping slices of the underlying digit set.
    """
    images, labels = _raster_corpus(offset + count)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    images_path = out_dir / "images.idx"
    labels_path = out_dir / "labels.idx"
    _write_idx(images_path, images[offset:])
    _write_idx(labels_path, labels[offset:])
    return images_path, labels_path


def generate_dataset(cli, config_path) -> Path:
    """gen-data over a prepared config; returns the manifest path."""
    cfg = json.loads(Path(config_path).read_text())
    run_cli(cli, ["gen-data", "--config", config_path])
    return Path(cfg["out_dir"]) / "manifest.json"


def emit_stage(cli, config_path, stage: str, weights=None) -> Path:
    """gen-data --stage over a prepared config; returns the pairs directory."""
    args = ["gen-data", "--config", config_path, "--stage", stage]
    if weights is not None:
        args += ["--weights", weights]
    run_cli(cli, args)
    cfg = json.loads(Path(config_path).read_text())
    return Path(cfg["pairs_out"])


def load_pairs(pairs_dir) -> tuple[list, np.ndarray, np.ndarray]:
    """Read a pairs.json index into (ids, inputs, labels) arrays.

    Inputs are complex (N, n, n); labels are real float32 (N, n, n).
    """
    pairs_dir = Path(pairs_dir)
    index = json.loads((pairs_dir / "pairs.json").read_text())
    ids, inputs, labels = [], [], []
    for pair in index["pairs"]:
        ids.append(pair["id"])
        _, x = read_contrast(pairs_dir / pair["input"])
        _, y = read_contrast(pairs_dir / pair["label"])
        if np.any(y.imag != 0.0):
            raise OrchestrationError(f"label {pair['label']} is not real-valued")
        inputs.append(x)
        labels.append(y.real.astype(np.float32))
    return ids, np.stack(inputs), np.stack(labels)


def reconstruct(cli, config_path, method: str, out, weights=None) -> Path:
    args = ["reconstruct", "--config", config_path, "--method", method, "--out", out]
    if weights is not None:
        args += ["--weights", weights]
    run_cli(cli, args)
    return Path(out)


def relative_error(cli, truth, estimate) -> float:
    """The solver's R_e metric between two CTR1 files."""
    stdout = run_cli(cli, ["eval", truth, estimate])
    for line in stdout.splitlines():
        if line.startswith("R_e "):
            return float(line.split()[1])
    raise OrchestrationError(f"eval printed no R_e line:\n{stdout}")
