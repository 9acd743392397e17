"""Shared fixtures: a miniature solver-generated dataset and helpers.

The session-scoped ``tiny_materials`` fixture drives the solver CLI once
to produce a ten-sample dataset at reduced size (32x32 reconstruction
grid, one Landweber frequency, eight Landweber steps) so the training
tests exercise the real orchestration path without the full-scale cost.
"""

from __future__ import annotations

import shutil
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from projtrain import TrainConfig, generate_dataset, write_config, write_idx_corpus

CLI = ("invscat",)

TINY = dict(
    count=10,
    sim_n=64,
    n1=32,
    p=8,
    q=8,
    frequencies=[2.0],
    irgnm_frequency=3.0,
    noise_delta=0.05,
    amplitude_range=[1.0, 5.0],
    seed=5,
)


@pytest.fixture(scope="session")
def tiny_materials(tmp_path_factory):
    base = tmp_path_factory.mktemp("materials")
    images, labels = write_idx_corpus(base / "corpus", 12)
    config = write_config(
        base / "gen.json",
        images=str(images),
        labels=str(labels),
        out_dir=str(base / "data"),
        **TINY,
    )
    manifest = generate_dataset(CLI, config)
    return SimpleNamespace(base=base, manifest=manifest)


def make_config(manifest: Path, workdir: Path, **overrides) -> TrainConfig:
    """A TrainConfig sized for the tiny dataset: t = 8, smoke epochs."""
    settings = dict(
        manifest=manifest,
        workdir=workdir,
        t=8,
        epochs=(2, 1, 1, 1),
        batch_size=2,
        validation=2,
        depth=2,
        base_channels=4,
        n_la=8,
        n_ir=2,
        seed=0,
        cli=CLI,
    )
    settings.update(overrides)
    return TrainConfig(**settings)


@pytest.fixture(scope="session")
def part1_run(tiny_materials, tmp_path_factory):
    """One completed part-1 run on the tiny dataset, shared read-only."""
    from projtrain import train_part1

    workdir = tmp_path_factory.mktemp("part1")
    cfg = make_config(tiny_materials.manifest, workdir)
    result = train_part1(cfg)
    return SimpleNamespace(cfg=cfg, result=result)


def copy_stage_cache(src_workdir: Path, dst_workdir: Path, stages=("S1",)) -> None:
    """Reuse already-emitted pairs directories in a fresh workdir."""
    dst_workdir.mkdir(parents=True, exist_ok=True)
    for stage in stages:
        src = Path(src_workdir) / f"pairs_{stage}"
        dst = Path(dst_workdir) / f"pairs_{stage}"
        if src.is_dir() and not dst.exists():
            shutil.copytree(src, dst)


def blob_pairs(count: int, n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Synthetic smooth nonnegative fields with sup norm one.

    Returns (inputs, labels) where the inputs are the labels cast to
    complex, mimicking the label-as-input dataset S3.
    """
    rng = np.random.default_rng(seed)
    xs = np.linspace(-1.0, 1.0, n)
    xx, yy = np.meshgrid(xs, xs, indexing="ij")
    fields = np.empty((count, n, n))
    for i in range(count):
        field = np.zeros((n, n))
        for _ in range(3):
            cx, cy = rng.uniform(-0.6, 0.6, size=2)
            width = rng.uniform(0.15, 0.45)
            field += rng.uniform(0.3, 1.0) * np.exp(
                -((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * width**2)
            )
        fields[i] = field / field.max()
    labels = fields.astype(np.float32)
    return labels.astype(np.complex128), labels
