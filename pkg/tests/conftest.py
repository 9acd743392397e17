"""Shared fixtures: a deterministic hypothesis profile and a digit corpus.

The digit corpus is scikit-learn's bundled 8x8 digit set, bilinearly
upsampled to 28x28 uint8 rasters once per session; tests that need raster
input or IDX files draw from it.
"""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from scipy import ndimage

from invscat import ContrastGrid, DigitSource, Grid, write_idx
from invscat.projector import ProjectorWeights, architecture_manifest

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

FIXTURE_DIR = __file__.rsplit("/", 1)[0] + "/fixtures"


def disk_contrast(grid: Grid, value: complex, radius: float) -> ContrastGrid:
    """Constant contrast on the centered disk of the given radius."""
    v = np.where(grid.inside_mask(radius), value, 0.0)
    return ContrastGrid(grid, v)


def seeded_weights(depth=2, base_channels=4, seed=0, scale=0.05) -> ProjectorWeights:
    """Small deterministic random weights for loop-semantics tests."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in architecture_manifest(depth, base_channels):
        if name.endswith((".gamma", ".var")):
            t = 1.0 + 0.1 * rng.standard_normal(shape)
            t = np.abs(t) + 0.1
        elif name.endswith((".beta", ".mean")):
            t = 0.1 * rng.standard_normal(shape)
        else:
            t = scale * rng.standard_normal(shape)
        tensors[name] = t.astype(np.float32)
    return ProjectorWeights(
        depth=depth,
        base_channels=base_channels,
        leaky_slope=0.01,
        bn_eps=1e-5,
        tensors=tensors,
    )


@pytest.fixture(scope="session")
def digit_rasters():
    # scikit-learn's 8x8 digits restored to 28x28 stroke rasters: each 8x8
    # value is the ink coverage of a 4x4 block of the binary 32x32 scan it
    # was pooled from, so thresholding the bilinear upsample at half peak
    # recovers the stroke geometry, and a 3x3 mean restores antialiased
    # edges.  Keeps the handwriting-like thin features a plain upsample
    # would smear away.
    from sklearn.datasets import load_digits

    digits = load_digits()
    count = 64  # plenty for every test in the suite
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


@pytest.fixture(scope="session")
def digit_source(digit_rasters):
    images, labels = digit_rasters
    return DigitSource(images, labels)


@pytest.fixture(scope="session")
def digit_idx(tmp_path_factory, digit_rasters):
    """(images_path, labels_path) IDX files, images gzip-compressed."""
    images, labels = digit_rasters
    root = tmp_path_factory.mktemp("idx")
    images_path = root / "images.idx.gz"
    labels_path = root / "labels.idx"
    write_idx(images_path, images)
    write_idx(labels_path, labels)
    return images_path, labels_path
