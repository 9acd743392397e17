"""U-Net projector inference on a Landweber reconstruction.

Loads LPW1 weights (the committed parity fixture by default, or a path
given on the command line), runs a coarse Landweber reconstruction of a
digit contrast, and applies the projector to the normalized iterate.
With all-zero weights the network collapses to LeakyReLU of its first
input channel, which is also shown as the no-training baseline.
"""

import sys
from pathlib import Path

import numpy as np
from scipy import ndimage
from sklearn.datasets import load_digits

from invscat import (
    Grid,
    ScatterConfig,
    add_noise,
    far_field,
    load_weights,
    multi_frequency_landweber,
    normalize,
    project_contrast,
    solve_forward,
    synthesize_contrast,
    upscale,
    zero_weights,
)

DEFAULT_WEIGHTS = Path(__file__).parent.parent / "tests" / "fixtures" / "golden" / "weights.lpw"


def main():
    if len(sys.argv) > 1:
        weights = load_weights(sys.argv[1])
        source = sys.argv[1]
    elif DEFAULT_WEIGHTS.is_file():
        weights = load_weights(DEFAULT_WEIGHTS)
        source = str(DEFAULT_WEIGHTS)
    else:
        weights = zero_weights(depth=4, base_channels=32)
        source = "zero weights (untrained baseline)"
    print(f"weights: {source}")
    print(f"architecture: depth {weights.depth}, base channels {weights.base_channels}")

    img = load_digits().images[7] / 16.0
    up = ndimage.zoom(img, 28.0 / 8.0, order=1, grid_mode=True, mode="grid-constant")
    # half-peak threshold restores the stroke geometry, 3x3 mean the edges
    strokes = ndimage.uniform_filter((up >= 0.5 * up.max()).astype(float), 3)
    raster = np.clip(np.round(strokes * 255.0), 0.0, 255.0).astype(np.uint8)
    truth = synthesize_contrast(raster, 2.0, Grid(1.0, 64))

    frequencies = (3.0, 5.0)
    data = []
    rng = np.random.default_rng(1)
    for k in frequencies:
        cfg = ScatterConfig(rho=1.0, k=k, n=256, p=32, q=16)
        m_sim = upscale(truth, 4)
        clean = far_field(m_sim, solve_forward(m_sim, cfg), cfg)
        data.append(add_noise(clean, 0.05, int(rng.integers(2**63))))
    base1 = ScatterConfig(rho=1.0, k=frequencies[0], n=64, p=32, q=16)
    m_tilde, _ = multi_frequency_landweber(frequencies, data, 50, base1)
    print(f"Landweber iterate sup-norm: {m_tilde.norm_inf:.3f} "
          f"(truth {truth.norm_inf:.3f})")

    projected = project_contrast(weights, normalize(m_tilde))
    err_before = np.linalg.norm(normalize(m_tilde).values - normalize(truth).values)
    err_after = np.linalg.norm(projected.values - normalize(truth).values)
    print(f"distance to normalized truth: {err_before:.3f} before projection, "
          f"{err_after:.3f} after")


if __name__ == "__main__":
    main()
