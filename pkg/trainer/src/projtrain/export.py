"""Weight export and the cross-package parity fixtures.

export_weights writes a checkpoint as an LPW1 file and, when asked,
K = 5 fixture pairs: CTR1 inputs plus the trainer's own evaluation of
the network on them.  The solver package keeps a copy of these files
and asserts that its numpy inference reproduces the recorded outputs,
which pins the two implementations of the network to each other.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .formats import write_contrast, write_weights
from .network import Unet, evaluate, to_weights

__all__ = ["FIXTURE_COUNT", "export_weights"]

FIXTURE_COUNT = 5


def export_weights(
    model: Unet,
    path,
    fixture_dir=None,
    fixture_inputs: np.ndarray | None = None,
    rho: float = 1.0,
) -> Path:
    """Write the model as LPW1; optionally also write parity fixtures.

    ``fixture_inputs`` must hold at least FIXTURE_COUNT complex (n, n)
    planes; the first FIXTURE_COUNT become parity_input_<i>.ctr with the
    evaluated outputs as parity_output_<i>.ctr next to weights.lpw in
    ``fixture_dir``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_weights(path, to_weights(model))
    if fixture_dir is None:
        return path
    if fixture_inputs is None or len(fixture_inputs) < FIXTURE_COUNT:
        raise ValueError(f"parity fixtures need {FIXTURE_COUNT} inputs")
    fixture_dir = Path(fixture_dir)
    fixture_dir.mkdir(parents=True, exist_ok=True)
    write_weights(fixture_dir / "weights.lpw", to_weights(model))
    inputs = np.asarray(fixture_inputs)[:FIXTURE_COUNT]
    outputs = evaluate(model, inputs)
    for i in range(FIXTURE_COUNT):
        write_contrast(fixture_dir / f"parity_input_{i}.ctr", rho, inputs[i])
        write_contrast(
            fixture_dir / f"parity_output_{i}.ctr",
            rho,
            outputs[i].astype(np.complex128),
        )
    return path
