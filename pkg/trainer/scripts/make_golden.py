"""Regenerate the solver package's cross-inference parity fixtures.

Trains a small projector for a few epochs on a miniature solver-generated
dataset, then writes weights.lpw plus five input/output parity pairs into
the solver's tests/fixtures/golden directory.  Everything is seeded, so
reruns reproduce the fixtures byte for byte.

Usage: python scripts/make_golden.py [fixture_dir]
"""

from __future__ import annotations

import sys
import tempfile
from pathlib import Path

from projtrain import (
    TrainConfig,
    export_weights,
    generate_dataset,
    load_pairs,
    train_part1,
    write_config,
    write_idx_corpus,
)

FIXTURE_DIR = Path(__file__).resolve().parents[2] / "tests" / "fixtures" / "golden"


def main() -> int:
    fixture_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else FIXTURE_DIR
    with tempfile.TemporaryDirectory(prefix="golden_") as tmp:
        base = Path(tmp)
        images, labels = write_idx_corpus(base / "corpus", 12)
        config = write_config(
            base / "gen.json",
            images=str(images),
            labels=str(labels),
            out_dir=str(base / "data"),
            count=10,
            sim_n=64,
            n1=32,
            p=8,
            q=8,
            frequencies=[2.0],
            irgnm_frequency=3.0,
            noise_delta=0.05,
            amplitude_range=[1.0, 5.0],
            seed=11,
        )
        manifest = generate_dataset(("invscat",), config)
        cfg = TrainConfig(
            manifest=manifest,
            workdir=base / "work",
            t=8,
            epochs=(4, 2, 2, 1),
            batch_size=2,
            validation=2,
            depth=3,
            base_channels=8,
            n_la=8,
            n_ir=2,
            seed=7,
        )
        result = train_part1(cfg)
        _, inputs, _ = load_pairs(cfg.workdir / "pairs_S1")
        export_weights(
            result.model,
            base / "theta.lpw",
            fixture_dir=fixture_dir,
            fixture_inputs=inputs[:5],
        )
    print(f"wrote {fixture_dir}/weights.lpw and parity pairs")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
