"""Dataset synthesis: digits to contrasts to far-field files to pairs.

Materializes a small digit source as IDX files, simulates a far-field
dataset from it, and emits the S1 (Landweber output vs normalized truth)
and S3 (identity) training-pair stages.  Everything lands in a scratch
directory next to this script; rerunning reproduces identical bytes.
"""

import json
from pathlib import Path

import numpy as np
from scipy import ndimage
from sklearn.datasets import load_digits

from invscat import (
    ScatterConfig,
    emit_training_pairs,
    generate_dataset,
    load_digit_source,
    read_contrast,
    write_idx,
)


def main():
    root = Path(__file__).parent / "dataset_demo"
    root.mkdir(exist_ok=True)

    digits = load_digits()
    images = np.empty((16, 28, 28), dtype=np.uint8)
    for i in range(16):
        up = ndimage.zoom(digits.images[i] / 16.0, 28.0 / 8.0, order=1,
                          grid_mode=True, mode="grid-constant")
        # threshold at half peak to restore the stroke geometry the 8x8
        # ink-coverage values were pooled from, then soften the edges
        strokes = ndimage.uniform_filter((up >= 0.5 * up.max()).astype(float), 3)
        images[i] = np.clip(np.round(strokes * 255.0), 0.0, 255.0)
    write_idx(root / "images.idx.gz", images)
    write_idx(root / "labels.idx", digits.target[:16].astype(np.uint8))
    src = load_digit_source(root / "images.idx.gz", root / "labels.idx")
    print(f"digit source: {len(src)} rasters")

    cfg = ScatterConfig(rho=1.0, k=3.0, n=128, p=16, q=16)
    manifest = generate_dataset(
        src,
        count=4,
        amplitude_range=(1.0, 3.0),
        frequencies=(3.0, 5.0),
        k_next=6.0,
        delta=0.05,
        seed=11,
        out_dir=root / "ds",
        cfg=cfg,
        n1=64,
    )
    print(f"dataset: {manifest['count']} samples, sim n = {manifest['sim_n']}, "
          f"truths at n1 = {manifest['n1']}")
    for s in manifest["samples"]:
        print(f"  {s['id']}: digit {s['label']}, amplitude {s['amplitude']:.3f}, "
              f"{len(s['far_fields'])} far-field files")

    for stage in ("S3", "S1"):
        index = emit_training_pairs(
            root / "ds" / "manifest.json", stage, root / f"pairs_{stage}", n_la=20
        )
        first = index["pairs"][0]
        inp = read_contrast(root / f"pairs_{stage}" / first["input"])
        print(f"{stage}: {index['count']} pairs, first input sup-norm "
              f"{inp.norm_inf:.3f} on the {inp.grid.n}-grid")

    print(json.dumps(list(manifest.keys())))


if __name__ == "__main__":
    main()
