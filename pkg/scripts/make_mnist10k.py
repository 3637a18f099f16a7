"""Build the bundled 10K-digit MNIST fixture in IDX format.

The npm ``mnist`` package (v1.1.0) ships ~10,000 real MNIST digits as JSON
arrays of ``byte/255`` rounded to three decimals, grouped by class. The
rounding error is < 0.13 grey levels, so ``rint(v * 255)`` restores the
original bytes exactly. Digits are interleaved with a fixed PCG64
permutation so contiguous train/test splits are class-balanced.

Usage::

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python scripts/make_mnist10k.py package/src/digits data/
"""

import argparse
import json
from pathlib import Path

import numpy as np

from cs_mbdct.dataset import ImageSet, save_idx

SEED = 20190416


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("digits_dir", type=Path)
    ap.add_argument("out_dir", type=Path)
    args = ap.parse_args()

    images, labels = [], []
    for digit in range(10):
        raw = np.asarray(json.loads((args.digits_dir / f"{digit}.json").read_text())["data"])
        raw = np.rint(raw * 255.0).astype(np.uint8).reshape(-1, 28, 28)
        images.append(raw)
        labels.append(np.full(len(raw), digit, dtype=np.uint8))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    order = np.random.default_rng(SEED).permutation(len(images))

    args.out_dir.mkdir(parents=True, exist_ok=True)
    iset = ImageSet(images[order].astype(np.float64) / 255.0, labels[order])
    save_idx(
        iset,
        args.out_dir / "mnist10k-images-idx3-ubyte.gz",
        args.out_dir / "mnist10k-labels-idx1-ubyte.gz",
    )
    print(f"wrote {len(iset)} digits to {args.out_dir}")


if __name__ == "__main__":
    main()
