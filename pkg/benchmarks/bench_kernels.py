"""Time every kernel under both backends on pipeline-sized inputs.

    python benchmarks/bench_kernels.py [--scale 0.2]

``--scale`` shrinks the problem sizes for a quick look.
"""

import argparse
import time

import numpy as np

from cs_mbdct import kernels
from cs_mbdct.bits import pack_bits
from cs_mbdct.descriptor import KeypointGrid, ScaleConfig, describe_batch


def timed(fn, repeat=3):
    fn()  # warm-up (JIT compile)
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--scale", type=float, default=1.0)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    s = args.scale

    n_desc = int(20000 * s)
    words = pack_bits(rng.integers(0, 2, (n_desc, 1036)))
    cents = words[:512]
    labels = rng.integers(0, 512, n_desc)
    hist_q = rng.random((int(500 * s), 512))
    hist_t = rng.random((int(2000 * s), 512))
    hist_q[hist_q < 0.8] = 0
    hist_t[hist_t < 0.8] = 0

    cases = {
        f"hamming_assign {n_desc}x512x1036b": lambda b: kernels.hamming_assign(words, cents, backend=b),
        f"majority_counts {n_desc}x1036b": lambda b: kernels.majority_counts(words, labels, 512, 1036, backend=b),
        f"chi2_matrix {len(hist_q)}x{len(hist_t)}x512": lambda b: kernels.chi2_matrix(hist_q, hist_t, backend=b),
    }
    print(f"{'kernel':<40} {'numba s':>10} {'numpy s':>10} {'speedup':>8}")
    for name, fn in cases.items():
        t_nb = timed(lambda: fn("numba"))
        t_np = timed(lambda: fn("numpy"), repeat=1)
        print(f"{name:<40} {t_nb:>10.4f} {t_np:>10.4f} {t_np / t_nb:>7.1f}x")

    imgs = rng.standard_normal((int(200 * s) or 1, 28, 28))
    grid = KeypointGrid.regular(28, 28, 2)
    t = timed(lambda: describe_batch(imgs, grid, ScaleConfig()), repeat=1)
    print(f"{'describe_batch (BLAS, shared)':<40} {t:>10.4f} {'':>10} {len(imgs) / t:>6.0f} img/s")


if __name__ == "__main__":
    main()
