#!/usr/bin/env python3
"""Side-by-side timing of the numba kernels and their numpy fallbacks.

Run:  python bench/bench_kernels.py [--size 480] [--repeats 5]
The same comparison can be forced end-to-end with FUSELABEL_NO_NUMBA=1.
"""
import argparse
import time

import numpy as np

from fuselabel.accel import numpy_kernels as npk

try:
    from fuselabel.accel import numba_kernels as nbk
except ImportError:
    nbk = None


def timeit(fn, args, repeats):
    best = float("inf")
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--size", type=int, default=480, help="raster side length")
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    h = w = args.size
    depth = rng.uniform(0.3, 6.0, (h, w))
    depth[rng.random((h, w)) < 0.05] = 0.0
    rot = np.eye(3)
    trans = np.zeros(3)
    labels = rng.integers(0, 6, (h, w)).astype(np.int64)
    points = rng.uniform(-3, 3, (h * w, 3))
    n_regions, n_classes = 1000, 24
    regions = rng.integers(0, n_regions, h * w)
    classes = rng.integers(0, n_classes, h * w)
    zvox = rng.integers(0, 40, h * w)
    vectors = rng.standard_normal((h * w, 16))

    cases = [
        ("unproject_valid", (depth, 300.0, 300.0, w / 2, h / 2, rot, trans)),
        ("project_and_gate", (points, rot, trans, 300.0, 300.0, w / 2, h / 2,
                              w, h, depth, 0.1)),
        ("label_components_4", (labels,)),
        ("class_counts_by_region", (regions, classes, n_regions, n_classes)),
        ("top_voxel_majority", (regions, zvox, classes, n_regions, n_classes)),
        ("accumulate_vectors", (regions, vectors, n_regions)),
    ]

    if nbk is None:
        print("numba unavailable; timing the numpy path only")
    else:
        print("warming up JIT compilation (not timed)...")
        for name, case_args in cases:
            getattr(nbk, name)(*case_args)

    print(f"\n{'kernel':<26}{'numpy (ms)':>12}{'numba (ms)':>12}{'speedup':>9}")
    print("-" * 59)
    for name, case_args in cases:
        t_np, r_np = timeit(getattr(npk, name), case_args, args.repeats)
        if nbk is None:
            print(f"{name:<26}{1000 * t_np:>12.2f}{'-':>12}{'-':>9}")
            continue
        t_nb, r_nb = timeit(getattr(nbk, name), case_args, args.repeats)
        first_np = r_np[0] if isinstance(r_np, tuple) else r_np
        first_nb = r_nb[0] if isinstance(r_nb, tuple) else r_nb
        agree = np.allclose(np.asarray(first_np, dtype=np.float64),
                            np.asarray(first_nb, dtype=np.float64), atol=1e-9)
        flag = "" if agree else "  MISMATCH"
        print(f"{name:<26}{1000 * t_np:>12.2f}{1000 * t_nb:>12.2f}"
              f"{t_np / t_nb:>8.1f}x{flag}")


if __name__ == "__main__":
    main()
