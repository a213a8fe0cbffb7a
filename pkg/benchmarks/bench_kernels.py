#!/usr/bin/env python3
"""Benchmark the hot kernels: numba JIT backend vs the pure-numpy fallback.

Runs each kernel on a realistic workload (near-2K depth maps and images,
multi-million-point fusion), verifies the two backends agree bit for bit,
and prints a timing table. Sizes shrink with --quick for smoke runs.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from lumifuse._kernels import load_impl
from lumifuse.camera import quat_to_rotmat
from lumifuse.quality import gaussian_window


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def workloads(quick: bool):
    rng = np.random.default_rng(0)
    h, w = (270, 480) if quick else (1080, 1920)
    n_points = 500_000 if quick else 5_000_000
    n_cells = 20_000 if quick else 200_000

    depth = (rng.random((h, w)) * 5).astype(np.float32)
    depth[rng.random((h, w)) < 0.3] = 0.0
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    rot = quat_to_rotmat(q)
    t = rng.standard_normal(3)

    idx = rng.integers(0, n_cells, size=n_points)
    vals = rng.random((n_points, 3))

    img = rng.random((h, w))
    win = gaussian_window()

    def backproject(impl):
        return impl["backproject_points"](depth, 2, 1000.0, 1000.0, w / 2, h / 2, rot, t)

    def scatter(impl):
        out = np.zeros((n_cells, 3))
        impl["scatter_add_3"](out, idx, vals)
        return out

    def conv(impl):
        return impl["conv_valid_v"](impl["conv_valid_h"](img, win), win)

    return [
        (f"backproject {w}x{h} stride 2", backproject),
        (f"scatter_add {n_points:,} pts -> {n_cells:,} cells", scatter),
        (f"ssim blur {w}x{h} (11-tap separable)", conv),
    ]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3, help="timing repeats (best-of)")
    parser.add_argument("--quick", action="store_true", help="smaller workloads")
    args = parser.parse_args()

    numpy_impl = load_impl("numpy")
    numba_impl = load_impl("numba")

    print(f"{'kernel':45s} {'numpy':>10s} {'numba':>10s} {'speedup':>8s}")
    for name, fn in workloads(args.quick):
        ref = fn(numpy_impl)
        got = fn(numba_impl)  # first call also JIT-compiles
        ref_t = ref if isinstance(ref, tuple) else (ref,)
        got_t = got if isinstance(got, tuple) else (got,)
        for a, b in zip(ref_t, got_t):
            if not np.array_equal(a, b):
                raise SystemExit(f"{name}: backends disagree")

        t_np = best_of(lambda: fn(numpy_impl), args.repeats)
        t_nb = best_of(lambda: fn(numba_impl), args.repeats)
        print(f"{name:45s} {t_np * 1e3:9.2f}ms {t_nb * 1e3:9.2f}ms {t_np / t_nb:7.2f}x")


if __name__ == "__main__":
    main()
