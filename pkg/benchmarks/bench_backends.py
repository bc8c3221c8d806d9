#!/usr/bin/env python3
"""Time the numba kernels against their pure-numpy twins.

Run: python benchmarks/bench_backends.py
The active backend for library calls follows DISTREL_NUMBA; this script
always times both implementations directly.
"""

import time

import numpy as np

from distrel import _kernels


def best_of(fn, reps=7):
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1e3


def main():
    print(f"numba available: {_kernels.HAS_NUMBA}; active backend: {_kernels.backend()}")
    if _kernels.HAS_NUMBA:
        _kernels.warmup()
    rng = np.random.default_rng(0)
    rows = []

    for n, m in [(100, 2048), (600, 2048), (600, 600)]:
        x = rng.random((n, 6))
        z = rng.random((m, 6))
        ls = rng.random(6) * 0.3 + 0.1
        case = f"rbf_cross {n}x{m}"
        np_ms = best_of(lambda: _kernels.rbf_cross_numpy(x, z, ls, 1.0))
        nb_ms = (
            best_of(lambda: _kernels.rbf_cross_numba(x, z, ls, 1.0))
            if _kernels.HAS_NUMBA
            else float("nan")
        )
        rows.append((case, np_ms, nb_ms))

    for n, m in [(500, 500), (4096, 1200)]:
        a = rng.random((n, 6))
        b = rng.random((m, 6))
        case = f"pairwise_sq_dists {n}x{m}"
        np_ms = best_of(lambda: _kernels.pairwise_sq_dists_numpy(a, b))
        nb_ms = (
            best_of(lambda: _kernels.pairwise_sq_dists_numba(a, b))
            if _kernels.HAS_NUMBA
            else float("nan")
        )
        rows.append((case, np_ms, nb_ms))

    for size in (16, 128):
        img = rng.random((size, size, 3))
        args = (0.93, 0.12, 1.1, -0.12, 0.93, 0.8, 0.0)
        case = f"affine_bilinear_warp {size}x{size}x3"
        np_ms = best_of(lambda: _kernels.affine_bilinear_warp_numpy(img, *args))
        nb_ms = (
            best_of(lambda: _kernels.affine_bilinear_warp_numba(img, *args))
            if _kernels.HAS_NUMBA
            else float("nan")
        )
        rows.append((case, np_ms, nb_ms))

    n_streaks = 60
    base = rng.random((128, 128, 3))
    xs = rng.uniform(0, 128, n_streaks)
    ys = rng.uniform(0, 128, n_streaks)
    lengths = rng.uniform(8, 12, n_streaks)
    angles = rng.uniform(70, 80, n_streaks)
    case = f"render_streaks 128x128x3 ({n_streaks} streaks)"
    np_ms = best_of(
        lambda: _kernels.render_streaks_numpy(base.copy(), xs, ys, lengths, angles, 0.85, 0.6)
    )
    nb_ms = (
        best_of(
            lambda: _kernels.render_streaks_numba(base.copy(), xs, ys, lengths, angles, 0.85, 0.6)
        )
        if _kernels.HAS_NUMBA
        else float("nan")
    )
    rows.append((case, np_ms, nb_ms))

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'numpy ms':>9}  {'numba ms':>9}  {'speedup':>7}")
    for case, np_ms, nb_ms in rows:
        speed = np_ms / nb_ms if nb_ms == nb_ms and nb_ms > 0 else float("nan")
        print(f"{case:<{width}}  {np_ms:>9.3f}  {nb_ms:>9.3f}  {speed:>6.1f}x")


if __name__ == "__main__":
    main()
