"""Time the numba and numpy kernel paths against each other.

Run from the repository root:

    python3 benchmarks/bench_kernels.py --points 3000 --segments 2000

The numba path must be enabled (do not set NEUROQC_NO_NUMBA) for the
comparison to include both implementations; results are checked for
agreement before timing.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from neuroqc import _kernels


def _time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_nearest(impls, n_src: int, n_tgt: int, repeat: int) -> dict[str, float]:
    rng = np.random.default_rng(0)
    src = rng.uniform(0, 500, (n_src, 3))
    tgt = rng.uniform(0, 500, (n_tgt, 3))
    ids = rng.permutation(n_tgt).astype(np.int64) + 1
    results = {}
    times = {}
    for name, fns in impls.items():
        out_id = np.empty(n_src, dtype=np.int64)
        out_d2 = np.empty(n_src, dtype=np.float64)
        fn = fns["brute_nearest"]
        fn(src, tgt, ids, out_id, out_d2)  # warm-up / JIT compile
        times[name] = _time(lambda: fn(src, tgt, ids, out_id, out_d2), repeat)
        results[name] = (out_id.copy(), out_d2.copy())
    _check_agreement(results)
    return times

def bench_paint(impls, n_seg: int, grid_side: int, repeat: int) -> dict[str, float]:
    rng = np.random.default_rng(1)
    a = rng.integers(0, grid_side, (n_seg, 3))
    b = np.clip(a + rng.integers(-20, 21, (n_seg, 3)), 0, grid_side - 1)
    results = {}
    times = {}
    for name, fns in impls.items():
        grid = np.zeros((grid_side, grid_side, grid_side), dtype=np.uint8)
        fn = fns["paint_segments"]
        fn(grid, a, b)
        grid[:] = 0
        times[name] = _time(lambda: fn(grid, a, b), repeat)
        results[name] = grid.copy()
    _check_agreement(results)
    return times


def _check_agreement(results: dict) -> None:
    names = sorted(results)
    ref = results[names[0]]
    for name in names[1:]:
        got = results[name]
        if isinstance(ref, tuple):
            assert all(np.array_equal(r, g) for r, g in zip(ref, got)), (
                f"{name} disagrees with {names[0]}"
            )
        else:
            assert np.array_equal(ref, got), f"{name} disagrees with {names[0]}"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=3000,
                    help="source and target point count for the nearest scan")
    ap.add_argument("--segments", type=int, default=2000)
    ap.add_argument("--grid", type=int, default=128)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    impls = _kernels.implementations()
    print(f"kernel paths: {', '.join(sorted(impls))} "
          f"(numba {'on' if _kernels.USING_NUMBA else 'off'})")

    nearest = bench_nearest(impls, args.points, args.points, args.repeat)
    paint = bench_paint(impls, args.segments, args.grid, args.repeat)

    print(f"\n{'kernel':<16} " + " ".join(f"{n:>12}" for n in sorted(nearest)))
    for label, times in (("brute_nearest", nearest), ("paint_segments", paint)):
        row = " ".join(f"{times[n] * 1e3:>10.2f}ms" for n in sorted(times))
        print(f"{label:<16} {row}")
    if len(nearest) == 2:
        for label, times in (("brute_nearest", nearest), ("paint_segments", paint)):
            speedup = times["numpy"] / times["numba"]
            print(f"{label}: numba is {speedup:.1f}x the numpy path")


if __name__ == "__main__":
    main()
