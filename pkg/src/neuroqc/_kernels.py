"""Hot numeric kernels: exhaustive nearest-neighbor scans and segment painting.

Each kernel has a numba-compiled implementation and a pure numpy one.
Setting ``NEUROQC_NO_NUMBA=1`` (or any value other than ``0``) selects the
numpy path; the default uses numba when it imports cleanly. Both paths are
written to produce bit-identical results: distances accumulate as
``dx*dx + dy*dy + dz*dz`` in float64 in both, and voxel rounding uses the
same half-away-from-zero rule.

``benchmarks/bench_kernels.py`` times the two paths against each other.
"""

from __future__ import annotations

import math
import os

import numpy as np

_INT64_MAX = np.iinfo(np.int64).max

NUMBA_DISABLED = os.environ.get("NEUROQC_NO_NUMBA", "0") != "0"

if not NUMBA_DISABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_DISABLED = True

USING_NUMBA = not NUMBA_DISABLED


# -- exhaustive nearest neighbor ------------------------------------------


def _brute_nearest_loop(src, tgt, tgt_ids, out_id, out_d2):
    for i in range(src.shape[0]):
        sx, sy, sz = src[i, 0], src[i, 1], src[i, 2]
        best_d2 = np.inf
        best_id = _INT64_MAX
        for j in range(tgt.shape[0]):
            dx = sx - tgt[j, 0]
            dy = sy - tgt[j, 1]
            dz = sz - tgt[j, 2]
            d2 = dx * dx + dy * dy + dz * dz
            if d2 < best_d2 or (d2 == best_d2 and tgt_ids[j] < best_id):
                best_d2 = d2
                best_id = tgt_ids[j]
        out_id[i] = best_id
        out_d2[i] = best_d2


def _brute_nearest_numpy(src, tgt, tgt_ids, out_id, out_d2, chunk=256):
    # Chunk the source side to bound the (chunk, n_tgt) distance matrix.
    # dx*dx + dy*dy + dz*dz accumulates in the same order as the loop kernel
    # so both paths produce bit-identical distances.
    for lo in range(0, src.shape[0], chunk):
        hi = min(lo + chunk, src.shape[0])
        block = src[lo:hi]
        dx = block[:, 0:1] - tgt[None, :, 0]
        dy = block[:, 1:2] - tgt[None, :, 1]
        dz = block[:, 2:3] - tgt[None, :, 2]
        d2 = dx * dx
        d2 += dy * dy
        d2 += dz * dz
        best = d2.min(axis=1)
        tied = np.where(d2 == best[:, None], tgt_ids[None, :], _INT64_MAX)
        out_id[lo:hi] = tied.min(axis=1)
        out_d2[lo:hi] = best


# -- 26-connected segment painting ----------------------------------------
#
# The voxel line between integer endpoints a and b is defined as
# round(a + (b-a)*k/n) for k = 0..n with n = max(|b-a|) per axis; rounding
# is half-away-from-zero. Consecutive voxels differ by at most one step on
# each axis.


def _paint_segments_loop(grid, seg_a, seg_b):
    nz, ny, nx = grid.shape
    for s in range(seg_a.shape[0]):
        ax, ay, az = seg_a[s, 0], seg_a[s, 1], seg_a[s, 2]
        dx = seg_b[s, 0] - ax
        dy = seg_b[s, 1] - ay
        dz = seg_b[s, 2] - az
        n = max(abs(dx), abs(dy), abs(dz))
        for k in range(n + 1):
            if n == 0:
                x, y, z = ax, ay, az
            else:
                fx = ax + (dx * k) / n
                fy = ay + (dy * k) / n
                fz = az + (dz * k) / n
                x = int(math.floor(abs(fx) + 0.5)) * (1 if fx >= 0 else -1)
                y = int(math.floor(abs(fy) + 0.5)) * (1 if fy >= 0 else -1)
                z = int(math.floor(abs(fz) + 0.5)) * (1 if fz >= 0 else -1)
            if 0 <= x < nx and 0 <= y < ny and 0 <= z < nz:
                grid[z, y, x] = 1


def _paint_segments_numpy(grid, seg_a, seg_b):
    nz, ny, nx = grid.shape
    for s in range(seg_a.shape[0]):
        a = seg_a[s]
        dv = seg_b[s] - a
        n = int(np.max(np.abs(dv)))
        if n == 0:
            vox = a[None, :]
        else:
            k = np.arange(n + 1, dtype=np.int64)
            f = a[None, :] + (dv[None, :] * k[:, None]) / n
            vox = (np.sign(f) * np.floor(np.abs(f) + 0.5)).astype(np.int64)
        ok = (
            (vox[:, 0] >= 0) & (vox[:, 0] < nx)
            & (vox[:, 1] >= 0) & (vox[:, 1] < ny)
            & (vox[:, 2] >= 0) & (vox[:, 2] < nz)
        )
        vox = vox[ok]
        grid[vox[:, 2], vox[:, 1], vox[:, 0]] = 1


if USING_NUMBA:
    _brute_nearest_nb = njit(cache=True)(_brute_nearest_loop)
    _paint_segments_nb = njit(cache=True)(_paint_segments_loop)


def brute_nearest(
    src_xyz: np.ndarray, tgt_xyz: np.ndarray, tgt_ids: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Exhaustive nearest target for every source point.

    Returns (nearest_id, squared_distance) arrays; ties on distance resolve
    to the smallest target id. The target side must be non-empty.
    """
    src = np.ascontiguousarray(src_xyz, dtype=np.float64)
    tgt = np.ascontiguousarray(tgt_xyz, dtype=np.float64)
    ids = np.ascontiguousarray(tgt_ids, dtype=np.int64)
    if tgt.shape[0] == 0:
        raise ValueError("empty target point set")
    out_id = np.empty(src.shape[0], dtype=np.int64)
    out_d2 = np.empty(src.shape[0], dtype=np.float64)
    if USING_NUMBA:
        _brute_nearest_nb(src, tgt, ids, out_id, out_d2)
    else:
        _brute_nearest_numpy(src, tgt, ids, out_id, out_d2)
    return out_id, out_d2


def paint_segments(grid: np.ndarray, seg_a: np.ndarray, seg_b: np.ndarray) -> None:
    """Set to 1 every grid voxel on the 26-connected walk a->b per segment.

    `grid` has shape (nz, ny, nx); endpoints are integer voxel coordinates in
    (x, y, z) order. Out-of-bounds voxels are silently clipped. Writing a
    voxel twice is benign, so segment order does not matter.
    """
    a = np.ascontiguousarray(seg_a, dtype=np.int64).reshape(-1, 3)
    b = np.ascontiguousarray(seg_b, dtype=np.int64).reshape(-1, 3)
    if a.shape != b.shape:
        raise ValueError("segment endpoint arrays must have matching shapes")
    if USING_NUMBA:
        _paint_segments_nb(grid, a, b)
    else:
        _paint_segments_numpy(grid, a, b)


def implementations() -> dict[str, dict[str, object]]:
    """Both kernel paths by name, for benchmarking and equivalence tests."""
    impls = {
        "numpy": {
            "brute_nearest": _brute_nearest_numpy,
            "paint_segments": _paint_segments_numpy,
        }
    }
    if USING_NUMBA:
        impls["numba"] = {
            "brute_nearest": _brute_nearest_nb,
            "paint_segments": _paint_segments_nb,
        }
    return impls
