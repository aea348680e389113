"""Shared builders for synthetic patch datasets in the trainer's format."""

import json
import struct
import zlib

import numpy as np
import pytest

HEADER = struct.Struct("<4sIIIQ")
META = struct.Struct("<QQQBB6x")


def grid_coords(dim):
    return np.stack(
        np.meshgrid(np.arange(dim), np.arange(dim), np.arange(dim), indexing="ij"),
        axis=-1,
    ).astype(np.float64)


def _tube(mask, coords, center, direction, radius):
    d = direction / np.linalg.norm(direction)
    rel = coords - center
    t = rel @ d
    perp = rel - t[..., None] * d
    mask |= np.linalg.norm(perp, axis=-1) < radius


def make_patch(rng, is_poi, dim=32):
    """Two-channel cube: divergence points get a second branch and a
    brighter center than controls, separable by either channel."""
    coords = grid_coords(dim)
    intensity = rng.normal(0.12, 0.03, (dim, dim, dim))
    binary = np.zeros((dim, dim, dim), dtype=bool)
    c = np.full(3, (dim - 1) / 2.0) + rng.uniform(-2, 2, 3)
    _tube(binary, coords, c, rng.normal(size=3), 1.8)
    if is_poi:
        _tube(binary, coords, c, rng.normal(size=3), 1.8)
        peak = 0.75
    else:
        peak = 0.30
    rel = np.linalg.norm(coords - c, axis=-1)
    intensity = np.clip(
        intensity + 0.45 * binary + peak * np.exp(-(rel**2) / 18.0), 0.0, 1.0
    )
    return np.stack([intensity, binary.astype(np.float64)]).astype(np.float32)


def write_nqcd(path, records, dim=32):
    """records: iterable of (neuron, recon, point, label, group, patch)."""
    records = list(records)
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(b"NQCD", 1, dim, 2, len(records)))
        for nid, rid, pid, label, group, patch in records:
            fh.write(META.pack(nid, rid, pid, label, group))
            payload = np.ascontiguousarray(patch, dtype="<f4").tobytes()
            fh.write(payload)
            fh.write(struct.pack("<I", zlib.crc32(payload)))
    return path


def build_corpus(
    path,
    n_neurons,
    pairs_per_neuron=1,
    randoms_per_neuron=0,
    seed=0,
    dim=32,
):
    """Write a pair-then-pool dataset; returns the record metadata."""
    rng = np.random.default_rng(seed)
    records = []
    pid = 0
    for n in range(1, n_neurons + 1):
        for _ in range(pairs_per_neuron):
            pid += 1
            records.append((n, n * 10 + 1, pid, 1, 0, make_patch(rng, True, dim)))
            pid += 1
            records.append((n, n * 10, pid, 0, 1, make_patch(rng, False, dim)))
    for n in range(1, n_neurons + 1):
        for _ in range(randoms_per_neuron):
            pid += 1
            records.append((n, n * 10, pid, 0, 2, make_patch(rng, False, dim)))
    write_nqcd(path, records, dim)
    return [(r[0], r[1], r[2], r[3], r[4]) for r in records]


def write_folds(path, k, assignment, seed=0):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(
            {"k": k, "seed": seed, "assignment": {str(n): f for n, f in assignment.items()}},
            fh,
            indent=1,
        )
        fh.write("\n")
    return path


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """12 neurons, one pair and two random controls each, two folds."""
    root = tmp_path_factory.mktemp("small_corpus")
    path = root / "patches.nqcd"
    meta = build_corpus(path, n_neurons=12, randoms_per_neuron=2, seed=11)
    folds = write_folds(root / "folds.json", 2, {n: (n - 1) % 2 for n in range(1, 13)})
    return {"nqcd": path, "folds": folds, "meta": meta}
