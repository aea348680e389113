"""Reading patch datasets and fold files, and composing training batches.

The two on-disk formats (.nqcd patch containers and folds JSON) are
re-implemented here rather than imported from the QC package: the bytes
are the contract between the two sides, and reading them independently
keeps the trainer deployable on its own.

An .nqcd file is a 24-byte header (magic ``NQCD``, u32 version, u32 patch
dim, u32 channels, u64 record count, all little endian) followed by
fixed-stride records: 32 bytes of metadata (u64 neuron id, u64
reconstruction id, u64 point id, u8 label, u8 group, 6 pad bytes), a
channel-major float32 payload, and a u32 CRC-32 of the payload bytes.
Groups: 0 divergence points, 1 their matched controls, 2 random controls.
"""

from __future__ import annotations

import json
import math
import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"NQCD"
VERSION = 1
CHANNELS = 2
_HEADER = struct.Struct("<4sIIIQ")
_META = struct.Struct("<QQQBB6x")

GROUP_POI = 0
GROUP_MATCH = 1
GROUP_RANDOM = 2


class TrainerDataError(Exception):
    """Unusable dataset, folds file, or record layout."""


class PatchDataset:
    """Memory-mapped read access to an .nqcd patch container.

    Metadata for every record is decoded once at open; payloads are read
    on demand and CRC-checked unless `verify` is disabled.
    """

    def __init__(self, path, verify: bool = True):
        self.path = Path(path)
        self.verify = verify
        raw = np.memmap(self.path, dtype=np.uint8, mode="r")
        if raw.size < _HEADER.size:
            raise TrainerDataError(f"{self.path}: too short for a dataset header")
        magic, version, dim, channels, count = _HEADER.unpack_from(raw[: _HEADER.size])
        if magic != MAGIC:
            raise TrainerDataError(f"{self.path}: bad magic {magic!r}")
        if version != VERSION:
            raise TrainerDataError(f"{self.path}: unsupported version {version}")
        if channels != CHANNELS:
            raise TrainerDataError(
                f"{self.path}: expected {CHANNELS} channels, found {channels}"
            )
        self.dim = int(dim)
        self.count = int(count)
        self._payload_bytes = CHANNELS * self.dim**3 * 4
        self._stride = _META.size + self._payload_bytes + 4
        expected = _HEADER.size + self.count * self._stride
        if raw.size != expected:
            raise TrainerDataError(
                f"{self.path}: size {raw.size} does not match header "
                f"(expected {expected} for {self.count} records)"
            )
        self._raw = raw

        self.neuron_ids = np.empty(self.count, dtype=np.int64)
        self.reconstruction_ids = np.empty(self.count, dtype=np.uint64)
        self.point_ids = np.empty(self.count, dtype=np.int64)
        self.labels = np.empty(self.count, dtype=np.uint8)
        self.groups = np.empty(self.count, dtype=np.uint8)
        for i in range(self.count):
            nid, rid, pid, label, group = _META.unpack_from(
                self._raw, _HEADER.size + i * self._stride
            )
            self.neuron_ids[i] = nid
            self.reconstruction_ids[i] = rid
            self.point_ids[i] = pid
            self.labels[i] = label
            self.groups[i] = group

    def __len__(self) -> int:
        return self.count

    def patch(self, i: int) -> np.ndarray:
        """Payload of record `i` as float32 (channels, dim, dim, dim)."""
        if not 0 <= i < self.count:
            raise IndexError(i)
        off = _HEADER.size + i * self._stride + _META.size
        payload = self._raw[off : off + self._payload_bytes]
        if self.verify:
            (stored,) = struct.unpack_from("<I", self._raw, off + self._payload_bytes)
            if zlib.crc32(payload.tobytes()) != stored:
                raise TrainerDataError(f"{self.path}: CRC mismatch in record {i}")
        return (
            payload.view(np.dtype("<f4"))
            .reshape(CHANNELS, self.dim, self.dim, self.dim)
            .astype(np.float32)
        )

    def batch(self, indices) -> np.ndarray:
        """(n, channels, dim, dim, dim) float32 stack of the given records."""
        return np.stack([self.patch(int(i)) for i in indices])

    def pair_indices(self) -> np.ndarray:
        """(n, 2) record indices of (divergence point, matched control) pairs.

        Pairs are written adjacently by the producer; a group-0 record not
        followed by a group-1 record is a layout error.
        """
        pois = np.flatnonzero(self.groups == GROUP_POI)
        for i in pois:
            if i + 1 >= self.count or self.groups[i + 1] != GROUP_MATCH:
                raise TrainerDataError(
                    f"{self.path}: record {int(i)} has no adjacent matched control"
                )
        return np.column_stack([pois, pois + 1]).astype(np.int64)

    def random_indices(self) -> np.ndarray:
        return np.flatnonzero(self.groups == GROUP_RANDOM)


def read_folds(path) -> tuple[int, dict[int, int]]:
    """Parse a folds JSON file into (k, {neuron id -> fold index})."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise TrainerDataError(f"{path}: unreadable folds file: {exc}") from None
    if not isinstance(obj, dict) or "k" not in obj or "assignment" not in obj:
        raise TrainerDataError(f"{path}: folds file needs 'k' and 'assignment'")
    k = obj["k"]
    if not isinstance(k, int) or k < 2:
        raise TrainerDataError(f"{path}: fold count must be an integer >= 2")
    assignment: dict[int, int] = {}
    for key, fold in obj["assignment"].items():
        if not isinstance(fold, int) or isinstance(fold, bool) or not 0 <= fold < k:
            raise TrainerDataError(
                f"{path}: neuron {key} assigned to fold {fold}, outside [0, {k})"
            )
        assignment[int(key)] = fold
    if not assignment:
        raise TrainerDataError(f"{path}: empty fold assignment")
    return k, assignment


def split_train_neurons(
    train_neurons, val_fraction: float, seed: int
) -> tuple[list[int], list[int]]:
    """Hold out a fraction of training neurons for checkpoint selection.

    Returns (fit neurons, held-out neurons), both sorted. The holdout is
    at least one neuron whenever the fraction is positive.
    """
    ordered = sorted(int(n) for n in train_neurons)
    if val_fraction <= 0.0:
        return ordered, []
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"holdout fraction must be in [0, 1), got {val_fraction}")
    n_val = min(len(ordered) - 1, max(1, math.ceil(val_fraction * len(ordered))))
    if n_val < 1:
        return ordered, []
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(ordered), size=n_val, replace=False)
    val = sorted(ordered[int(i)] for i in picked)
    fit = [n for n in ordered if n not in set(val)]
    return fit, val


def epoch_batches(
    pairs: np.ndarray,
    randoms: np.ndarray,
    rng: np.random.Generator,
    pairs_per_batch: int = 5,
    randoms_per_batch: int = 5,
) -> list[np.ndarray]:
    """Index batches for one epoch: N pairs plus N random controls each.

    Pairs are permuted and consumed without replacement; the trailing
    remainder smaller than a full batch is dropped. Random controls are
    likewise drawn without replacement, reshuffling only if the pool runs
    out mid-epoch. Each batch lists record indices as
    [divergence points..., matched controls..., random controls...].
    """
    if len(pairs) < pairs_per_batch:
        raise TrainerDataError(
            f"need at least {pairs_per_batch} training pairs, have {len(pairs)}"
        )
    if randoms_per_batch and len(randoms) == 0:
        raise TrainerDataError("no random-control records to sample from")
    order = rng.permutation(len(pairs))
    n_batches = len(pairs) // pairs_per_batch
    rand_seq = np.empty(0, dtype=np.int64)
    if randoms_per_batch:
        need = n_batches * randoms_per_batch
        chunks = []
        got = 0
        while got < need:
            chunks.append(rng.permutation(randoms))
            got += len(randoms)
        rand_seq = np.concatenate(chunks)[:need]
    batches = []
    for b in range(n_batches):
        chunk = pairs[order[b * pairs_per_batch : (b + 1) * pairs_per_batch]]
        parts = [chunk[:, 0], chunk[:, 1]]
        if randoms_per_batch:
            parts.append(rand_seq[b * randoms_per_batch : (b + 1) * randoms_per_batch])
        batches.append(np.concatenate(parts).astype(np.int64))
    return batches
