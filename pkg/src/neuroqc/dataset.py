"""Labeled patch datasets: assembly, five-fold splitting, binary storage.

The `.nqcd` container is little-endian with a fixed record stride so
training code can seek or memory-map records at random:

    header:  magic "NQCD" | u32 version=1 | u32 patch_dim=32 |
             u32 channels=2 | u64 record_count
    record:  u64 neuron_id | u64 reconstruction_id | u64 point_id |
             u8 label | u8 group | 6 pad bytes |
             payload: channels*dim^3 float32, channel-major then z, y, x |
             u32 CRC-32 of the payload

Group codes: 0 = poi, 1 = match_control, 2 = random_control. Patch
provenance (volume id, crop corner) is not persisted.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DatasetFormatError
from .poi import PointRef, PoiLabelSet
from .swc import NeuronReconstruction, fnv1a64
from .volume import PATCH_SIZE, Patch, Volume, crop_patch, rasterize

MAGIC = b"NQCD"
VERSION = 1
CHANNELS = 2

GROUPS = ("poi", "match_control", "random_control")
_GROUP_CODE = {name: i for i, name in enumerate(GROUPS)}

_HEADER = struct.Struct("<4sIIIQ")
_RECORD_META = struct.Struct("<QQQBB6x")
_CRC = struct.Struct("<I")


@dataclass
class SampleRecord:
    """One labeled patch with its identifying metadata."""

    neuron_id: int
    reconstruction_id: int
    point_id: int
    label: int
    group: str
    patch: Patch

    def __post_init__(self):
        if self.group not in _GROUP_CODE:
            raise ValueError(f"unknown group tag '{self.group}'")
        if (self.label == 1) != (self.group == "poi"):
            raise ValueError(
                f"label {self.label} inconsistent with group '{self.group}'"
            )


def _payload_bytes(patch: Patch) -> bytes:
    # (z, y, x, channel) -> channel-major (channel, z, y, x), C order.
    arr = np.ascontiguousarray(np.moveaxis(patch.data, 3, 0), dtype="<f4")
    return arr.tobytes()


def record_stride(dim: int = PATCH_SIZE) -> int:
    return _RECORD_META.size + CHANNELS * dim ** 3 * 4 + _CRC.size


def export_dataset(records: list[SampleRecord], path, dim: int = PATCH_SIZE) -> None:
    """Write records to a `.nqcd` file (bit-exact, platform independent)."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, dim, CHANNELS, len(records)))
        for rec in records:
            if rec.patch.data.shape != (dim, dim, dim, CHANNELS):
                raise DataError(
                    f"record for point {rec.point_id} has patch shape "
                    f"{rec.patch.data.shape}, expected {(dim, dim, dim, CHANNELS)}"
                )
            payload = _payload_bytes(rec.patch)
            fh.write(
                _RECORD_META.pack(
                    rec.neuron_id,
                    rec.reconstruction_id,
                    rec.point_id,
                    rec.label,
                    _GROUP_CODE[rec.group],
                )
            )
            fh.write(payload)
            fh.write(_CRC.pack(zlib.crc32(payload)))


def append_dataset(records: list[SampleRecord], path, dim: int = PATCH_SIZE) -> None:
    """Append records to an existing `.nqcd` file, updating its count."""
    path = Path(path)
    if not path.exists():
        export_dataset(records, path, dim=dim)
        return
    with open(path, "r+b") as fh:
        header = fh.read(_HEADER.size)
        magic, version, file_dim, channels, count = _unpack_header(header, path)
        want = (file_dim, file_dim, file_dim, CHANNELS)
        for rec in records:
            if rec.patch.data.shape != want:
                raise DatasetFormatError(
                    f"{path}: cannot append patch of shape "
                    f"{rec.patch.data.shape} to a dataset of dim {file_dim}"
                )
        fh.seek(0, 2)
        for rec in records:
            payload = _payload_bytes(rec.patch)
            fh.write(
                _RECORD_META.pack(
                    rec.neuron_id,
                    rec.reconstruction_id,
                    rec.point_id,
                    rec.label,
                    _GROUP_CODE[rec.group],
                )
            )
            fh.write(payload)
            fh.write(_CRC.pack(zlib.crc32(payload)))
        fh.seek(0)
        fh.write(_HEADER.pack(magic, version, file_dim, channels, count + len(records)))


def _unpack_header(header: bytes, path) -> tuple:
    if len(header) < _HEADER.size:
        raise DatasetFormatError(f"{path}: truncated header")
    magic, version, dim, channels, count = _HEADER.unpack(header)
    if magic != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version}")
    if channels != CHANNELS:
        raise DatasetFormatError(f"{path}: expected {CHANNELS} channels")
    return magic, version, dim, channels, count


class NqcdReader:
    """Random-access reader over the fixed-stride `.nqcd` layout."""

    def __init__(self, path):
        self.path = Path(path)
        with open(self.path, "rb") as fh:
            header = fh.read(_HEADER.size)
        _, _, self.dim, _, self.count = _unpack_header(header, self.path)
        self._stride = record_stride(self.dim)
        expected = _HEADER.size + self.count * self._stride
        actual = self.path.stat().st_size
        if actual != expected:
            raise DatasetFormatError(
                f"{self.path}: size {actual} does not match header "
                f"(count {self.count} implies {expected})"
            )
        self._data = np.memmap(self.path, dtype=np.uint8, mode="r")

    def close(self) -> None:
        # release the memmap so the file can be replaced on Windows-y setups
        self._data = None

    def __enter__(self) -> "NqcdReader":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def __len__(self) -> int:
        return self.count

    def _record_bytes(self, i: int) -> np.ndarray:
        if not 0 <= i < self.count:
            raise IndexError(f"record index {i} out of range [0, {self.count})")
        start = _HEADER.size + i * self._stride
        return self._data[start : start + self._stride]

    def meta(self, i: int) -> tuple[int, int, int, int, str]:
        """(neuron_id, reconstruction_id, point_id, label, group)."""
        raw = bytes(self._record_bytes(i)[: _RECORD_META.size])
        nid, rid, pid, label, group = _RECORD_META.unpack(raw)
        if group >= len(GROUPS):
            raise DatasetFormatError(f"{self.path}: bad group code {group}")
        return nid, rid, pid, label, GROUPS[group]

    def payload(self, i: int, verify: bool = True) -> np.ndarray:
        """Patch voxels as (channels, dim, dim, dim) float32."""
        rec = self._record_bytes(i)
        payload = rec[_RECORD_META.size : -_CRC.size]
        if verify:
            (stored,) = _CRC.unpack(bytes(rec[-_CRC.size :]))
            if zlib.crc32(bytes(payload)) != stored:
                raise DatasetFormatError(
                    f"{self.path}: CRC mismatch in record {i}"
                )
        arr = np.frombuffer(bytes(payload), dtype="<f4")
        return arr.reshape(CHANNELS, self.dim, self.dim, self.dim).astype(np.float32)

    def record(self, i: int) -> SampleRecord:
        nid, rid, pid, label, group = self.meta(i)
        data = np.moveaxis(self.payload(i), 0, 3)
        patch = Patch(
            data=np.ascontiguousarray(data), center=("", pid), label=label
        )
        return SampleRecord(
            neuron_id=nid,
            reconstruction_id=rid,
            point_id=pid,
            label=label,
            group=group,
            patch=patch,
        )


def import_dataset(path) -> list[SampleRecord]:
    """Read a `.nqcd` file back into records, verifying every checksum."""
    reader = NqcdReader(path)
    return [reader.record(i) for i in range(len(reader))]


# -- fold splitting --------------------------------------------------------


@dataclass
class FoldSplit:
    """Neuron-level fold assignment; all samples of a neuron share a fold."""

    k: int
    seed: int
    assignment: dict[int, int]

    def fold_of(self, neuron_id: int) -> int:
        return self.assignment[neuron_id]

    def sizes(self) -> list[int]:
        counts = [0] * self.k
        for fold in self.assignment.values():
            counts[fold] += 1
        return counts

    def neurons_in(self, fold: int) -> list[int]:
        return sorted(n for n, f in self.assignment.items() if f == fold)

    def to_json_obj(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "assignment": {str(n): f for n, f in sorted(self.assignment.items())},
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_obj(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def read_json(cls, path) -> "FoldSplit":
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        k = obj["k"]
        assignment = {int(n): f for n, f in obj["assignment"].items()}
        for neuron, fold in assignment.items():
            if not isinstance(fold, int) or not 0 <= fold < k:
                raise DataError(
                    f"{path}: neuron {neuron} assigned to fold {fold}, "
                    f"outside [0, {k})"
                )
        return cls(k=k, seed=obj["seed"], assignment=assignment)


def split_folds(neuron_ids: list[int], k: int = 5, seed: int = 0) -> FoldSplit:
    """Seeded shuffle then round-robin: fold sizes differ by at most one."""
    if k < 2:
        raise ValueError(f"fold count must be >= 2, got {k}")
    if len(set(neuron_ids)) != len(neuron_ids):
        raise ValueError("duplicate neuron ids in fold input")
    if len(neuron_ids) < k:
        raise ValueError(f"need at least {k} neurons for {k} folds")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(neuron_ids))
    assignment = {
        int(neuron_ids[int(idx)]): pos % k for pos, idx in enumerate(order)
    }
    return FoldSplit(k=k, seed=seed, assignment=assignment)


# -- sample assembly -------------------------------------------------------


def build_pairs(
    labelsets: list[PoiLabelSet],
    reconstructions: dict[str, NeuronReconstruction],
    volumes: dict[int, Volume],
    size: int = PATCH_SIZE,
) -> list[SampleRecord]:
    """One (poi, match_control) record pair per labeled POI, interleaved.

    `reconstructions` is keyed by reconstruction key; `volumes` by neuron
    id. Binary maps are rasterized once per reconstruction.
    """
    maps: dict[str, np.ndarray] = {}
    records: list[SampleRecord] = []
    for ls in labelsets:
        try:
            wrong = reconstructions[ls.wrong]
            correct = reconstructions[ls.correct]
        except KeyError as exc:
            raise DataError(f"labelset references unknown reconstruction {exc}")
        if wrong.neuron_id not in volumes:
            raise DataError(f"no volume for neuron {wrong.neuron_id}")
        vol = volumes[wrong.neuron_id]
        for key, recon in ((ls.wrong, wrong), (ls.correct, correct)):
            if key not in maps:
                maps[key] = rasterize(recon, vol)
        for poi_id, ctrl_id, _reason in ls.pairs():
            poi_patch = crop_patch(
                vol, maps[ls.wrong], wrong.point(poi_id),
                size=size, recon_key=ls.wrong, label=1,
            )
            ctrl_patch = crop_patch(
                vol, maps[ls.correct], correct.point(ctrl_id),
                size=size, recon_key=ls.correct, label=0,
            )
            records.append(
                SampleRecord(
                    neuron_id=wrong.neuron_id,
                    reconstruction_id=wrong.uid,
                    point_id=poi_id,
                    label=1,
                    group="poi",
                    patch=poi_patch,
                )
            )
            records.append(
                SampleRecord(
                    neuron_id=correct.neuron_id,
                    reconstruction_id=correct.uid,
                    point_id=ctrl_id,
                    label=0,
                    group="match_control",
                    patch=ctrl_patch,
                )
            )
    return records


def build_pool(
    refs: list[PointRef],
    reconstructions: dict[str, NeuronReconstruction],
    volumes: dict[int, Volume],
    size: int = PATCH_SIZE,
) -> list[SampleRecord]:
    """Candidate random-control records for the given point references."""
    maps: dict[str, np.ndarray] = {}
    records: list[SampleRecord] = []
    for key, point_id in refs:
        if key not in reconstructions:
            raise DataError(f"pool reference to unknown reconstruction '{key}'")
        recon = reconstructions[key]
        if recon.neuron_id not in volumes:
            raise DataError(f"no volume for neuron {recon.neuron_id}")
        vol = volumes[recon.neuron_id]
        if key not in maps:
            maps[key] = rasterize(recon, vol)
        patch = crop_patch(
            vol, maps[key], recon.point(point_id),
            size=size, recon_key=key, label=0,
        )
        records.append(
            SampleRecord(
                neuron_id=recon.neuron_id,
                reconstruction_id=recon.uid,
                point_id=point_id,
                label=0,
                group="random_control",
                patch=patch,
            )
        )
    return records


def reconstruction_uid(neuron_id: int, label: str) -> int:
    """The u64 reconstruction id stored in `.nqcd` records."""
    return fnv1a64(f"{neuron_id}/{label}")
