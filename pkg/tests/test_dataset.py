import json
import struct
import zlib

import numpy as np
import pytest

from neuroqc.dataset import (
    CHANNELS,
    GROUPS,
    MAGIC,
    FoldSplit,
    NqcdReader,
    SampleRecord,
    append_dataset,
    build_pairs,
    build_pool,
    export_dataset,
    import_dataset,
    record_stride,
    split_folds,
)
from neuroqc.errors import DataError, DatasetFormatError
from neuroqc.poi import PoiLabelSet
from neuroqc.swc import parse_swc
from neuroqc.volume import Patch, Volume


def _patch(seed=0, dim=8, binary_density=0.2):
    rng = np.random.default_rng(seed)
    data = np.zeros((dim, dim, dim, 2), dtype=np.float32)
    data[..., 0] = rng.random((dim, dim, dim), dtype=np.float32)
    data[..., 1] = (rng.random((dim, dim, dim)) < binary_density).astype(np.float32)
    return Patch(data=data, center=("1/c", seed + 1), label=seed % 2,
                 volume_id="v", corner=(0, 0, 0))


def _records(n=5, dim=8):
    out = []
    for i in range(n):
        label = i % 2
        out.append(SampleRecord(
            neuron_id=100 + i,
            reconstruction_id=200 + i,
            point_id=300 + i,
            label=label,
            group="poi" if label else GROUPS[1 + i % 2],
            patch=_patch(seed=i, dim=dim),
        ))
    return out


class TestRecordValidation:
    def test_group_must_be_known(self):
        with pytest.raises(ValueError, match="group"):
            SampleRecord(1, 2, 3, 1, "bogus", _patch())

    def test_label_group_consistency(self):
        with pytest.raises(ValueError, match="label"):
            SampleRecord(1, 2, 3, 0, "poi", _patch())
        with pytest.raises(ValueError, match="label"):
            SampleRecord(1, 2, 3, 1, "match_control", _patch(seed=1))


class TestNqcdRoundTrip:
    def test_fields_and_payload_identical(self, tmp_path):
        recs = _records(7)
        path = tmp_path / "d.nqcd"
        export_dataset(recs, path, dim=8)
        back = import_dataset(path)
        assert len(back) == 7
        for a, b in zip(recs, back):
            assert (a.neuron_id, a.reconstruction_id, a.point_id) == (
                b.neuron_id, b.reconstruction_id, b.point_id)
            assert a.label == b.label and a.group == b.group
            assert np.array_equal(a.patch.data, b.patch.data)

    def test_empty_file_reads_zero(self, tmp_path):
        path = tmp_path / "e.nqcd"
        export_dataset([], path, dim=8)
        with NqcdReader(path) as r:
            assert len(r) == 0
        assert path.stat().st_size == 24

    def test_stride_and_layout(self, tmp_path):
        path = tmp_path / "s.nqcd"
        export_dataset(_records(3), path, dim=8)
        assert record_stride(8) == 32 + 2 * 8 ** 3 * 4 + 4
        assert path.stat().st_size == 24 + 3 * record_stride(8)
        header = path.read_bytes()[:24]
        magic, ver, dim, ch, count = struct.unpack("<4sIIIQ", header)
        assert magic == MAGIC and ver == 1 and dim == 8
        assert ch == CHANNELS and count == 3

    def test_payload_is_channel_major_zyx(self, tmp_path):
        rec = _records(1)[0]
        path = tmp_path / "c.nqcd"
        export_dataset([rec], path, dim=8)
        blob = path.read_bytes()
        body = blob[24 + 32:24 + 32 + 2 * 512 * 4]
        arr = np.frombuffer(body, dtype="<f4").reshape(2, 8, 8, 8)
        assert np.array_equal(np.moveaxis(arr, 0, 3), rec.patch.data)

    def test_random_access(self, tmp_path):
        recs = _records(6)
        path = tmp_path / "r.nqcd"
        export_dataset(recs, path, dim=8)
        with NqcdReader(path) as r:
            assert r.meta(4)[2] == 304
            assert np.array_equal(
                np.moveaxis(r.payload(2), 0, 3), recs[2].patch.data)
            got = r.record(5)
            assert got.group == recs[5].group


class TestNqcdCorruption:
    def test_crc_flip_detected(self, tmp_path):
        path = tmp_path / "x.nqcd"
        export_dataset(_records(2), path, dim=8)
        blob = bytearray(path.read_bytes())
        # flip one payload byte of record 1
        off = 24 + record_stride(8) + 32 + 100
        blob[off] ^= 0xFF
        path.write_bytes(bytes(blob))
        with NqcdReader(path) as r:
            r.payload(0)
            with pytest.raises(DatasetFormatError, match="CRC"):
                r.payload(1)
            # unverified read still works for tooling
            r.payload(1, verify=False)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "t.nqcd"
        export_dataset(_records(2), path, dim=8)
        blob = path.read_bytes()
        path.write_bytes(blob[:-10])
        with pytest.raises(DatasetFormatError, match="size"):
            NqcdReader(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.nqcd"
        export_dataset(_records(1), path, dim=8)
        blob = bytearray(path.read_bytes())
        blob[0] = ord("X")
        path.write_bytes(bytes(blob))
        with pytest.raises(DatasetFormatError, match="magic"):
            NqcdReader(path)

    def test_dim_mismatch_on_export(self, tmp_path):
        with pytest.raises(DataError, match="expected"):
            export_dataset(_records(1, dim=8), tmp_path / "w.nqcd", dim=16)

    def test_crc_is_crc32_of_payload(self, tmp_path):
        rec = _records(1)[0]
        path = tmp_path / "z.nqcd"
        export_dataset([rec], path, dim=8)
        blob = path.read_bytes()
        payload = blob[24 + 32:-4]
        stored = struct.unpack("<I", blob[-4:])[0]
        assert stored == zlib.crc32(payload) & 0xFFFFFFFF


class TestAppend:
    def test_append_equals_one_shot(self, tmp_path):
        recs = _records(6)
        one = tmp_path / "one.nqcd"
        two = tmp_path / "two.nqcd"
        export_dataset(recs, one, dim=8)
        export_dataset(recs[:2], two, dim=8)
        append_dataset(recs[2:], two)
        assert one.read_bytes() == two.read_bytes()

    def test_append_to_missing_creates(self, tmp_path):
        path = tmp_path / "new.nqcd"
        append_dataset(_records(3), path, dim=8)
        assert len(import_dataset(path)) == 3

    def test_append_dim_conflict(self, tmp_path):
        path = tmp_path / "d.nqcd"
        export_dataset(_records(1, dim=8), path, dim=8)
        with pytest.raises(DatasetFormatError, match="dim"):
            append_dataset(_records(1, dim=4), path)
        # nothing was written
        assert len(import_dataset(path)) == 1


class TestFolds:
    def test_sizes_254(self):
        split = split_folds(list(range(254)), k=5, seed=42)
        assert sorted(split.sizes(), reverse=True) == [51, 51, 51, 51, 50]
        assert sum(split.sizes()) == 254

    def test_each_neuron_exactly_once(self):
        ids = list(range(1000, 1254))
        split = split_folds(ids, k=5, seed=3)
        seen = [n for f in range(5) for n in split.neurons_in(f)]
        assert sorted(seen) == ids

    def test_five_ids_five_folds(self):
        split = split_folds([7, 8, 9, 10, 11], k=5, seed=0)
        assert split.sizes() == [1, 1, 1, 1, 1]

    def test_same_seed_same_split(self):
        a = split_folds(list(range(100)), k=5, seed=9)
        b = split_folds(list(range(100)), k=5, seed=9)
        assert a.assignment == b.assignment

    def test_different_seed_usually_differs(self):
        a = split_folds(list(range(100)), k=5, seed=1)
        b = split_folds(list(range(100)), k=5, seed=2)
        assert a.assignment != b.assignment

    def test_fold_frequency_over_seeds(self):
        # neuron 0 should land in each fold roughly 20 times over 100 seeds
        counts = np.zeros(5, dtype=int)
        for seed in range(100):
            split = split_folds(list(range(50)), k=5, seed=seed)
            counts[split.fold_of(0)] += 1
        assert counts.sum() == 100
        assert counts.min() >= 8 and counts.max() <= 34

    def test_validation(self):
        with pytest.raises(ValueError, match="fold count"):
            split_folds([1, 2, 3], k=1, seed=0)
        with pytest.raises(ValueError, match="duplicate"):
            split_folds([1, 1, 2], k=2, seed=0)
        with pytest.raises(ValueError, match="at least"):
            split_folds([1, 2], k=3, seed=0)

    def test_json_round_trip(self, tmp_path):
        split = split_folds(list(range(20)), k=4, seed=5)
        path = tmp_path / "folds.json"
        split.write_json(path)
        obj = json.loads(path.read_text())
        assert obj["k"] == 4 and obj["seed"] == 5
        assert set(obj["assignment"]) == {str(i) for i in range(20)}
        back = FoldSplit.read_json(path)
        assert back.assignment == split.assignment
        assert back.k == 4 and back.seed == 5

    def test_read_rejects_bad_fold(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"k": 2, "seed": 0, "assignment": {"1": 5}}))
        with pytest.raises(DataError, match="fold"):
            FoldSplit.read_json(path)


class TestBuildPairs:
    def _setup(self):
        text_c = "\n".join(
            f"{i} 3 {10 + 10 * i} 20 20 1 {i - 1 if i > 1 else -1}"
            for i in range(1, 5)
        )
        correct = parse_swc(text_c, neuron_id=1, label="correct")
        wrong = parse_swc(
            "\n".join(text_c.splitlines()[:3]), neuron_id=1, label="wrong_1")
        truth = PoiLabelSet(
            wrong=wrong.key, correct=correct.key, threshold=4.0,
            pois=[3], controls=[3], reasons=["missing_child"],
        )
        vol = Volume(np.full((64, 64, 64), 50, dtype=np.uint8), volume_id="v0")
        recons = {correct.key: correct, wrong.key: wrong}
        return truth, recons, {1: vol}

    def test_emits_interleaved_pairs(self):
        truth, recons, vols = self._setup()
        recs = build_pairs([truth], recons, vols, size=16)
        assert len(recs) == 2
        assert [r.label for r in recs] == [1, 0]
        assert [r.group for r in recs] == ["poi", "match_control"]
        assert recs[0].point_id == 3 and recs[1].point_id == 3
        assert recs[0].neuron_id == recs[1].neuron_id
        assert recs[0].reconstruction_id != recs[1].reconstruction_id
        for r in recs:
            r.patch.validate()
            assert r.patch.data[..., 1].any()

    def test_missing_recon_raises(self):
        truth, recons, vols = self._setup()
        del recons["1/correct"]
        with pytest.raises(DataError, match="reconstruction"):
            build_pairs([truth], recons, vols, size=16)

    def test_missing_volume_raises(self):
        truth, recons, vols = self._setup()
        with pytest.raises(DataError, match="volume"):
            build_pairs([truth], recons, {}, size=16)

    def test_binary_channels_differ_between_recons(self):
        truth, recons, vols = self._setup()
        recs = build_pairs([truth], recons, vols, size=16)
        a = recs[0].patch.data[..., 1]
        b = recs[1].patch.data[..., 1]
        assert not np.array_equal(a, b)


class TestBuildPool:
    def test_pool_records(self):
        r = parse_swc(
            "\n".join(f"{i} 3 {8 * i} 30 30 1 {i - 1 if i > 1 else -1}"
                      for i in range(1, 6)),
            neuron_id=2, label="correct")
        vol = Volume(np.full((64, 64, 64), 10, dtype=np.uint8), volume_id="v0")
        refs = [(r.key, 2), (r.key, 4)]
        recs = build_pool(refs, {r.key: r}, {2: vol}, size=16)
        assert len(recs) == 2
        assert all(rec.label == 0 and rec.group == "random_control"
                   for rec in recs)
        assert [rec.point_id for rec in recs] == [2, 4]
        for rec in recs:
            rec.patch.validate()
