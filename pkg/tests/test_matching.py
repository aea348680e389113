import json

import numpy as np
import pytest

from neuroqc.errors import DataError
from neuroqc.matching import (
    DEFAULT_THRESHOLD,
    MatchConfig,
    MatchMap,
    build_spatial_index,
    euclidean,
    find_match,
    match_map,
    match_map_brute,
)
from neuroqc.swc import NeuronPoint, NeuronReconstruction, parse_swc

from conftest import random_tree


def _cloud(points_with_ids, neuron_id=0, label=""):
    """Reconstruction from explicit (id, x, y, z) rows, chain-free."""
    pts = [
        NeuronPoint(id=i, kind=3, x=x, y=y, z=z, radius=1.0, parent=None)
        for i, x, y, z in points_with_ids
    ]
    return NeuronReconstruction.from_points(pts, neuron_id=neuron_id, label=label)


class TestSpatialIndex:
    def test_single_point_distance_zero(self):
        r = _cloud([(1, 1.0, 2.0, 3.0)])
        idx = build_spatial_index(r)
        ids, d2 = idx.nearest_within(np.array([[1.0, 2.0, 3.0]]), 4.0)
        assert ids[0] == 1
        assert d2[0] == 0.0

    def test_midpoint_tie_returns_smaller_id(self):
        r = _cloud([(7, 0.0, 0.0, 0.0), (4, 2.0, 0.0, 0.0)])
        idx = build_spatial_index(r)
        ids, _ = idx.nearest_within(np.array([[1.0, 0.0, 0.0]]), 4.0)
        assert ids[0] == 4

    def test_matches_exhaustive_scan(self):
        tgt = random_tree(5000, seed=10, span=300.0)
        queries = np.random.default_rng(11).uniform(0, 300, (1000, 3))
        idx = build_spatial_index(tgt)
        got_ids, got_d2 = idx.nearest_within(queries, 10.0)
        from neuroqc import _kernels

        nn_id, nn_d2 = _kernels.brute_nearest(queries, tgt.xyz, tgt.ids)
        want_ids = np.where(nn_d2 < 100.0, nn_id, -1)
        assert np.array_equal(got_ids, want_ids)
        matched = got_ids >= 0
        assert np.array_equal(got_d2[matched], nn_d2[matched])

    def test_empty_reconstruction_unindexable(self):
        # an empty reconstruction cannot even be constructed
        from neuroqc.errors import SwcValidationError

        with pytest.raises(SwcValidationError):
            parse_swc("")


class TestFindMatch:
    def test_sqrt12_is_a_match(self):
        r = _cloud([(1, 2.0, 2.0, 2.0)])
        p = NeuronPoint(id=9, kind=3, x=0, y=0, z=0, radius=1, parent=None)
        got = find_match(p, build_spatial_index(r), MatchConfig())
        assert got is not None and got.id == 1
        assert euclidean(p, got) == pytest.approx(np.sqrt(12.0))

    def test_distance_exactly_threshold_is_not_a_match(self):
        r = _cloud([(1, 4.0, 0.0, 0.0)])
        p = NeuronPoint(id=9, kind=3, x=0, y=0, z=0, radius=1, parent=None)
        assert find_match(p, build_spatial_index(r), MatchConfig()) is None

    def test_agrees_with_scan_on_random_clouds(self):
        src = random_tree(2000, seed=20, span=150.0)
        dst = random_tree(2000, seed=21, span=150.0)
        fast = match_map(src, dst)
        slow = match_map_brute(src, dst)
        assert fast == slow


class TestMatchMap:
    def test_identity_map(self):
        r = random_tree(300, seed=30, neuron_id=4, label="a")
        m = match_map(r, r)
        assert m.n_matched == len(r)
        for sid in r.ids:
            assert m.get(int(sid)) == int(sid)
        assert np.all(m.distances == 0.0)

    def test_far_point_unmatched(self):
        src = _cloud([(1, 0.0, 0.0, 0.0), (2, 100.0, 0.0, 0.0)])
        dst = _cloud([(1, 1.0, 0.0, 0.0)])
        m = match_map(src, dst)
        assert m.get(1) == 1
        assert m.get(2) is None
        assert m.unmatched_ids() == {2}

    def test_jitter_below_half_threshold_all_matched(self):
        src = random_tree(500, seed=31, span=400.0)
        rng = np.random.default_rng(32)
        offsets = rng.normal(size=(500, 3))
        offsets *= (rng.uniform(0, 1.9, 500) / np.linalg.norm(offsets, axis=1))[:, None]
        dst = NeuronReconstruction(
            src.neuron_id, "jit", src.ids, src.kinds,
            src.xyz + offsets, src.radii, src.parents,
        )
        m = match_map(src, dst)
        assert m.n_matched == len(src)
        assert match_map_brute(src, dst).n_matched == len(src)

    def test_neuron_id_mismatch(self):
        a = random_tree(5, seed=1, neuron_id=1)
        b = random_tree(5, seed=2, neuron_id=2)
        with pytest.raises(DataError, match="different neurons"):
            match_map(a, b)

    def test_deterministic_across_worker_counts_and_reruns(self):
        src = random_tree(800, seed=33, span=100.0)
        dst = random_tree(800, seed=34, span=100.0)
        base = match_map(src, dst, workers=1)
        assert match_map(src, dst, workers=2) == base
        assert match_map(src, dst, workers=4) == base
        assert match_map(src, dst, workers=1) == base

    def test_one_to_many_allowed(self):
        src = _cloud([(1, 0.0, 0.0, 0.0), (2, 1.0, 0.0, 0.0)])
        dst = _cloud([(5, 0.5, 0.0, 0.0)])
        m = match_map(src, dst)
        assert m.get(1) == 5 and m.get(2) == 5

    def test_symmetric_distance_property(self):
        src = random_tree(400, seed=35, span=60.0)
        dst = random_tree(400, seed=36, span=60.0)
        fwd = match_map(src, dst)
        back = match_map(dst, src)
        for sid in src.ids:
            did = fwd.get(int(sid))
            if did is not None:
                # the matched target must itself have some match in src
                assert back.get(int(did)) is not None

    def test_get_unknown_id(self):
        r = random_tree(5, seed=3)
        with pytest.raises(KeyError):
            match_map(r, r).get(999)

    def test_json_schema(self, tmp_path):
        src = _cloud([(1, 0.0, 0.0, 0.0), (2, 50.0, 0.0, 0.0)], neuron_id=3, label="w")
        dst = _cloud([(4, 1.0, 0.0, 0.0)], neuron_id=3, label="c")
        m = match_map(src, dst)
        path = tmp_path / "m.json"
        m.write_json(path)
        obj = json.loads(path.read_text())
        assert set(obj) == {"source", "target", "threshold", "entries"}
        assert obj["source"] == "3/w" and obj["target"] == "3/c"
        assert obj["threshold"] == DEFAULT_THRESHOLD
        assert obj["entries"][0] == {
            "src_id": 1, "dst_id": 4, "distance": 1.0,
        }
        assert obj["entries"][1] == {
            "src_id": 2, "dst_id": None, "distance": None,
        }

    def test_entries_ordered_by_source_id(self):
        src = _cloud([(9, 0.0, 0.0, 0.0), (2, 1.0, 0.0, 0.0), (5, 2.0, 0.0, 0.0)])
        dst = _cloud([(1, 0.0, 0.0, 0.0)])
        m = match_map(src, dst)
        assert list(m.src_ids) == [2, 5, 9]


class TestMatchConfig:
    def test_default_threshold_is_four(self):
        assert MatchConfig().threshold == 4.0

    def test_rejects_non_positive(self):
        for bad in (0.0, -1.0):
            with pytest.raises(ValueError):
                MatchConfig(threshold=bad)
