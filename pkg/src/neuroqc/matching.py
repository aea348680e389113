"""Point matching between two reconstructions of the same neuron.

A source point matches a target point when their Euclidean distance is
strictly below the threshold (default 4 voxels). When several target points
qualify, the nearest one wins; exact distance ties resolve to the smallest
target id. The k-d tree fast path and the exhaustive scan produce identical
results; both compare squared distances with the same float64 arithmetic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels
from .errors import DataError
from .swc import NeuronPoint, NeuronReconstruction

_INT64_MAX = np.iinfo(np.int64).max

# Query-radius inflation: the tree prunes with its own distance rounding, so
# fetch a hair beyond the threshold and apply the strict test ourselves.
_BALL_SLACK = 1e-9

DEFAULT_THRESHOLD = 4.0


@dataclass(frozen=True)
class MatchConfig:
    """Distance threshold for the match relation, in voxel units."""

    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValueError(f"threshold must be > 0, got {self.threshold}")


class SpatialIndex:
    """Exact nearest-neighbor / radius queries over a reconstruction."""

    def __init__(self, recon: NeuronReconstruction):
        if len(recon) == 0:
            raise DataError("cannot index an empty reconstruction")
        self.recon = recon
        self.tree = cKDTree(recon.xyz)

    def nearest_within(
        self, query_xyz: np.ndarray, threshold: float, workers: int = 1
    ) -> tuple[np.ndarray, np.ndarray]:
        """Nearest point id within strict `threshold` for each query row.

        Returns (ids, squared distances); id -1 and distance nan mark queries
        with no point strictly inside the threshold. Ties resolve to the
        smallest id.
        """
        q = np.ascontiguousarray(query_xyz, dtype=np.float64).reshape(-1, 3)
        t2 = threshold * threshold
        xyz = self.recon.xyz
        ids = self.recon.ids
        ball = self.tree.query_ball_point(
            q, r=threshold * (1.0 + _BALL_SLACK), workers=workers
        )
        out_id = np.full(q.shape[0], -1, dtype=np.int64)
        out_d2 = np.full(q.shape[0], np.nan, dtype=np.float64)
        for i, cand in enumerate(ball):
            if not cand:
                continue
            rows = np.asarray(cand, dtype=np.intp)
            dx = q[i, 0] - xyz[rows, 0]
            dy = q[i, 1] - xyz[rows, 1]
            dz = q[i, 2] - xyz[rows, 2]
            d2 = dx * dx
            d2 += dy * dy
            d2 += dz * dz
            best = d2.min()
            if best < t2:
                tied = np.where(d2 == best, ids[rows], _INT64_MAX)
                out_id[i] = tied.min()
                out_d2[i] = best
        return out_id, out_d2

    def nearest(self, query_xyz: np.ndarray) -> tuple[int, float]:
        """Globally nearest point id and squared distance (ties: smallest id)."""
        q = np.asarray(query_xyz, dtype=np.float64).reshape(1, 3)
        nn_id, nn_d2 = _kernels.brute_nearest(q, self.recon.xyz, self.recon.ids)
        return int(nn_id[0]), float(nn_d2[0])


@dataclass
class MatchMap:
    """Resolved matches for every source point, ordered by source id."""

    source: str
    target: str
    threshold: float
    src_ids: np.ndarray = field(repr=False)
    dst_ids: np.ndarray = field(repr=False)  # -1 where unmatched
    distances: np.ndarray = field(repr=False)  # nan where unmatched

    def get(self, src_id: int) -> int | None:
        row = np.searchsorted(self.src_ids, src_id)
        if row >= len(self.src_ids) or self.src_ids[row] != src_id:
            raise KeyError(f"unknown source point id {src_id}")
        dst = int(self.dst_ids[row])
        return None if dst < 0 else dst

    def unmatched_ids(self) -> set[int]:
        return set(int(i) for i in self.src_ids[self.dst_ids < 0])

    @property
    def n_matched(self) -> int:
        return int(np.sum(self.dst_ids >= 0))

    def __eq__(self, other) -> bool:
        if not isinstance(other, MatchMap):
            return NotImplemented
        return (
            self.source == other.source
            and self.target == other.target
            and self.threshold == other.threshold
            and np.array_equal(self.src_ids, other.src_ids)
            and np.array_equal(self.dst_ids, other.dst_ids)
            and np.array_equal(self.distances, other.distances, equal_nan=True)
        )

    def to_json_obj(self) -> dict:
        entries = []
        for sid, did, dist in zip(self.src_ids, self.dst_ids, self.distances):
            entries.append(
                {
                    "src_id": int(sid),
                    "dst_id": int(did) if did >= 0 else None,
                    "distance": float(dist) if did >= 0 else None,
                }
            )
        return {
            "source": self.source,
            "target": self.target,
            "threshold": self.threshold,
            "entries": entries,
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_obj(), fh, indent=1)
            fh.write("\n")


def build_spatial_index(r: NeuronReconstruction) -> SpatialIndex:
    """Index a reconstruction's points for exact spatial queries."""
    return SpatialIndex(r)


def find_match(
    p: NeuronPoint, index: SpatialIndex, cfg: MatchConfig = MatchConfig()
) -> NeuronPoint | None:
    """Nearest indexed point strictly closer than the threshold, if any."""
    q = np.array([[p.x, p.y, p.z]])
    ids, _ = index.nearest_within(q, cfg.threshold)
    if ids[0] < 0:
        return None
    return index.recon.point(int(ids[0]))


def _check_pair(src: NeuronReconstruction, dst: NeuronReconstruction) -> None:
    if src.neuron_id != dst.neuron_id:
        raise DataError(
            f"cannot match reconstructions of different neurons "
            f"({src.neuron_id} vs {dst.neuron_id})"
        )
    if len(dst) == 0:
        raise DataError("empty target reconstruction")


def _assemble(src, dst, cfg, order, nn_ids, nn_d2, matched_mask) -> MatchMap:
    dst_ids = np.where(matched_mask, nn_ids, -1)
    distances = np.where(matched_mask, np.sqrt(nn_d2), np.nan)
    return MatchMap(
        source=src.key,
        target=dst.key,
        threshold=cfg.threshold,
        src_ids=src.ids[order],
        dst_ids=dst_ids,
        distances=distances,
    )


def match_map(
    src: NeuronReconstruction,
    dst: NeuronReconstruction,
    cfg: MatchConfig = MatchConfig(),
    workers: int = 1,
) -> MatchMap:
    """Resolve the match of every `src` point in `dst` via the k-d tree."""
    _check_pair(src, dst)
    order = np.argsort(src.ids, kind="stable")
    index = SpatialIndex(dst)
    nn_ids, nn_d2 = index.nearest_within(src.xyz[order], cfg.threshold, workers=workers)
    return _assemble(src, dst, cfg, order, nn_ids, nn_d2, nn_ids >= 0)


def match_map_brute(
    src: NeuronReconstruction,
    dst: NeuronReconstruction,
    cfg: MatchConfig = MatchConfig(),
) -> MatchMap:
    """Exhaustive-scan counterpart of :func:`match_map` (oracle path)."""
    _check_pair(src, dst)
    order = np.argsort(src.ids, kind="stable")
    nn_ids, nn_d2 = _kernels.brute_nearest(src.xyz[order], dst.xyz, dst.ids)
    t2 = cfg.threshold * cfg.threshold
    return _assemble(src, dst, cfg, order, nn_ids, nn_d2, nn_d2 < t2)


def euclidean(a: NeuronPoint, b: NeuronPoint) -> float:
    dx, dy, dz = a.x - b.x, a.y - b.y, a.z - b.z
    return math.sqrt(dx * dx + dy * dy + dz * dz)
