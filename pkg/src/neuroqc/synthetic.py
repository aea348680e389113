"""Synthetic neurons, rendered volumes, and reconstruction-error injection.

Everything here exists to validate the labeling pipeline end to end at
desk scale. Error injection edits a copy of a correct reconstruction
(truncating a subtree, grafting a branch borrowed from a neighboring
neuron at the neighbor's own coordinates, or appending a walk into empty
background) and returns ground truth computed by direct application of
the two-condition point-of-interest definition against the original, in
code that shares nothing with the production labeling path.

All randomness is driven by explicit seeds; per-neuron streams derive
from (seed, neuron index) so corpus generation is order independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.spatial import cKDTree

from .errors import DataError
from .matching import DEFAULT_THRESHOLD
from .poi import (
    REASON_BOTH,
    REASON_MISSING_CHILD,
    REASON_WRONG_CHILD,
    PoiLabelSet,
)
from .swc import DENDRITE, SOMA, NeuronPoint, NeuronReconstruction
from .volume import Volume, rasterize

ERROR_KINDS = ("truncate_subtree", "graft_foreign_branch", "background_leak")
MIXED = "mixed"


@dataclass(frozen=True)
class SynthParams:
    """Knobs for tree growth and volume rendering.

    `dims` is (nx, ny, nz). `spacing` is the step length between
    consecutive traced points; keep it above the match threshold so a
    single deleted point is already unmatchable.
    """

    dims: tuple[int, int, int] = (160, 160, 160)
    spacing: float = 5.0
    branch_prob: float = 0.04
    mean_branch_len: float = 25.0
    n_points: int = 220
    amplitude: float = 1800.0
    blur: float = 1.2
    noise_mean: float = 120.0
    noise_std: float = 12.0
    seed: int = 0

    def __post_init__(self):
        if any(int(d) <= 0 for d in self.dims):
            raise ValueError(f"volume dims must be positive, got {self.dims}")
        if self.spacing <= 0:
            raise ValueError("point spacing must be positive")
        if self.spacing >= min(self.dims):
            raise ValueError("point spacing must be smaller than the volume")
        if not 0.0 <= self.branch_prob <= 1.0:
            raise ValueError("branch probability must lie in [0, 1]")
        if self.mean_branch_len <= 0:
            raise ValueError("mean branch length must be positive")
        if self.n_points < 2:
            raise ValueError("need at least 2 points per neuron")
        if self.amplitude <= 0:
            raise ValueError("tube amplitude must be positive")
        if self.blur < 0 or self.noise_mean < 0 or self.noise_std < 0:
            raise ValueError("blur and noise parameters must be non-negative")


@dataclass(frozen=True)
class ErrorSpec:
    """What to inject: kind, how many, and the clearance for new points.

    `min_displacement` must exceed the match threshold so grafted and
    leaked points are guaranteed unmatched. Kind `mixed` draws one of the
    three kinds per injection.
    """

    kind: str = MIXED
    count: int = 1
    min_displacement: float = 6.0
    threshold: float = DEFAULT_THRESHOLD
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ERROR_KINDS + (MIXED,):
            raise ValueError(f"unknown error kind '{self.kind}'")
        if self.count < 0:
            raise ValueError("error count must be non-negative")
        if self.min_displacement <= self.threshold:
            raise ValueError(
                f"minimum displacement {self.min_displacement} must exceed "
                f"the match threshold {self.threshold}"
            )


def _unit(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    return v / n if n > 0 else np.array([1.0, 0.0, 0.0])


def generate_neuron(
    params: SynthParams,
    seed,
    neuron_id: int = 0,
    label: str = "correct",
    center: np.ndarray | None = None,
) -> NeuronReconstruction:
    """Grow a random rooted tree inside the volume bounds.

    Fixed-length steps of `params.spacing`, direction a perturbed random
    walk reflected at the bounds; each new point spawns a side branch
    with probability `params.branch_prob`. Deterministic given `seed`.
    """
    rng = np.random.default_rng(seed)
    dims = np.asarray(params.dims, dtype=np.float64)
    margin = max(2.0, params.spacing)
    lo, hi = np.full(3, margin), dims - 1.0 - margin
    if np.any(lo >= hi):
        raise ValueError("volume too small for the configured spacing")

    if center is None:
        root = rng.uniform(lo, hi)
    else:
        root = np.clip(np.asarray(center, dtype=np.float64), lo, hi)
    positions = [root]
    parents = [-1]

    def branch_len() -> int:
        return max(2, int(rng.geometric(1.0 / params.mean_branch_len)))

    pending: list[tuple[int, np.ndarray]] = []  # (parent row, direction)
    row, direction, remaining = 0, _unit(rng.normal(size=3)), branch_len()
    while len(positions) < params.n_points:
        if remaining == 0:
            if pending:
                row, direction = pending.pop()
            # No side branches queued: keep extending the current tip, so
            # branch_prob 0 yields one unbranched path.
            remaining = branch_len()
            continue
        d = _unit(direction + rng.normal(scale=0.35, size=3))
        cand = positions[row] + d * params.spacing
        for ax in range(3):
            if cand[ax] < lo[ax] or cand[ax] > hi[ax]:
                d[ax] = -d[ax]
        cand = np.clip(positions[row] + d * params.spacing, lo, hi)
        positions.append(cand)
        parents.append(row)
        row, direction = len(positions) - 1, d
        remaining -= 1
        if rng.random() < params.branch_prob:
            pending.append((row, _unit(d + rng.normal(scale=1.0, size=3))))

    points = [
        NeuronPoint(
            id=i + 1,
            kind=SOMA if parents[i] == -1 else DENDRITE,
            x=float(positions[i][0]),
            y=float(positions[i][1]),
            z=float(positions[i][2]),
            radius=1.0,
            parent=None if parents[i] == -1 else parents[i] + 1,
        )
        for i in range(len(positions))
    ]
    return NeuronReconstruction.from_points(points, neuron_id=neuron_id, label=label)


def generate_corpus(
    params: SynthParams, n_neurons: int, first_id: int = 1
) -> list[NeuronReconstruction]:
    """Independent per-neuron streams: seed (params.seed, neuron index)."""
    return [
        generate_neuron(params, seed=[params.seed, i], neuron_id=first_id + i)
        for i in range(n_neurons)
    ]


def render_volume(
    neurons: list[NeuronReconstruction],
    params: SynthParams,
    seed,
    volume_id: str = "",
) -> Volume:
    """Blurred tube intensity plus Gaussian background noise, u16."""
    nx, ny, nz = params.dims
    canvas = Volume(np.zeros((nz, ny, nx), dtype=np.uint16), volume_id=volume_id)
    binary = np.zeros((nz, ny, nx), dtype=np.uint8)
    for n in neurons:
        binary |= rasterize(n, canvas)
    img = binary.astype(np.float32) * np.float32(params.amplitude)
    if params.blur > 0:
        img = gaussian_filter(img, sigma=params.blur)
    rng = np.random.default_rng(seed)
    img = img + rng.normal(params.noise_mean, params.noise_std, size=img.shape)
    voxels = np.clip(img, 0, 65535).astype(np.uint16)
    return Volume(voxels, origin=(0, 0, 0), volume_id=volume_id)


# -- error injection -------------------------------------------------------


class _TreeEditor:
    """Mutable point soup for error injection; ids stay stable."""

    def __init__(self, r: NeuronReconstruction):
        self.points: dict[int, NeuronPoint] = {p.id: p for p in r}
        self.original_ids = set(self.points)
        self.next_id = int(r.ids.max()) + 1

    def children(self, pid: int) -> list[int]:
        return sorted(p.id for p in self.points.values() if p.parent == pid)

    def subtree(self, pid: int) -> list[int]:
        out, queue = [], [pid]
        while queue:
            node = queue.pop()
            out.append(node)
            queue.extend(self.children(node))
        return out

    def delete_subtree(self, pid: int) -> None:
        for node in self.subtree(pid):
            del self.points[node]

    def add(self, pos: np.ndarray, parent: int) -> int:
        pid = self.next_id
        self.next_id += 1
        self.points[pid] = NeuronPoint(
            id=pid, kind=DENDRITE,
            x=float(pos[0]), y=float(pos[1]), z=float(pos[2]),
            radius=1.0, parent=parent,
        )
        return pid

    def surviving_original(self) -> list[int]:
        return sorted(pid for pid in self.points if pid in self.original_ids)

    def to_reconstruction(self, neuron_id: int, label: str) -> NeuronReconstruction:
        return NeuronReconstruction.from_points(
            self.points.values(), neuron_id=neuron_id, label=label
        )


def _truncate(editor: _TreeEditor, rng: np.random.Generator) -> None:
    # keep at least half the tree (and never fewer than two points), so
    # repeated truncations stay meaningful instead of consuming the neuron
    keep = max(2, len(editor.points) // 2)
    candidates = [
        pid
        for pid in editor.surviving_original()
        if editor.points[pid].parent is not None
        and editor.points[pid].parent in editor.original_ids
        and len(editor.points) - len(editor.subtree(pid)) >= keep
    ]
    if not candidates:
        raise DataError("tree too small to truncate a subtree")
    editor.delete_subtree(candidates[int(rng.integers(len(candidates)))])


def _graft(
    editor: _TreeEditor,
    neighbors: list[NeuronReconstruction],
    rng: np.random.Generator,
    spec: ErrorSpec,
    original: NeuronReconstruction,
    max_branch: int = 30,
) -> None:
    if not neighbors:
        raise DataError("no neighbor reconstruction available for grafting")
    clearance = cKDTree(original.xyz)
    attach_pool = editor.surviving_original()
    attach_xyz = np.array(
        [[editor.points[pid].x, editor.points[pid].y, editor.points[pid].z]
         for pid in attach_pool]
    )
    for _ in range(200):
        nb = neighbors[int(rng.integers(len(neighbors)))]
        start = int(nb.ids[int(rng.integers(len(nb)))])
        # follow first children: a simple path is closed under parent
        chain = [start]
        while len(chain) < max_branch:
            kids = nb.children_of(chain[-1])
            if not kids:
                break
            chain.append(kids[0])
        coords = nb.xyz[[nb.row_of(i) for i in chain]]
        dist, _ = clearance.query(coords)
        clear = dist > spec.min_displacement
        n_ok = len(chain) if clear.all() else int(np.argmin(clear))
        if n_ok < 3:
            continue
        coords = coords[:n_ok]
        # bridge from the closest surviving original point
        gaps = np.linalg.norm(attach_xyz - coords[0], axis=1)
        parent = attach_pool[int(np.argmin(gaps))]
        for pos in coords:
            parent = editor.add(pos, parent)
        return
    raise DataError(
        "no neighbor branch clear of the original reconstruction; "
        "cannot graft"
    )


def _leak(
    editor: _TreeEditor,
    rng: np.random.Generator,
    spec: ErrorSpec,
    original: NeuronReconstruction,
    step: float,
    bounds: tuple[int, int, int] | None,
) -> None:
    clearance = cKDTree(original.xyz)
    attach_pool = editor.surviving_original()
    length = int(6 + rng.integers(0, 10))
    if bounds is not None:
        lo = np.full(3, 1.0)
        hi = np.asarray(bounds, dtype=np.float64) - 2.0
    for _ in range(200):
        attach = attach_pool[int(rng.integers(len(attach_pool)))]
        base = editor.points[attach]
        pos = np.array([base.x, base.y, base.z])
        d = _unit(rng.normal(size=3))
        walk = [pos + d * (spec.min_displacement + step)]
        for _ in range(length - 1):
            d = _unit(d + rng.normal(scale=0.25, size=3))
            nxt = walk[-1] + d * step
            if bounds is not None:
                for ax in range(3):
                    if nxt[ax] < lo[ax] or nxt[ax] > hi[ax]:
                        d[ax] = -d[ax]
                nxt = np.clip(walk[-1] + d * step, lo, hi)
            walk.append(nxt)
        dist, _ = clearance.query(np.asarray(walk))
        if float(np.min(dist)) <= spec.min_displacement:
            continue
        parent = attach
        for pos in walk:
            parent = editor.add(pos, parent)
        return
    raise DataError("could not route a background walk clear of the neuron")


def inject_errors(
    r: NeuronReconstruction,
    neighbors: list[NeuronReconstruction],
    spec: ErrorSpec,
    label: str = "wrong",
    step: float = 5.0,
    bounds: tuple[int, int, int] | None = None,
) -> tuple[NeuronReconstruction, PoiLabelSet]:
    """Apply `spec.count` edits to a copy of `r`; return it with ground truth.

    Truth comes from :func:`direct_label` against the unmodified `r`, not
    from bookkeeping during editing, so incidental geometry (an edit
    landing within threshold of surviving points) is labeled correctly.
    """
    rng = np.random.default_rng(spec.seed)
    editor = _TreeEditor(r)
    mixable = [
        k for k in ERROR_KINDS if neighbors or k != "graft_foreign_branch"
    ]
    for _ in range(spec.count):
        kind = spec.kind
        if kind == MIXED:
            kind = mixable[int(rng.integers(len(mixable)))]
        if kind == "truncate_subtree":
            _truncate(editor, rng)
        elif kind == "graft_foreign_branch":
            _graft(editor, neighbors, rng, spec, r)
        else:
            _leak(editor, rng, spec, r, step, bounds)
    wrong = editor.to_reconstruction(r.neuron_id, label)
    truth = direct_label(wrong, r, spec.threshold)
    return wrong, truth


def direct_label(
    wrong: NeuronReconstruction,
    correct: NeuronReconstruction,
    threshold: float = DEFAULT_THRESHOLD,
) -> PoiLabelSet:
    """Ground truth by literal definition, via a full distance matrix.

    Independent of the production labeling path: no spatial index, no
    shared kernels. A point matches the nearest counterpart at squared
    distance strictly below threshold^2, ties to the smallest id; a
    matched point is labeled when one of its children is unmatched
    (wrongly traced branch) or one of its match's children is unmatched
    (missed branch).
    """
    t2 = threshold * threshold
    d2 = ((wrong.xyz[:, None, :] - correct.xyz[None, :, :]) ** 2).sum(axis=2)

    def nearest(row: np.ndarray, ids: np.ndarray) -> int | None:
        best = row.min()
        if not best < t2:
            return None
        return int(ids[row == best].min())

    to_correct = {
        int(wrong.ids[i]): nearest(d2[i], correct.ids) for i in range(len(wrong))
    }
    to_wrong = {
        int(correct.ids[j]): nearest(d2[:, j], wrong.ids)
        for j in range(len(correct))
    }

    pois, controls, reasons = [], [], []
    for wid in sorted(int(i) for i in wrong.ids):
        cid = to_correct[wid]
        if cid is None:
            continue
        wrong_child = any(to_correct[c] is None for c in wrong.children_of(wid))
        missing_child = any(to_wrong[c] is None for c in correct.children_of(cid))
        if not (wrong_child or missing_child):
            continue
        pois.append(wid)
        controls.append(cid)
        reasons.append(
            REASON_BOTH if (wrong_child and missing_child)
            else REASON_WRONG_CHILD if wrong_child
            else REASON_MISSING_CHILD
        )
    return PoiLabelSet(
        wrong=wrong.key,
        correct=correct.key,
        threshold=threshold,
        pois=pois,
        controls=controls,
        reasons=reasons,
    )
