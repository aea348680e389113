"""SWC reconstruction model: parsing, validation, serialization, tree access.

SWC is a line-oriented text format; each data line holds seven
whitespace-separated fields: id, type, x, y, z, radius, parent (-1 for a
root). Lines starting with '#' are comments. Extra trailing fields are
ignored. Coordinates are interpreted as voxel coordinates of the associated
volume.

Reconstructions are immutable after parsing and safe to share between
threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import SwcParseError, SwcValidationError

# Common SWC structure codes. Anything else is preserved verbatim.
SOMA = 1
AXON = 2
DENDRITE = 3

_KIND_NAMES = {SOMA: "soma", AXON: "axon", DENDRITE: "dendrite"}

ROOT_PARENT = -1


def kind_name(code: int) -> str:
    """Human-readable name for an SWC type code ('other' for unknown codes)."""
    return _KIND_NAMES.get(code, "other")


@dataclass(frozen=True, slots=True)
class NeuronPoint:
    """One traced point: identity, type code, position, radius, parent link."""

    id: int
    kind: int
    x: float
    y: float
    z: float
    radius: float
    parent: int | None

    @property
    def coords(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


class NeuronReconstruction:
    """A validated reconstruction: points in file order plus tree indexes.

    Point data is stored in parallel numpy arrays (`ids`, `kinds`, `xyz`,
    `radii`, `parents`) so spatial code can operate on them directly;
    `point(id)` materializes a single :class:`NeuronPoint` view.
    """

    def __init__(
        self,
        neuron_id: int,
        label: str,
        ids: np.ndarray,
        kinds: np.ndarray,
        xyz: np.ndarray,
        radii: np.ndarray,
        parents: np.ndarray,
    ):
        self.neuron_id = int(neuron_id)
        self.label = label
        self.ids = np.ascontiguousarray(ids, dtype=np.int64)
        self.kinds = np.ascontiguousarray(kinds, dtype=np.int64)
        self.xyz = np.ascontiguousarray(xyz, dtype=np.float64)
        self.radii = np.ascontiguousarray(radii, dtype=np.float64)
        self.parents = np.ascontiguousarray(parents, dtype=np.int64)
        self._validate()
        self._row_of = {int(i): r for r, i in enumerate(self.ids)}
        self.child_index: dict[int, list[int]] = {int(i): [] for i in self.ids}
        for i, p in zip(self.ids, self.parents):
            if p != ROOT_PARENT:
                self.child_index[int(p)].append(int(i))
        for kids in self.child_index.values():
            kids.sort()
        for arr in (self.ids, self.kinds, self.xyz, self.radii, self.parents):
            arr.setflags(write=False)

    @classmethod
    def from_points(
        cls, points: Iterable[NeuronPoint], neuron_id: int = 0, label: str = ""
    ) -> "NeuronReconstruction":
        pts = list(points)
        n = len(pts)
        ids = np.array([p.id for p in pts], dtype=np.int64)
        kinds = np.array([p.kind for p in pts], dtype=np.int64)
        xyz = np.array([[p.x, p.y, p.z] for p in pts], dtype=np.float64).reshape(n, 3)
        radii = np.array([p.radius for p in pts], dtype=np.float64)
        parents = np.array(
            [ROOT_PARENT if p.parent is None else p.parent for p in pts],
            dtype=np.int64,
        )
        return cls(neuron_id, label, ids, kinds, xyz, radii, parents)

    def _validate(self) -> None:
        n = len(self.ids)
        if n == 0:
            raise SwcValidationError("empty reconstruction (no root point)")
        if np.any(self.ids <= 0):
            bad = int(self.ids[self.ids <= 0][0])
            raise SwcValidationError(f"non-positive point id {bad}")
        if np.any(self.radii <= 0):
            bad = int(self.ids[self.radii <= 0][0])
            raise SwcValidationError(f"non-positive radius at point {bad}")
        uniq, counts = np.unique(self.ids, return_counts=True)
        if len(uniq) != n:
            dup = int(uniq[counts > 1][0])
            raise SwcValidationError(f"duplicate point id {dup}")
        id_set = set(int(i) for i in self.ids)
        for i, p in zip(self.ids, self.parents):
            if p == ROOT_PARENT:
                continue
            if int(p) == int(i):
                raise SwcValidationError(f"point {int(i)} is its own parent")
            if int(p) not in id_set:
                raise SwcValidationError(
                    f"point {int(i)} references missing parent {int(p)}"
                )
        if not np.any(self.parents == ROOT_PARENT):
            raise SwcValidationError("no root point (every point has a parent)")
        self._check_acyclic()

    def _check_acyclic(self) -> None:
        parent_of = {
            int(i): int(p) for i, p in zip(self.ids, self.parents) if p != ROOT_PARENT
        }
        cleared: set[int] = set()
        for start in parent_of:
            path: list[int] = []
            on_path: set[int] = set()
            node = start
            while node in parent_of and node not in cleared:
                if node in on_path:
                    raise SwcValidationError(f"parent cycle through point {node}")
                on_path.add(node)
                path.append(node)
                node = parent_of[node]
            cleared.update(path)

    # -- accessors ---------------------------------------------------------

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self) -> Iterator[NeuronPoint]:
        for row in range(len(self.ids)):
            yield self._point_at(row)

    def _point_at(self, row: int) -> NeuronPoint:
        parent = int(self.parents[row])
        return NeuronPoint(
            id=int(self.ids[row]),
            kind=int(self.kinds[row]),
            x=float(self.xyz[row, 0]),
            y=float(self.xyz[row, 1]),
            z=float(self.xyz[row, 2]),
            radius=float(self.radii[row]),
            parent=None if parent == ROOT_PARENT else parent,
        )

    def __contains__(self, point_id: int) -> bool:
        return int(point_id) in self._row_of

    def row_of(self, point_id: int) -> int:
        return self._row_of[int(point_id)]

    def point(self, point_id: int) -> NeuronPoint:
        if int(point_id) not in self._row_of:
            raise KeyError(f"unknown point id {point_id}")
        return self._point_at(self._row_of[int(point_id)])

    def children_of(self, point_id: int) -> list[int]:
        if int(point_id) not in self.child_index:
            raise KeyError(f"unknown point id {point_id}")
        return list(self.child_index[int(point_id)])

    @property
    def roots(self) -> list[int]:
        return [int(i) for i, p in zip(self.ids, self.parents) if p == ROOT_PARENT]

    def subtree_ids(self, point_id: int) -> list[int]:
        """Ids of the subtree rooted at `point_id` (inclusive), BFS order."""
        if int(point_id) not in self._row_of:
            raise KeyError(f"unknown point id {point_id}")
        out = []
        queue = [int(point_id)]
        while queue:
            node = queue.pop(0)
            out.append(node)
            queue.extend(self.child_index[node])
        return out

    @property
    def key(self) -> str:
        """Stable textual identifier: '<neuron_id>/<label>'."""
        return f"{self.neuron_id}/{self.label}"

    @property
    def uid(self) -> int:
        """Stable unsigned 64-bit identifier derived from `key` (FNV-1a)."""
        return fnv1a64(self.key)


def fnv1a64(text: str) -> int:
    """FNV-1a 64-bit hash of a UTF-8 string; platform independent."""
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def parse_swc(text: str, neuron_id: int = 0, label: str = "") -> NeuronReconstruction:
    """Parse SWC text into a validated reconstruction.

    Raises :class:`SwcParseError` (with a line number) for malformed lines and
    :class:`SwcValidationError` for structural problems (duplicate ids,
    dangling or self parents, cycles, non-positive radii, no root).
    """
    ids: list[int] = []
    kinds: list[int] = []
    coords: list[tuple[float, float, float]] = []
    radii: list[float] = []
    parents: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) < 7:
            raise SwcParseError(
                f"expected at least 7 fields, got {len(fields)}", lineno
            )
        try:
            pid = int(fields[0])
            kind = int(fields[1])
            x, y, z = float(fields[2]), float(fields[3]), float(fields[4])
            radius = float(fields[5])
            parent = int(fields[6])
        except ValueError as exc:
            raise SwcParseError(f"non-numeric field ({exc})", lineno) from None
        ids.append(pid)
        kinds.append(kind)
        coords.append((x, y, z))
        radii.append(radius)
        parents.append(parent)
    n = len(ids)
    return NeuronReconstruction(
        neuron_id,
        label,
        np.array(ids, dtype=np.int64),
        np.array(kinds, dtype=np.int64),
        np.array(coords, dtype=np.float64).reshape(n, 3),
        np.array(radii, dtype=np.float64),
        np.array(parents, dtype=np.int64),
    )


def serialize_swc(r: NeuronReconstruction) -> str:
    """Render a reconstruction as SWC text (one data line per point).

    Coordinates and radii are printed with six decimal places, so a
    parse/serialize round trip preserves topology exactly and coordinates to
    within 1e-5.
    """
    lines = []
    for row in range(len(r)):
        x, y, z = r.xyz[row]
        lines.append(
            f"{int(r.ids[row])} {int(r.kinds[row])} "
            f"{x:.6f} {y:.6f} {z:.6f} {r.radii[row]:.6f} {int(r.parents[row])}"
        )
    return "\n".join(lines) + "\n"


def children(r: NeuronReconstruction, point_id: int) -> list[NeuronPoint]:
    """All points whose parent is `point_id`, in id order."""
    return [r.point(i) for i in r.children_of(point_id)]


def load_swc(path, neuron_id: int = 0, label: str = "") -> NeuronReconstruction:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_swc(fh.read(), neuron_id=neuron_id, label=label)


def save_swc(r: NeuronReconstruction, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_swc(r))
