"""On-disk corpus layout and its manifest.

A corpus directory holds neurons with their reconstructions and shared
volumes, described by a single `manifest.json`:

    {"version": 1, "units": "voxels", "seed": ..., "threshold": ...,
     "params": {...},
     "volumes": [{"id": "vol_000", "path": "volumes/vol_000.json",
                  "neurons": [1, 2, 3, 4]}],
     "neurons": [{"neuron_id": 1, "volume": "vol_000",
                  "correct": "neuron_001/correct.swc",
                  "wrong": [{"label": "wrong_1",
                             "swc": "neuron_001/wrong_1.swc",
                             "truth": "neuron_001/truth_1.json"}]}]}

All paths are relative to the manifest's directory; coordinates, spacings
and thresholds are in voxel units. Synthetic generation groups neurons
into shared volumes so grafting errors can borrow branches from a real
neighbor in the same image.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .poi import PoiLabelSet
from .swc import NeuronReconstruction, load_swc, save_swc
from .synthetic import (
    ErrorSpec,
    SynthParams,
    generate_neuron,
    inject_errors,
    render_volume,
)
from .volume import Volume, load_volume, save_volume

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


@dataclass
class WrongEntry:
    label: str
    swc: str
    truth: str


@dataclass
class CorpusNeuron:
    neuron_id: int
    volume: str
    correct: str
    wrong: list[WrongEntry] = field(default_factory=list)


@dataclass
class CorpusManifest:
    """Parsed manifest plus the directory it lives in."""

    root: Path
    seed: int
    threshold: float
    params: dict
    volumes: dict[str, dict]  # id -> {"path", "neurons"}
    neurons: list[CorpusNeuron]

    @classmethod
    def load(cls, path) -> "CorpusManifest":
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        try:
            with open(path, "r", encoding="utf-8") as fh:
                obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not valid JSON ({exc})")
        if obj.get("version") != 1:
            raise DataError(f"{path}: unsupported manifest version")
        neurons = [
            CorpusNeuron(
                neuron_id=int(n["neuron_id"]),
                volume=n["volume"],
                correct=n["correct"],
                wrong=[WrongEntry(**w) for w in n.get("wrong", [])],
            )
            for n in obj.get("neurons", [])
        ]
        volumes = {v["id"]: v for v in obj.get("volumes", [])}
        for n in neurons:
            if n.volume not in volumes:
                raise DataError(
                    f"{path}: neuron {n.neuron_id} references unknown "
                    f"volume '{n.volume}'"
                )
        return cls(
            root=path.parent,
            seed=int(obj.get("seed", 0)),
            threshold=float(obj.get("threshold", 4.0)),
            params=obj.get("params", {}),
            volumes=volumes,
            neurons=neurons,
        )

    def neuron_ids(self) -> list[int]:
        return [n.neuron_id for n in self.neurons]

    def entry(self, neuron_id: int) -> CorpusNeuron:
        for n in self.neurons:
            if n.neuron_id == neuron_id:
                return n
        raise DataError(f"neuron {neuron_id} not in manifest")

    def load_correct(self, n: CorpusNeuron) -> NeuronReconstruction:
        return load_swc(
            self.root / n.correct, neuron_id=n.neuron_id, label="correct"
        )

    def load_wrong(self, n: CorpusNeuron, w: WrongEntry) -> NeuronReconstruction:
        return load_swc(self.root / w.swc, neuron_id=n.neuron_id, label=w.label)

    def load_truth(self, w: WrongEntry) -> PoiLabelSet:
        return PoiLabelSet.read_json(self.root / w.truth)

    def load_volume_by_id(self, volume_id: str) -> Volume:
        return load_volume(self.root / self.volumes[volume_id]["path"])

    def load_volumes(self) -> dict[int, Volume]:
        """Volume per neuron id; shared grids loaded once."""
        cache: dict[str, Volume] = {}
        out: dict[int, Volume] = {}
        for n in self.neurons:
            if n.volume not in cache:
                cache[n.volume] = self.load_volume_by_id(n.volume)
            out[n.neuron_id] = cache[n.volume]
        return out


def generate_corpus_dir(
    out_dir,
    n_neurons: int,
    params: SynthParams,
    threshold: float = 4.0,
    group_size: int = 4,
    errors_per_wrong: int = 2,
    wrong_min: int = 1,
    wrong_max: int = 2,
) -> CorpusManifest:
    """Build a synthetic corpus on disk; byte-stable for a given seed.

    Neurons are generated in groups of `group_size` sharing one rendered
    volume; each neuron gets `wrong_min`..`wrong_max` wrong
    reconstructions with mixed injected errors and a truth labelset.
    """
    if n_neurons < 1:
        raise ValueError("need at least one neuron")
    if not 1 <= wrong_min <= wrong_max:
        raise ValueError("wrong-reconstruction counts must satisfy 1 <= min <= max")
    if group_size < 1:
        raise ValueError("group size must be positive")
    out = Path(out_dir)
    (out / "volumes").mkdir(parents=True, exist_ok=True)

    seed = params.seed
    neurons_meta = []
    volumes_meta = []
    for g_start in range(0, n_neurons, group_size):
        members = list(range(g_start, min(g_start + group_size, n_neurons)))
        vol_id = f"vol_{g_start // group_size:03d}"
        recons = [
            generate_neuron(params, seed=[seed, i], neuron_id=i + 1)
            for i in members
        ]
        vol = render_volume(recons, params, seed=[seed, 90000 + g_start], volume_id=vol_id)
        save_volume(vol, out / "volumes" / f"{vol_id}.raw")
        volumes_meta.append(
            {
                "id": vol_id,
                "path": f"volumes/{vol_id}.json",
                "neurons": [i + 1 for i in members],
            }
        )
        for idx, i in enumerate(members):
            correct = recons[idx]
            ndir = f"neuron_{i + 1:03d}"
            (out / ndir).mkdir(exist_ok=True)
            save_swc(correct, out / ndir / "correct.swc")
            neighbors = [r for r in recons if r.neuron_id != correct.neuron_id]
            n_wrong = int(
                np.random.default_rng([seed, 70000 + i]).integers(
                    wrong_min, wrong_max + 1
                )
            )
            wrong_meta = []
            for w in range(1, n_wrong + 1):
                label = f"wrong_{w}"
                spec = ErrorSpec(
                    kind="mixed",
                    count=errors_per_wrong,
                    min_displacement=threshold + 2.0,
                    threshold=threshold,
                    seed=[seed, 80000 + i, w],
                )
                wrong, truth = inject_errors(
                    correct,
                    neighbors,
                    spec,
                    label=label,
                    step=params.spacing,
                    bounds=params.dims,
                )
                save_swc(wrong, out / ndir / f"{label}.swc")
                truth.write_json(out / ndir / f"truth_{w}.json")
                wrong_meta.append(
                    {
                        "label": label,
                        "swc": f"{ndir}/{label}.swc",
                        "truth": f"{ndir}/truth_{w}.json",
                    }
                )
            neurons_meta.append(
                {
                    "neuron_id": i + 1,
                    "volume": vol_id,
                    "correct": f"{ndir}/correct.swc",
                    "wrong": wrong_meta,
                }
            )
    manifest_obj = {
        "version": 1,
        "units": "voxels",
        "seed": seed,
        "threshold": threshold,
        "params": dataclasses.asdict(params),
        "volumes": volumes_meta,
        "neurons": neurons_meta,
    }
    with open(out / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(manifest_obj, fh, indent=1)
        fh.write("\n")
    logger.info(
        "wrote corpus: %d neurons, %d volumes at %s",
        n_neurons, len(volumes_meta), out,
    )
    return CorpusManifest.load(out / MANIFEST_NAME)
