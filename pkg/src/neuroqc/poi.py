"""Locating the points where wrong tracing begins.

A point of a wrong reconstruction is a POI when (1) it has a match in the
correct reconstruction and (2) one of its children has no match in the
correct reconstruction (a wrongly traced branch starts here), or one of its
match's children has no match in the wrong reconstruction (a true branch was
missed here). POIs carry label 1; their match points are the aligned label-0
controls.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .matching import MatchConfig, match_map
from .swc import NeuronReconstruction

REASON_WRONG_CHILD = "wrong_child"
REASON_MISSING_CHILD = "missing_child"
REASON_BOTH = "both"


@dataclass
class PoiLabelSet:
    """POIs of a wrong reconstruction with their aligned control points."""

    wrong: str
    correct: str
    threshold: float
    pois: list[int]
    controls: list[int]
    reasons: list[str]

    def __post_init__(self):
        if not (len(self.pois) == len(self.controls) == len(self.reasons)):
            raise ValueError("pois, controls and reasons must align")
        if len(set(self.pois)) != len(self.pois):
            raise ValueError("duplicate POI ids")

    def __len__(self) -> int:
        return len(self.pois)

    def pairs(self) -> list[tuple[int, int, str]]:
        return list(zip(self.pois, self.controls, self.reasons))

    def to_json_obj(self) -> dict:
        return {
            "wrong": self.wrong,
            "correct": self.correct,
            "threshold": self.threshold,
            "pairs": [
                {"poi_id": p, "control_id": c, "reason": r}
                for p, c, r in self.pairs()
            ],
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_obj(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def from_json_obj(cls, obj: dict) -> "PoiLabelSet":
        pairs = obj["pairs"]
        return cls(
            wrong=obj["wrong"],
            correct=obj["correct"],
            threshold=obj["threshold"],
            pois=[p["poi_id"] for p in pairs],
            controls=[p["control_id"] for p in pairs],
            reasons=[p["reason"] for p in pairs],
        )

    @classmethod
    def read_json(cls, path) -> "PoiLabelSet":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_obj(json.load(fh))


def label_pois(
    wrong: NeuronReconstruction,
    correct: NeuronReconstruction,
    cfg: MatchConfig = MatchConfig(),
    workers: int = 1,
) -> PoiLabelSet:
    """Identify POIs of `wrong` against `correct`; output sorted by POI id."""
    if wrong.neuron_id != correct.neuron_id:
        raise DataError(
            f"wrong and correct reconstructions belong to different neurons "
            f"({wrong.neuron_id} vs {correct.neuron_id})"
        )
    to_correct = match_map(wrong, correct, cfg, workers=workers)
    to_wrong = match_map(correct, wrong, cfg, workers=workers)
    unmatched_in_correct = to_correct.unmatched_ids()
    unmatched_in_wrong = to_wrong.unmatched_ids()

    pois: list[int] = []
    controls: list[int] = []
    reasons: list[str] = []
    for wrong_id in sorted(int(i) for i in wrong.ids):
        match_id = to_correct.get(wrong_id)
        if match_id is None:
            continue
        wrong_child = any(
            c in unmatched_in_correct for c in wrong.children_of(wrong_id)
        )
        missing_child = any(
            c in unmatched_in_wrong for c in correct.children_of(match_id)
        )
        if not (wrong_child or missing_child):
            continue
        pois.append(wrong_id)
        controls.append(match_id)
        if wrong_child and missing_child:
            reasons.append(REASON_BOTH)
        elif wrong_child:
            reasons.append(REASON_WRONG_CHILD)
        else:
            reasons.append(REASON_MISSING_CHILD)
    return PoiLabelSet(
        wrong=wrong.key,
        correct=correct.key,
        threshold=cfg.threshold,
        pois=pois,
        controls=controls,
        reasons=reasons,
    )


PointRef = tuple[str, int]  # (reconstruction key, point id)


def sample_controls(
    corpus: list[NeuronReconstruction],
    n: int,
    exclude: set[PointRef] | None = None,
    seed: int = 0,
) -> list[PointRef]:
    """Draw `n` points uniformly without replacement from correct corpora.

    The candidate pool is the union of all points of the given
    reconstructions minus `exclude`; the draw is deterministic for a given
    seed.
    """
    exclude = exclude or set()
    pool: list[PointRef] = []
    for recon in corpus:
        key = recon.key
        for pid in recon.ids:
            ref = (key, int(pid))
            if ref not in exclude:
                pool.append(ref)
    if n > len(pool):
        raise DataError(
            f"requested {n} control points but only {len(pool)} are available"
        )
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(pool), size=n, replace=False)
    return [pool[int(i)] for i in picked]
