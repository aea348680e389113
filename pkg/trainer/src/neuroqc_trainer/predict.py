"""Scoring test-fold records into the CSV format the QC tools evaluate."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
from torch import nn

from .data import GROUP_MATCH, GROUP_POI, PatchDataset, TrainerDataError
from .train import _positive_scores

CSV_HEADER = ["record_index", "neuron_id", "point_id", "fold", "label", "score"]


def predict_fold(
    model: nn.Module,
    data: PatchDataset,
    folds: dict[int, int],
    fold: int,
    groups: tuple[int, ...] = (GROUP_POI, GROUP_MATCH),
    batch_size: int = 15,
) -> list[tuple]:
    """Score every test-fold record in the given groups.

    Returns one row per record: (record index, neuron id, point id, fold,
    label, positive-class probability).
    """
    folds = {int(n): int(f) for n, f in folds.items()}
    ds_neurons = {int(n) for n in np.unique(data.neuron_ids)}
    missing = sorted(ds_neurons - folds.keys())
    if missing:
        raise TrainerDataError(
            f"dataset neurons missing from the fold assignment: {missing[:10]}"
        )
    test_neurons = sorted(n for n in ds_neurons if folds[n] == fold)
    mask = np.isin(data.neuron_ids, test_neurons) & np.isin(data.groups, groups)
    indices = np.flatnonzero(mask)
    if not len(indices):
        raise TrainerDataError(
            f"no records in fold {fold} for groups {sorted(groups)}"
        )
    scores = _positive_scores(model, data, indices, batch_size=batch_size)
    return [
        (
            int(i),
            int(data.neuron_ids[i]),
            int(data.point_ids[i]),
            fold,
            int(data.labels[i]),
            float(s),
        )
        for i, s in zip(indices, scores)
    ]


def write_scores_csv(rows, path) -> None:
    """Write rows in the evaluation CSV layout; floats keep full precision."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow(list(row[:5]) + [repr(float(row[5]))])
