"""Classifier evaluation: ROC AUC, thresholded counts, per-fold reports.

Scores travel as CSV tables with the header
``record_index,neuron_id,point_id,fold,label,score``. Reports carry
per-fold values plus unweighted mean and population standard deviation
across folds, rendered as "mean±std" percentages with one decimal.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import DataError

logger = logging.getLogger(__name__)

CSV_HEADER = ["record_index", "neuron_id", "point_id", "fold", "label", "score"]

METRIC_NAMES = ("auc", "accuracy", "sensitivity", "specificity", "precision")

DEFAULT_THRESHOLD = 0.5


@dataclass
class ScoreTable:
    """Per-point classifier scores with fold assignment and true label."""

    record_index: np.ndarray
    neuron_id: np.ndarray
    point_id: np.ndarray
    fold: np.ndarray
    label: np.ndarray
    score: np.ndarray

    def __post_init__(self):
        n = len(self.record_index)
        for name in ("record_index", "neuron_id", "point_id", "fold", "label"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            if len(arr) != n:
                raise DataError(f"score table column '{name}' has wrong length")
            setattr(self, name, arr)
        self.score = np.asarray(self.score, dtype=np.float64)
        if len(self.score) != n:
            raise DataError("score table column 'score' has wrong length")
        if n and (self.score.min() < 0.0 or self.score.max() > 1.0):
            raise DataError("scores must lie in [0, 1]")
        bad = set(np.unique(self.label)) - {0, 1}
        if bad:
            raise DataError(f"labels must be 0 or 1, found {sorted(bad)}")
        if n and self.fold.min() < 0:
            raise DataError("fold indices must be non-negative")

    def __len__(self) -> int:
        return len(self.record_index)

    def folds(self) -> list[int]:
        return sorted(int(f) for f in np.unique(self.fold))

    def subset(self, mask: np.ndarray) -> "ScoreTable":
        return ScoreTable(
            record_index=self.record_index[mask],
            neuron_id=self.neuron_id[mask],
            point_id=self.point_id[mask],
            fold=self.fold[mask],
            label=self.label[mask],
            score=self.score[mask],
        )

    @classmethod
    def from_rows(cls, rows) -> "ScoreTable":
        cols = list(zip(*rows)) if rows else [[]] * 6
        return cls(
            record_index=np.array(cols[0], dtype=np.int64),
            neuron_id=np.array(cols[1], dtype=np.int64),
            point_id=np.array(cols[2], dtype=np.int64),
            fold=np.array(cols[3], dtype=np.int64),
            label=np.array(cols[4], dtype=np.int64),
            score=np.array(cols[5], dtype=np.float64),
        )

    def rows(self):
        for i in range(len(self)):
            yield (
                int(self.record_index[i]),
                int(self.neuron_id[i]),
                int(self.point_id[i]),
                int(self.fold[i]),
                int(self.label[i]),
                float(self.score[i]),
            )

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for row in self.rows():
                # repr() keeps the shortest digits that round-trip.
                writer.writerow(list(row[:5]) + [repr(row[5])])

    @classmethod
    def read_csv(cls, path) -> "ScoreTable":
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty scores file")
            if header != CSV_HEADER:
                raise DataError(
                    f"{path}: expected header {','.join(CSV_HEADER)!r}, "
                    f"got {','.join(header)!r}"
                )
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 6:
                    raise DataError(f"{path}:{lineno}: expected 6 fields")
                try:
                    rows.append(
                        (int(row[0]), int(row[1]), int(row[2]),
                         int(row[3]), int(row[4]), float(row[5]))
                    )
                except ValueError as exc:
                    raise DataError(f"{path}:{lineno}: {exc}")
        return cls.from_rows(rows)


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC; tied score pairs contribute one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise DataError("scores and labels must be matching 1-d arrays")
    n_pos = int(np.count_nonzero(labels == 1))
    n_neg = int(np.count_nonzero(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC needs both classes present")
    ranks = rankdata(scores, method="average")
    rank_sum = float(ranks[labels == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass(frozen=True)
class Confusion:
    """Counts at a fixed threshold; ratio properties are None when the
    denominator is zero rather than silently 0."""

    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float | None:
        return (self.tp + self.tn) / self.n if self.n else None

    @property
    def sensitivity(self) -> float | None:
        d = self.tp + self.fn
        return self.tp / d if d else None

    @property
    def specificity(self) -> float | None:
        d = self.tn + self.fp
        return self.tn / d if d else None

    @property
    def precision(self) -> float | None:
        d = self.tp + self.fp
        return self.tp / d if d else None


def confusion_at(scores, labels, threshold: float = DEFAULT_THRESHOLD) -> Confusion:
    """Counts with prediction = 1 iff score >= threshold."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.size == 0:
        raise DataError("confusion counts need at least one row")
    pred = scores >= threshold
    pos = labels == 1
    return Confusion(
        tp=int(np.count_nonzero(pred & pos)),
        fp=int(np.count_nonzero(pred & ~pos)),
        tn=int(np.count_nonzero(~pred & ~pos)),
        fn=int(np.count_nonzero(~pred & pos)),
    )


@dataclass
class FoldMetrics:
    fold: int
    n: int
    auc: float | None
    accuracy: float | None
    sensitivity: float | None
    specificity: float | None
    precision: float | None

    def value(self, name: str) -> float | None:
        return getattr(self, name)


@dataclass
class MetricsReport:
    threshold: float
    folds: list[FoldMetrics]
    aggregate: dict[str, tuple[float, float] | None] = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        def _fold(fm: FoldMetrics) -> dict:
            obj = {"fold": fm.fold, "n": fm.n}
            for name in METRIC_NAMES:
                obj[name] = fm.value(name)
            return obj

        agg = {}
        for name in METRIC_NAMES:
            pair = self.aggregate.get(name)
            agg[name] = (
                None if pair is None
                else {"mean": pair[0], "std": pair[1],
                      "display": format_mean_std(*pair)}
            )
        return {
            "threshold": self.threshold,
            "folds": [_fold(fm) for fm in self.folds],
            "aggregate": agg,
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_obj(), fh, indent=1)
            fh.write("\n")

    def render(self) -> str:
        """Aligned text table: one row per fold plus an aggregate row."""
        headers = ["fold", "n"] + list(METRIC_NAMES)
        rows = []
        for fm in self.folds:
            rows.append(
                [str(fm.fold), str(fm.n)]
                + [_cell(fm.value(name)) for name in METRIC_NAMES]
            )
        agg_row = ["all", str(sum(fm.n for fm in self.folds))]
        for name in METRIC_NAMES:
            pair = self.aggregate.get(name)
            agg_row.append("-" if pair is None else format_mean_std(*pair))
        rows.append(agg_row)
        widths = [
            max(len(headers[c]), *(len(r[c]) for r in rows))
            for c in range(len(headers))
        ]
        lines = [
            "  ".join(h.rjust(w) for h, w in zip(headers, widths)),
            "  ".join("-" * w for w in widths),
        ]
        for r in rows:
            lines.append("  ".join(v.rjust(w) for v, w in zip(r, widths)))
        return "\n".join(lines)


def _cell(value: float | None) -> str:
    return "-" if value is None else f"{100.0 * value:.1f}"


def format_mean_std(mean: float, std: float) -> str:
    """Percent rendering with one decimal, e.g. 0.949, 0.014 -> '94.9±1.4'."""
    return f"{100.0 * mean:.1f}±{100.0 * std:.1f}"


def report(table: ScoreTable, threshold: float = DEFAULT_THRESHOLD) -> MetricsReport:
    """Per-fold metrics plus unweighted mean and population std.

    A fold holding a single class contributes no AUC; that fold is
    dropped from the AUC aggregate with a warning. Thresholded ratios
    with zero denominators are likewise absent and excluded.
    """
    if len(table) == 0:
        raise DataError("score table is empty")
    fold_ids = table.folds()
    per_fold: list[FoldMetrics] = []
    usable_auc = 0
    for f in fold_ids:
        sub = table.subset(table.fold == f)
        try:
            auc = roc_auc(sub.score, sub.label)
            usable_auc += 1
        except DataError:
            logger.warning("fold %d has a single class; AUC omitted", f)
            auc = None
        conf = confusion_at(sub.score, sub.label, threshold)
        per_fold.append(
            FoldMetrics(
                fold=f,
                n=len(sub),
                auc=auc,
                accuracy=conf.accuracy,
                sensitivity=conf.sensitivity,
                specificity=conf.specificity,
                precision=conf.precision,
            )
        )
    if usable_auc == 0:
        raise DataError("no fold contains both classes")
    aggregate: dict[str, tuple[float, float] | None] = {}
    for name in METRIC_NAMES:
        values = [fm.value(name) for fm in per_fold if fm.value(name) is not None]
        if not values:
            aggregate[name] = None
            continue
        mean = float(np.mean(values))
        std = float(np.std(values))  # population std, ddof=0
        aggregate[name] = (mean, std)
    return MetricsReport(threshold=threshold, folds=per_fold, aggregate=aggregate)


def evaluate_csv(path, threshold: float = DEFAULT_THRESHOLD) -> MetricsReport:
    return report(ScoreTable.read_csv(path), threshold)
