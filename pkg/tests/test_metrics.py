import json
import logging

import numpy as np
import pytest

from neuroqc.errors import DataError
from neuroqc.metrics import (
    CSV_HEADER,
    Confusion,
    ScoreTable,
    confusion_at,
    evaluate_csv,
    format_mean_std,
    report,
    roc_auc,
)


def _pairwise_auc(scores, labels):
    """Literal Mann-Whitney statistic: every (pos, neg) pair compared."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


class TestRocAuc:
    def test_perfect_separation(self):
        assert roc_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0

    def test_inverted(self):
        assert roc_auc([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0]) == 0.0

    def test_all_tied_is_half(self):
        assert roc_auc([0.5] * 6, [1, 0, 1, 0, 1, 0]) == 0.5

    def test_known_value_three_quarters(self):
        assert roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75

    def test_known_value_with_tie(self):
        # pairs: win, win, loss, tie -> (2 + 0.5) / 4
        assert roc_auc([0.9, 0.3, 0.5, 0.3], [1, 1, 0, 0]) == 0.625

    def test_matches_pairwise_oracle(self):
        rng = np.random.default_rng(0)
        for trial in range(50):
            n = int(rng.integers(4, 40))
            # dyadic grid scores so ties are exact
            scores = rng.integers(0, 65, n) / 64.0
            labels = rng.integers(0, 2, n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            got = roc_auc(scores, labels)
            want = _pairwise_auc(scores.tolist(), labels.tolist())
            assert got == pytest.approx(want, abs=1e-12)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(1)
        scores = rng.integers(0, 65, 30) / 64.0
        labels = rng.integers(0, 2, 30)
        labels[0], labels[1] = 0, 1
        base = roc_auc(scores, labels)
        assert roc_auc(0.5 * scores + 0.25, labels) == base
        assert roc_auc(scores ** 3, labels) == base

    def test_complement_identity(self):
        rng = np.random.default_rng(2)
        scores = rng.integers(0, 65, 25) / 64.0
        labels = rng.integers(0, 2, 25)
        labels[0], labels[1] = 0, 1
        assert roc_auc(scores, 1 - labels) == pytest.approx(
            1.0 - roc_auc(scores, labels), abs=1e-12)
        assert roc_auc(1.0 - scores, labels) == pytest.approx(
            1.0 - roc_auc(scores, labels), abs=1e-12)

    def test_single_class_rejected(self):
        with pytest.raises(DataError, match="both classes"):
            roc_auc([0.2, 0.4], [1, 1])
        with pytest.raises(DataError, match="both classes"):
            roc_auc([0.2, 0.4], [0, 0])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DataError, match="1-d"):
            roc_auc([0.2, 0.4], [1, 0, 1])


class TestConfusion:
    def test_counts_small_example(self):
        scores = [0.9, 0.4, 0.6, 0.1]
        labels = [1, 1, 0, 0]
        c = confusion_at(scores, labels)
        assert (c.tp, c.fn, c.fp, c.tn) == (1, 1, 1, 1)
        assert c.accuracy == 0.5
        assert c.sensitivity == 0.5
        assert c.specificity == 0.5
        assert c.precision == 0.5
        assert c.n == 4

    def test_threshold_boundary_is_positive(self):
        c = confusion_at([0.5], [1], threshold=0.5)
        assert c.tp == 1 and c.fn == 0

    def test_zero_denominators_are_none(self):
        all_pos = confusion_at([0.9, 0.1], [1, 1])
        assert all_pos.specificity is None
        assert all_pos.sensitivity == 0.5
        all_neg_pred = confusion_at([0.1, 0.2], [0, 0])
        assert all_neg_pred.precision is None
        assert all_neg_pred.specificity == 1.0
        assert Confusion(0, 0, 0, 0).accuracy is None

    def test_empty_rejected(self):
        with pytest.raises(DataError, match="at least one"):
            confusion_at([], [])

    def test_recount_200_random_rows(self):
        rng = np.random.default_rng(3)
        scores = rng.random(200)
        labels = rng.integers(0, 2, 200)
        c = confusion_at(scores, labels, threshold=0.35)
        tp = fp = tn = fn = 0
        for s, y in zip(scores, labels):
            pred = 1 if s >= 0.35 else 0
            if pred and y:
                tp += 1
            elif pred and not y:
                fp += 1
            elif not pred and not y:
                tn += 1
            else:
                fn += 1
        assert (c.tp, c.fp, c.tn, c.fn) == (tp, fp, tn, fn)
        assert c.n == 200


def _table(rows):
    return ScoreTable.from_rows(rows)


class TestScoreTable:
    def test_validation(self):
        with pytest.raises(DataError, match=r"\[0, 1\]"):
            _table([(0, 1, 1, 0, 1, 1.5)])
        with pytest.raises(DataError, match="labels"):
            _table([(0, 1, 1, 0, 2, 0.5)])
        with pytest.raises(DataError, match="non-negative"):
            _table([(0, 1, 1, -1, 1, 0.5)])
        with pytest.raises(DataError, match="length"):
            ScoreTable(
                record_index=np.arange(3), neuron_id=np.arange(3),
                point_id=np.arange(3), fold=np.arange(3),
                label=np.zeros(3, int), score=np.zeros(2),
            )

    def test_folds_and_subset(self):
        t = _table([
            (0, 10, 1, 2, 1, 0.9),
            (1, 11, 2, 0, 0, 0.2),
            (2, 12, 3, 2, 0, 0.4),
        ])
        assert t.folds() == [0, 2]
        sub = t.subset(t.fold == 2)
        assert len(sub) == 2
        assert sub.neuron_id.tolist() == [10, 12]

    def test_csv_round_trip_exact(self, tmp_path):
        awkward = [0.1 + 0.2, 1.0 / 3.0, 0.875, 1e-17, 1.0]
        rows = [(i, 100 + i, i, i % 2, i % 2, s)
                for i, s in enumerate(awkward)]
        t = _table(rows)
        path = tmp_path / "scores.csv"
        t.write_csv(path)
        back = ScoreTable.read_csv(path)
        assert back.score.tolist() == t.score.tolist()
        assert np.array_equal(back.record_index, t.record_index)
        assert np.array_equal(back.fold, t.fold)
        first = path.read_text().splitlines()[0]
        assert first == ",".join(CSV_HEADER)

    def test_read_rejects_wrong_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(DataError, match="header"):
            ScoreTable.read_csv(path)

    def test_read_rejects_short_row_with_line_number(self, tmp_path):
        path = tmp_path / "short.csv"
        path.write_text(",".join(CSV_HEADER) + "\n1,2,3\n")
        with pytest.raises(DataError, match="short.csv:2"):
            ScoreTable.read_csv(path)

    def test_read_rejects_non_numeric(self, tmp_path):
        path = tmp_path / "nan.csv"
        path.write_text(",".join(CSV_HEADER) + "\n0,1,1,0,1,good\n")
        with pytest.raises(DataError, match="nan.csv:2"):
            ScoreTable.read_csv(path)

    def test_read_skips_blank_lines(self, tmp_path):
        path = tmp_path / "blank.csv"
        path.write_text(",".join(CSV_HEADER) + "\n0,1,1,0,1,0.5\n\n")
        assert len(ScoreTable.read_csv(path)) == 1

    def test_read_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(DataError, match="empty"):
            ScoreTable.read_csv(path)


class TestFormat:
    def test_examples(self):
        assert format_mean_std(0.949, 0.014) == "94.9±1.4"
        assert format_mean_std(1.0, 0.0) == "100.0±0.0"
        assert format_mean_std(0.5, 0.25) == "50.0±25.0"


def _two_fold_table():
    # fold 0 perfectly separated, fold 1 fully tied
    rows = []
    for i, (label, score) in enumerate(
            [(1, 0.9), (1, 0.8), (0, 0.2), (0, 0.1)]):
        rows.append((i, i, i, 0, label, score))
    for i, (label, score) in enumerate(
            [(1, 0.5), (0, 0.5), (1, 0.5), (0, 0.5)], start=4):
        rows.append((i, i, i, 1, label, score))
    return _table(rows)


class TestReport:
    def test_mean_and_population_std(self):
        rep = report(_two_fold_table())
        mean, std = rep.aggregate["auc"]
        assert mean == 0.75 and std == 0.25
        assert [fm.auc for fm in rep.folds] == [1.0, 0.5]

    def test_identical_folds_have_zero_std(self):
        rows = [(i, i, i, f, i % 2, 0.9 if i % 2 else 0.1)
                for f in range(3) for i in range(4)]
        rep = report(_table(rows))
        assert rep.aggregate["auc"] == (1.0, 0.0)
        assert rep.aggregate["accuracy"] == (1.0, 0.0)

    def test_aggregate_matches_numpy_oracle(self):
        rng = np.random.default_rng(4)
        rows = []
        idx = 0
        for f in range(5):
            for _ in range(30):
                rows.append((idx, idx, idx, f,
                             int(rng.integers(0, 2)),
                             float(rng.integers(0, 65) / 64.0)))
                idx += 1
        t = _table(rows)
        rep = report(t)
        per_fold = [roc_auc(t.subset(t.fold == f).score,
                            t.subset(t.fold == f).label)
                    for f in t.folds()]
        mean, std = rep.aggregate["auc"]
        assert mean == pytest.approx(float(np.mean(per_fold)), abs=1e-15)
        assert std == pytest.approx(float(np.std(per_fold)), abs=1e-15)

    def test_single_class_fold_warns_and_is_excluded(self, caplog):
        rows = [
            (0, 0, 0, 0, 1, 0.9), (1, 1, 1, 0, 0, 0.1),
            (2, 2, 2, 1, 1, 0.8), (3, 3, 3, 1, 1, 0.7),
        ]
        with caplog.at_level(logging.WARNING):
            rep = report(_table(rows))
        assert "single class" in caplog.text
        assert rep.folds[1].auc is None
        assert rep.aggregate["auc"] == (1.0, 0.0)
        # thresholded metrics still reported for the degenerate fold
        assert rep.folds[1].sensitivity == 1.0
        assert rep.folds[1].specificity is None

    def test_all_single_class_rejected(self):
        rows = [(0, 0, 0, 0, 1, 0.9), (1, 1, 1, 1, 0, 0.1)]
        with pytest.raises(DataError, match="no fold"):
            report(_table(rows))

    def test_empty_rejected(self):
        with pytest.raises(DataError, match="empty"):
            report(_table([]))

    def test_render_layout(self):
        rep = report(_two_fold_table())
        text = rep.render()
        lines = text.splitlines()
        assert lines[0].split() == [
            "fold", "n", "auc", "accuracy", "sensitivity",
            "specificity", "precision"]
        assert len({len(line) for line in lines}) == 1
        assert lines[-1].split()[0] == "all"
        assert "75.0±25.0" in lines[-1]
        assert lines[2].split()[0] == "0" and lines[2].split()[1] == "4"

    def test_render_dash_for_absent(self):
        rows = [
            (0, 0, 0, 0, 1, 0.9), (1, 1, 1, 0, 0, 0.1),
            (2, 2, 2, 1, 1, 0.8), (3, 3, 3, 1, 1, 0.7),
        ]
        rep = report(_table(rows))
        fold1_line = rep.render().splitlines()[3]
        assert fold1_line.split()[2] == "-"

    def test_json_has_display_strings(self):
        rep = report(_two_fold_table())
        obj = rep.to_json_obj()
        assert obj["aggregate"]["auc"]["display"] == "75.0±25.0"
        assert obj["threshold"] == 0.5
        assert obj["folds"][0]["auc"] == 1.0
        json.dumps(obj)  # must be serializable as-is


class TestEvaluateCsv:
    def test_round_trip(self, tmp_path):
        t = _two_fold_table()
        path = tmp_path / "s.csv"
        t.write_csv(path)
        rep = evaluate_csv(path)
        assert rep.aggregate["auc"] == (0.75, 0.25)
