import json
from fractions import Fraction

import pytest
from builders import FIXTURES, PROFILES

from prefarrange.errors import ComparisonError, CompletenessError, PreconditionError
from prefarrange.evaluation import (
    GroundTruth,
    batch_eval,
    format_report_table,
    load_ground_truth,
    load_prediction,
    object_accuracy,
)
from prefarrange.scene import Arrangement, Placement

CASES = FIXTURES / "case_tables"
REPORTED = {"p23": 0.60, "p32": 0.40, "p24": 0.80, "p16": 0.90}


def case(pid):
    return load_prediction(CASES / f"{pid}_pred.json"), load_ground_truth(CASES / f"{pid}_gt.json")


def test_identical_is_one():
    gt = GroundTruth("s", {"a": "r", "b": "q"})
    rep = object_accuracy({"a": "r", "b": "q"}, gt)
    assert rep.object_accuracy == 1.0 and rep.jaccard == 1.0


@pytest.mark.parametrize("pid", PROFILES)
def test_case_accuracy(pid):
    rep = object_accuracy(*case(pid))
    assert rep.object_accuracy == REPORTED[pid]
    assert len(rep.per_object) == 10


def test_batch_mean_is_exact():
    summary = batch_eval([case(p) for p in PROFILES], labels=list(PROFILES))
    assert summary.mean == 0.675
    assert (summary.minimum, summary.maximum) == (0.40, 0.90)
    fr = [Fraction(6, 10), Fraction(4, 10), Fraction(8, 10), Fraction(9, 10)]
    m = sum(fr) / 4
    assert summary.stdev == pytest.approx(float((sum((f - m) ** 2 for f in fr) / 4)) ** 0.5, abs=1e-15)


def test_case_rows_match_assignments():
    cases = json.loads((CASES / "cases.json").read_text())
    for c in cases:
        matches = sum(r["predicted"] == r["ground_truth"] for r in c["rows"])
        assert matches / len(c["rows"]) == c["reported_accuracy"]


def test_single_case_and_identical_pairs():
    one = batch_eval([case("p24")])
    assert one.mean == 0.8 and one.stdev == 0.0
    two = batch_eval([case("p24"), case("p24")])
    assert two.stdev == 0.0


def test_positions_are_ignored():
    gt = GroundTruth("s", {"a": "r"})
    x = Arrangement("s", (Placement("a", "r", (9, 9, 9)),))
    y = Arrangement("s", (Placement("a", "r", (0, 0, 0)),))
    assert object_accuracy(x, gt) == object_accuracy(y, gt)


def test_accuracy_one_iff_jaccard_one():
    gt = GroundTruth("s", {"a": "r", "b": "q", "c": "r"})
    for pred in ({"a": "r", "b": "q", "c": "r"}, {"a": "q", "b": "q", "c": "r"}, {"a": "q", "b": "r", "c": "q"}):
        rep = object_accuracy(pred, gt)
        assert (rep.object_accuracy == 1.0) == (rep.jaccard == 1.0)


def test_incomplete_prediction():
    with pytest.raises(CompletenessError, match="b"):
        object_accuracy({"a": "r"}, GroundTruth("s", {"a": "r", "b": "q"}))


def test_scene_mismatch():
    x = Arrangement("other", (Placement("a", "r", (0, 0, 0)),))
    with pytest.raises(ComparisonError):
        object_accuracy(x, GroundTruth("s", {"a": "r"}))


def test_empty_batch():
    with pytest.raises(PreconditionError):
        batch_eval([])


def test_report_table_lists_every_object():
    rep = object_accuracy(*case("p32"))
    text = format_report_table(rep, "P32")
    assert text.count("\n") == 10 + 2 and "4/10" in text
