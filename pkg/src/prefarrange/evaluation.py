"""Receptacle-level comparison of generated arrangements with participant ground truth."""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping, Sequence, Union

from .errors import ComparisonError, CompletenessError, PreconditionError, ValidationError
from .planner import PlanResult
from .scene import Arrangement, read_json


@dataclass(frozen=True)
class GroundTruth:
    scene_ref: str
    assignment: Mapping[str, str]

    def __post_init__(self) -> None:
        object.__setattr__(self, "assignment", dict(self.assignment))


@dataclass(frozen=True)
class ObjectMatch:
    object_id: str
    predicted: str
    ground_truth: str

    @property
    def match(self) -> bool:
        return self.predicted == self.ground_truth


@dataclass(frozen=True)
class EvalReport:
    scene_ref: str
    object_accuracy: float
    per_object: tuple[ObjectMatch, ...]
    jaccard: float
    matches: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "scene_ref": self.scene_ref,
            "object_accuracy": self.object_accuracy,
            "matches": self.matches,
            "n_objects": len(self.per_object),
            "jaccard": self.jaccard,
            "per_object": [
                {"object_id": m.object_id, "predicted": m.predicted, "ground_truth": m.ground_truth, "match": m.match}
                for m in self.per_object
            ],
        }


@dataclass(frozen=True)
class BatchSummary:
    mean: float
    stdev: float
    minimum: float
    maximum: float
    cases: tuple[EvalReport, ...]
    labels: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_cases": len(self.cases),
            "mean_accuracy": self.mean,
            "stdev_accuracy": self.stdev,
            "stdev_kind": "population",
            "min_accuracy": self.minimum,
            "max_accuracy": self.maximum,
            "cases": [
                dict(label=label, **case.to_dict())
                for label, case in zip(self.labels or [str(k) for k in range(len(self.cases))], self.cases)
            ],
        }


Prediction = Union[Arrangement, PlanResult, GroundTruth, Mapping[str, str]]


def _as_assignment(pred: Prediction, scene_ref: str) -> tuple[str, dict[str, str]]:
    if isinstance(pred, PlanResult):
        pred = pred.final
    if isinstance(pred, Arrangement):
        counts: dict[str, int] = {}
        for p in pred.placements:
            counts[p.object_id] = counts.get(p.object_id, 0) + 1
        dup = sorted(k for k, c in counts.items() if c > 1)
        if dup:
            raise ValidationError(f"prediction places {dup[0]!r} more than once")
        return pred.scene_ref, pred.assignment()
    if isinstance(pred, GroundTruth):
        return pred.scene_ref, dict(pred.assignment)
    return scene_ref, dict(pred)


def _accuracy_fraction(report: EvalReport) -> Fraction:
    return Fraction(report.matches, len(report.per_object)) if report.per_object else Fraction(1)


def object_accuracy(pred: Prediction, gt: GroundTruth) -> EvalReport:
    """Fraction of ground-truth objects the prediction puts in the same receptacle.

    Positions are ignored. The prediction must cover exactly the ground
    truth's objects.
    """
    scene_ref, assignment = _as_assignment(pred, gt.scene_ref)
    if scene_ref != gt.scene_ref:
        raise ComparisonError(f"prediction is for scene {scene_ref!r}, ground truth for {gt.scene_ref!r}")
    missing = sorted(set(gt.assignment) - set(assignment))
    if missing:
        raise CompletenessError(f"prediction does not place {', '.join(missing)}")
    extra = sorted(set(assignment) - set(gt.assignment))
    if extra:
        raise ComparisonError(f"prediction places objects absent from the ground truth: {', '.join(extra)}")

    per_object = tuple(ObjectMatch(oid, assignment[oid], gt.assignment[oid]) for oid in sorted(gt.assignment))
    matches = sum(m.match for m in per_object)
    n = len(per_object)
    pairs_p = set(assignment.items())
    pairs_g = set(gt.assignment.items())
    union = pairs_p | pairs_g
    jaccard = len(pairs_p & pairs_g) / len(union) if union else 1.0
    return EvalReport(gt.scene_ref, float(Fraction(matches, n)) if n else 1.0, per_object, jaccard, matches)


def batch_eval(cases: Sequence[tuple[Prediction, GroundTruth]], labels: Sequence[str] | None = None) -> BatchSummary:
    """Mean and population standard deviation of per-case accuracy.

    The mean is computed on exact fractions, so e.g. four cases at 6/10,
    4/10, 8/10 and 9/10 give exactly 0.675.
    """
    if not cases:
        raise PreconditionError("batch evaluation needs at least one case")
    if labels is not None and len(labels) != len(cases):
        raise ValidationError("one label per case is required")
    reports = tuple(object_accuracy(p, g) for p, g in cases)
    fracs = [_accuracy_fraction(r) for r in reports]
    mean = sum(fracs, Fraction(0)) / len(fracs)
    return BatchSummary(
        mean=float(mean),
        stdev=float(statistics.pstdev(fracs)),
        minimum=float(min(fracs)),
        maximum=float(max(fracs)),
        cases=reports,
        labels=tuple(labels) if labels is not None else tuple(str(k) for k in range(len(reports))),
    )


def ground_truth_from_dict(doc: Mapping[str, Any]) -> GroundTruth:
    try:
        return GroundTruth(str(doc["scene_ref"]), {str(k): str(v) for k, v in doc["assignment"].items()})
    except (KeyError, TypeError, AttributeError) as exc:
        raise ValidationError(f"malformed ground-truth document: {exc}") from exc


def ground_truth_to_dict(gt: GroundTruth) -> dict[str, Any]:
    return {"scene_ref": gt.scene_ref, "assignment": dict(sorted(gt.assignment.items()))}


def load_ground_truth(path: str | Path) -> GroundTruth:
    return ground_truth_from_dict(read_json(path))


def load_prediction(path: str | Path) -> Prediction:
    """Read a plan result, an arrangement, or an assignment document."""
    from .scene import arrangement_from_dict

    doc = read_json(path)
    if not isinstance(doc, Mapping):
        raise ValidationError(f"{path}: expected a JSON object")
    if "result" in doc and isinstance(doc["result"], Mapping):
        doc = doc["result"]
    if "trajectory" in doc and "final" in doc:
        return PlanResult.from_dict(doc)
    if "placements" in doc:
        return arrangement_from_dict(doc)
    if "assignment" in doc:
        return ground_truth_from_dict(doc)
    raise ValidationError(f"{path}: not a plan, arrangement or assignment document")


def format_report_table(report: EvalReport, label: str = "") -> str:
    rows = [("object", "predicted", "ground truth", "ok")]
    rows += [(m.object_id, m.predicted, m.ground_truth, "yes" if m.match else "no") for m in report.per_object]
    widths = [max(len(r[k]) for r in rows) for k in range(4)]
    lines = []
    if label:
        lines.append(f"== {label} ({report.scene_ref})")
    for r in rows:
        lines.append("  ".join(cell.ljust(widths[k]) for k, cell in enumerate(r)).rstrip())
    lines.append(f"object accuracy: {report.object_accuracy:.2f} ({report.matches}/{len(report.per_object)})"
                 f"   jaccard: {report.jaccard:.4f}")
    return "\n".join(lines)
