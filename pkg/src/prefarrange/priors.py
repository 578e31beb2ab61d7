"""Estimate construct parameters from demonstrations and weights from questionnaires."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Any, Mapping, Sequence

from .constructs import (
    CommonsensePriorTable,
    PreferenceWeights,
    PriorBundle,
    SemanticAffinities,
    SpatialPriors,
    usage_max,
)
from .errors import CoverageError, PreconditionError, ValidationError
from .scene import (
    Arrangement,
    SceneDescription,
    arrangement_from_dict,
    arrangement_to_dict,
    read_json,
    validate_arrangement,
)

__all__ = [
    "DemonstrationSet",
    "LikertResponse",
    "PriorBundle",
    "estimate_spatial_priors",
    "estimate_affinities",
    "estimate_accessibility",
    "weights_from_likert",
    "build_bundle",
]

LIKERT_ITEMS_PER_CONSTRUCT = 3


@dataclass(frozen=True)
class DemonstrationSet:
    scene_ref: str
    arrangements: tuple[Arrangement, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "arrangements", tuple(self.arrangements))
        if not self.arrangements:
            raise PreconditionError("a demonstration set needs at least one arrangement")
        for x in self.arrangements:
            if x.scene_ref != self.scene_ref:
                raise ValidationError(f"demonstration for scene {x.scene_ref!r} in a {self.scene_ref!r} set")

    def validate(self, scene: SceneDescription) -> None:
        """Every demonstration must be a complete feasible arrangement of ``scene``."""
        for k, x in enumerate(self.arrangements):
            verdict = validate_arrangement(scene, x)
            if not verdict.ok:
                raise ValidationError(f"demonstration {k} is infeasible: {verdict.violations[0].message}")
            if not x.is_complete(scene):
                missing = sorted(set(scene.object_ids) - x.placed_ids())
                raise ValidationError(f"demonstration {k} is incomplete (missing {', '.join(missing)})")


@dataclass(frozen=True)
class LikertResponse:
    """Twelve 1-5 ratings, three per construct in the order spatial, habitual, semantic, commonsense."""

    items: tuple[int, ...]
    participant_id: str | None = None

    def __post_init__(self) -> None:
        items = tuple(self.items)
        if len(items) != 4 * LIKERT_ITEMS_PER_CONSTRUCT:
            raise ValidationError(f"expected 12 Likert items, got {len(items)}")
        for k, v in enumerate(items):
            if isinstance(v, bool) or int(v) != v or not (1 <= v <= 5):
                raise ValidationError(f"Likert item {k + 1} = {v!r} is not an integer in 1..5")
        object.__setattr__(self, "items", tuple(int(v) for v in items))


def _coverage(demos: DemonstrationSet, scene: SceneDescription | None) -> list[str]:
    seen = sorted({p.object_id for x in demos.arrangements for p in x.placements})
    if scene is None:
        return seen
    if scene.id != demos.scene_ref:
        raise ValidationError(f"demonstrations are for scene {demos.scene_ref!r}, not {scene.id!r}")
    missing = [oid for oid in scene.object_ids if oid not in set(seen)]
    if missing:
        raise CoverageError(f"object {missing[0]!r} does not appear in any demonstration")
    return sorted(scene.object_ids)


def estimate_spatial_priors(demos: DemonstrationSet, scene: SceneDescription | None = None) -> SpatialPriors:
    """Centroid of each object's positions on its most frequent receptacle.

    Ties between equally frequent receptacles go to the lexicographically
    smallest receptacle id. ``math.fsum`` keeps the centroid independent of
    demonstration order.
    """
    object_ids = _coverage(demos, scene)
    out = {}
    for oid in object_ids:
        placements = [p for x in demos.arrangements for p in x.placements if p.object_id == oid]
        counts = Counter(p.receptacle_id for p in placements)
        top = max(counts.values())
        modal = min(r for r, c in counts.items() if c == top)
        pts = [p.position for p in placements if p.receptacle_id == modal]
        out[oid] = tuple(math.fsum(pt[k] for pt in pts) / len(pts) for k in range(3))
    return SpatialPriors(out)


def affinity_from_rate(c: float, num_receptacles: int) -> float:
    """Map a co-placement rate to [-1, 1] with the chance rate ``1/M`` at 0."""
    p0 = 1.0 / num_receptacles
    if c >= p0:
        return min(1.0, max(-1.0, (c - p0) / (1.0 - p0)))
    return (c - p0) / p0


def estimate_affinities(
    demos: DemonstrationSet, num_receptacles: int, scene: SceneDescription | None = None
) -> SemanticAffinities:
    if num_receptacles < 2:
        raise PreconditionError("affinity estimation needs at least two receptacles")
    if not demos.arrangements:
        raise PreconditionError("empty demonstration set")
    object_ids = _coverage(demos, scene)
    assignments = [x.assignment() for x in demos.arrangements]
    sigma = {}
    for a, b in combinations(object_ids, 2):
        shared = sum(1 for asg in assignments if a in asg and b in asg and asg[a] == asg[b])
        sigma[(a, b)] = affinity_from_rate(shared / len(assignments), num_receptacles)
    return SemanticAffinities(sigma)


def estimate_accessibility(demos: DemonstrationSet, scene: SceneDescription) -> dict[str, float]:
    """Mean normalized usage of the distinct objects ever placed on each receptacle.

    Receptacles that never receive an object get accessibility 0.
    """
    u_max = usage_max(scene)
    placed_on: dict[str, set[str]] = {r.id: set() for r in scene.receptacles}
    for x in demos.arrangements:
        for p in x.placements:
            scene.object(p.object_id)
            placed_on[scene.receptacle(p.receptacle_id).id].add(p.object_id)
    out = {}
    for rid, oids in sorted(placed_on.items()):
        if not oids:
            out[rid] = 0.0
            continue
        vals = [scene.object(o).usage_frequency / u_max for o in sorted(oids)]
        out[rid] = math.fsum(vals) / len(vals)
    return out


def construct_means(resp: LikertResponse) -> tuple[float, float, float, float]:
    k = LIKERT_ITEMS_PER_CONSTRUCT
    return tuple(math.fsum(resp.items[c * k:(c + 1) * k]) / k for c in range(4))  # type: ignore[return-value]


def weights_from_means(means: Sequence[float]) -> PreferenceWeights:
    total = math.fsum(means)
    if not total > 0:
        raise ValidationError("construct means must have a positive sum")
    return PreferenceWeights.from_sequence([m / total for m in means])


def weights_from_likert(resp: LikertResponse) -> PreferenceWeights:
    """Raw 1-5 ratings, averaged per construct, then normalized to sum to 1."""
    return weights_from_means(construct_means(resp))


def build_bundle(
    scene: SceneDescription,
    demos: DemonstrationSet,
    commonsense: CommonsensePriorTable,
    weights: PreferenceWeights,
) -> PriorBundle:
    """Estimate every demonstration-derived prior and assemble a full bundle."""
    demos.validate(scene)
    bundle = PriorBundle(
        spatial=estimate_spatial_priors(demos, scene),
        affinities=estimate_affinities(demos, len(scene.receptacles), scene),
        commonsense=commonsense,
        weights=weights,
        accessibility=estimate_accessibility(demos, scene),
    )
    bundle.require_coverage(scene)
    return bundle


# ---------------------------------------------------------------------------
# documents
# ---------------------------------------------------------------------------


def demonstrations_from_dict(doc: Mapping[str, Any]) -> DemonstrationSet:
    try:
        arrangements = tuple(arrangement_from_dict(d) for d in doc["demonstrations"])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed demonstration document: {exc}") from exc
    if not arrangements:
        raise PreconditionError("demonstration document lists no arrangements")
    scene_ref = str(doc.get("scene_ref", arrangements[0].scene_ref))
    return DemonstrationSet(scene_ref, arrangements)


def demonstrations_to_dict(demos: DemonstrationSet) -> dict[str, Any]:
    return {"scene_ref": demos.scene_ref, "demonstrations": [arrangement_to_dict(x) for x in demos.arrangements]}


def likert_from_dict(doc: Mapping[str, Any]) -> LikertResponse:
    try:
        items = tuple(doc["items"])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed Likert document: {exc}") from exc
    pid = doc.get("participant_id")
    return LikertResponse(items, None if pid is None else str(pid))


def commonsense_from_entries(entries: Sequence[Mapping[str, Any]], default_provenance: str = "stub") -> CommonsensePriorTable:
    try:
        score = {(str(e["object_id"]), str(e["receptacle_id"])): float(e["score"]) for e in entries}
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed commonsense entry: {exc}") from exc
    tags = sorted({str(e.get("provenance", default_provenance)) for e in entries})
    return CommonsensePriorTable(score, "+".join(tags) if tags else default_provenance)


def commonsense_to_entries(table: CommonsensePriorTable) -> list[dict[str, Any]]:
    return [
        {"object_id": o, "receptacle_id": r, "score": s, "provenance": table.provenance}
        for (o, r), s in sorted(table.score.items())
    ]


def bundle_from_dict(doc: Mapping[str, Any]) -> PriorBundle:
    try:
        spatial = SpatialPriors({str(k): tuple(v) for k, v in doc["spatial_priors"].items()})
        affinities = SemanticAffinities({(str(e["a"]), str(e["b"])): float(e["sigma"]) for e in doc["affinities"]})
        commonsense = commonsense_from_entries(doc["commonsense"])
        weights = PreferenceWeights.from_sequence(doc["weights"])
        acc = doc.get("accessibility")
    except (KeyError, TypeError, AttributeError) as exc:
        raise ValidationError(f"malformed prior bundle: {exc}") from exc
    if acc is not None:
        acc = {str(k): float(v) for k, v in acc.items()}
        for k, v in acc.items():
            if not (0.0 <= v <= 1.0):
                raise ValidationError(f"accessibility of {k!r} = {v} outside [0,1]")
    return PriorBundle(spatial, affinities, commonsense, weights, acc)


def bundle_to_dict(bundle: PriorBundle) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "spatial_priors": {k: list(v) for k, v in sorted(bundle.spatial.preferred_position.items())},
        "affinities": [{"a": a, "b": b, "sigma": s} for (a, b), s in sorted(bundle.affinities.sigma.items())],
        "commonsense": commonsense_to_entries(bundle.commonsense),
        "weights": list(bundle.weights.as_tuple()),
    }
    if bundle.accessibility is not None:
        doc["accessibility"] = dict(sorted(bundle.accessibility.items()))
    return doc


def load_bundle(path: str | Path) -> PriorBundle:
    return bundle_from_dict(read_json(path))


def load_demonstrations(path: str | Path) -> DemonstrationSet:
    return demonstrations_from_dict(read_json(path))


def load_likert(path: str | Path) -> LikertResponse:
    return likert_from_dict(read_json(path))
