"""The four construct scores and their weighted aggregation.

Distances are Euclidean in 3D and divided by the scene diagonal before the
``d / (1 + d)`` style transforms, so scores do not depend on room scale.
Partial arrangements are scored over placed objects only; an empty
arrangement scores 1 on every construct.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import CoverageError, DegenerateUsageError, ValidationError
from .scene import Arrangement, SceneDescription, Vec3

CONSTRUCTS = ("spatial", "habitual", "semantic", "commonsense")
WEIGHT_SUM_TOL = 1e-9


@dataclass(frozen=True)
class PreferenceWeights:
    spatial: float
    habitual: float
    semantic: float
    commonsense: float

    def __post_init__(self) -> None:
        values = self.as_tuple()
        if any(not (0.0 <= v <= 1.0) for v in values):
            raise ValidationError(f"weights must lie in [0,1], got {values}")
        if abs(math.fsum(values) - 1.0) > WEIGHT_SUM_TOL:
            raise ValidationError(f"weights must sum to 1, got {math.fsum(values)!r}")

    @classmethod
    def from_sequence(cls, values: Sequence[float]) -> PreferenceWeights:
        if len(values) != 4:
            raise ValidationError(f"expected 4 weights, got {len(values)}")
        return cls(*(float(v) for v in values))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.spatial, self.habitual, self.semantic, self.commonsense)


@dataclass(frozen=True)
class SpatialPriors:
    preferred_position: Mapping[str, Vec3]

    def __post_init__(self) -> None:
        clean = {}
        for oid, pos in self.preferred_position.items():
            pos = tuple(float(v) for v in pos)
            if len(pos) != 3 or not all(math.isfinite(v) for v in pos):
                raise ValidationError(f"spatial prior for {oid!r} must be a finite 3D point")
            clean[oid] = pos
        object.__setattr__(self, "preferred_position", clean)

    def __getitem__(self, object_id: str) -> Vec3:
        try:
            return self.preferred_position[object_id]
        except KeyError:
            raise CoverageError(f"no spatial prior for object {object_id!r}") from None


@dataclass(frozen=True)
class SemanticAffinities:
    """Symmetric pairwise affinities in [-1, 1]; the diagonal is fixed at 0."""

    sigma: Mapping[tuple[str, str], float]

    def __post_init__(self) -> None:
        clean: dict[tuple[str, str], float] = {}
        for (a, b), s in self.sigma.items():
            s = float(s)
            if not (-1.0 <= s <= 1.0):
                raise ValidationError(f"affinity ({a!r}, {b!r}) = {s} outside [-1,1]")
            if a == b:
                if s != 0.0:
                    raise ValidationError(f"self-affinity of {a!r} must be 0")
                continue
            key = (a, b) if a < b else (b, a)
            if key in clean and clean[key] != s:
                raise ValidationError(f"asymmetric affinity for pair {key}")
            clean[key] = s
        object.__setattr__(self, "sigma", clean)

    def get(self, a: str, b: str) -> float:
        if a == b:
            return 0.0
        key = (a, b) if a < b else (b, a)
        try:
            return self.sigma[key]
        except KeyError:
            raise CoverageError(f"no affinity for object pair ({a!r}, {b!r})") from None


@dataclass(frozen=True)
class CommonsensePriorTable:
    score: Mapping[tuple[str, str], float]
    provenance: str = "stub"

    def __post_init__(self) -> None:
        clean = {}
        for key, v in self.score.items():
            v = float(v)
            if not (0.0 <= v <= 1.0):
                raise ValidationError(f"commonsense score for {key} = {v} outside [0,1]")
            clean[tuple(key)] = v
        object.__setattr__(self, "score", clean)

    def get(self, object_id: str, receptacle_id: str) -> float:
        try:
            return self.score[(object_id, receptacle_id)]
        except KeyError:
            raise CoverageError(
                f"commonsense table has no entry for ({object_id!r}, {receptacle_id!r})"
            ) from None

    def require_total(self, scene: SceneDescription) -> None:
        for o in scene.objects:
            for r in scene.receptacles:
                self.get(o.id, r.id)


@dataclass(frozen=True)
class ConstructScores:
    f1: float
    f2: float
    f3: float
    f4: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.f1, self.f2, self.f3, self.f4)


@dataclass(frozen=True)
class PriorBundle:
    """Everything the reward needs beyond the scene itself.

    ``accessibility`` optionally overrides receptacle accessibility declared
    in the scene (it is filled in by the accessibility estimator).
    """

    spatial: SpatialPriors
    affinities: SemanticAffinities
    commonsense: CommonsensePriorTable
    weights: PreferenceWeights
    accessibility: Mapping[str, float] | None = None

    def require_coverage(self, scene: SceneDescription) -> None:
        for o in scene.objects:
            self.spatial[o.id]
        for a in scene.object_ids:
            for b in scene.object_ids:
                self.affinities.get(a, b)
        self.commonsense.require_total(scene)


def _dist(a: Sequence[float], b: Sequence[float]) -> float:
    return math.dist(a, b)


def spatial_score(scene: SceneDescription, x: Arrangement, priors: SpatialPriors) -> float:
    if not x.placements:
        return 1.0
    D = scene.diagonal
    terms = [1.0 / (1.0 + _dist(p.position, priors[p.object_id]) / D) for p in x.placements]
    return math.fsum(terms) / len(terms)


def usage_max(scene: SceneDescription) -> float:
    u_max = max((o.usage_frequency for o in scene.objects), default=0.0)
    if not u_max > 0:
        raise DegenerateUsageError(f"scene {scene.id!r}: all usage frequencies are zero")
    return u_max


def accessibility_of(
    scene: SceneDescription, receptacle_id: str, override: Mapping[str, float] | None = None
) -> float:
    if override and receptacle_id in override:
        scene.receptacle(receptacle_id)
        return float(override[receptacle_id])
    return scene.receptacle(receptacle_id).accessibility


def habitual_score(
    scene: SceneDescription, x: Arrangement, accessibility: Mapping[str, float] | None = None
) -> float:
    """``accessibility`` overrides the receptacle values declared in the scene."""
    if not x.placements:
        return 1.0
    u_max = usage_max(scene)
    residuals = [
        (scene.object(p.object_id).usage_frequency / u_max
         - accessibility_of(scene, p.receptacle_id, accessibility)) ** 2
        for p in x.placements
    ]
    return 1.0 - math.fsum(residuals) / len(residuals)


def pair_penalty(sigma: float, d_hat: float) -> float:
    """Penalty for one ordered pair at normalized distance ``d_hat``."""
    if sigma > 0:
        return sigma * d_hat / (1.0 + d_hat)
    if sigma < 0:
        return -sigma * (1.0 - d_hat / (1.0 + d_hat))
    return 0.0


def semantic_score(scene: SceneDescription, x: Arrangement, aff: SemanticAffinities) -> float:
    n = len(x.placements)
    if n < 2:
        return 1.0
    D = scene.diagonal
    penalties = []
    for i, pi in enumerate(x.placements):
        for j, pj in enumerate(x.placements):
            if i == j:
                continue
            sigma = aff.get(pi.object_id, pj.object_id)
            penalties.append(pair_penalty(sigma, _dist(pi.position, pj.position) / D))
    return 1.0 - math.fsum(penalties) / (n * (n - 1))


def commonsense_score(scene: SceneDescription, x: Arrangement, table: CommonsensePriorTable) -> float:
    if not x.placements:
        return 1.0
    vals = [table.get(p.object_id, p.receptacle_id) for p in x.placements]
    return math.fsum(vals) / len(vals)


def _clamp01(v: float) -> float:
    # absorbs float round-off only; every term is already in [0,1]
    return min(1.0, max(0.0, v))


def aggregate(scores: ConstructScores, w: PreferenceWeights) -> float:
    return _clamp01(math.fsum(wk * fk for wk, fk in zip(w.as_tuple(), scores.as_tuple())))


def construct_scores(scene: SceneDescription, x: Arrangement, priors: PriorBundle) -> ConstructScores:
    return ConstructScores(
        spatial_score(scene, x, priors.spatial),
        habitual_score(scene, x, priors.accessibility),
        semantic_score(scene, x, priors.affinities),
        commonsense_score(scene, x, priors.commonsense),
    )


def reward(
    scene: SceneDescription, x: Arrangement, priors: PriorBundle, w: PreferenceWeights | None = None
) -> tuple[ConstructScores, float]:
    """Construct scores and the weighted reward ``R = sum_k w_k f_k``.

    ``w`` defaults to the weights stored in the bundle.
    """
    scores = construct_scores(scene, x, priors)
    return scores, aggregate(scores, priors.weights if w is None else w)


class IncrementalScorer:
    """Reward evaluation over flat ``(object, slot)`` indices of a :class:`SceneIndex`.

    Unary terms and pairwise penalties are tabulated once so that adding a
    placement costs O(number placed). Sums are carried in a small list
    ``[n, s_spatial, s_habitual, s_semantic, s_commonsense]``.
    """

    def __init__(self, scene: SceneDescription, priors: PriorBundle, w: PreferenceWeights | None = None) -> None:
        priors.require_coverage(scene)
        idx = scene.index
        self.index = idx
        self.weights = (priors.weights if w is None else w).as_tuple()
        n, S = idx.n_objects, idx.n_slots
        D = scene.diagonal
        P = idx.positions

        spatial = np.zeros((n, S))
        habitual = np.zeros((n, S))
        common = np.zeros((n, S))
        u_max = usage_max(scene) if n else 1.0
        acc = np.array([accessibility_of(scene, idx.receptacles[j].id, priors.accessibility)
                        for j in idx.slot_receptacle])
        rec_ids = [idx.receptacles[j].id for j in idx.slot_receptacle]
        for i, obj in enumerate(idx.objects):
            prior = np.asarray(priors.spatial[obj.id])
            spatial[i] = 1.0 / (1.0 + np.linalg.norm(P - prior, axis=1) / D)
            habitual[i] = (obj.usage_frequency / u_max - acc) ** 2
            common[i] = [priors.commonsense.get(obj.id, rid) for rid in rec_ids]

        d_hat = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=2) / D
        near = d_hat / (1.0 + d_hat)
        pair = np.zeros((n * S, n * S))
        for i, oi in enumerate(idx.objects):
            for j, oj in enumerate(idx.objects):
                if i == j:
                    continue
                sigma = priors.affinities.get(oi.id, oj.id)
                if sigma > 0:
                    block = sigma * near
                elif sigma < 0:
                    block = -sigma * (1.0 - near)
                else:
                    continue
                pair[i * S:(i + 1) * S, j * S:(j + 1) * S] = block

        self.spatial = spatial.ravel().tolist()
        self.habitual = habitual.ravel().tolist()
        self.common = common.ravel().tolist()
        self.pair = pair.tolist()

    def empty(self) -> list[float]:
        return [0, 0.0, 0.0, 0.0, 0.0]

    def add(self, sums: list[float], placed: list[int], a: int) -> None:
        """Add flat placement ``a`` to ``sums``; ``placed`` holds earlier placements."""
        row = self.pair[a]
        s3 = 0.0
        for b in placed:
            s3 += row[b]
        sums[0] += 1
        sums[1] += self.spatial[a]
        sums[2] += self.habitual[a]
        sums[3] += 2.0 * s3
        sums[4] += self.common[a]

    def scores(self, sums: Sequence[float]) -> tuple[float, float, float, float]:
        n = sums[0]
        if n == 0:
            return (1.0, 1.0, 1.0, 1.0)
        f3 = 1.0 - sums[3] / (n * (n - 1)) if n >= 2 else 1.0
        return (sums[1] / n, 1.0 - sums[2] / n, f3, sums[4] / n)

    def value(self, sums: Sequence[float]) -> float:
        n = sums[0]
        if n == 0:
            return 1.0
        w1, w2, w3, w4 = self.weights
        f3 = 1.0 - sums[3] / (n * (n - 1)) if n >= 2 else 1.0
        r = w1 * sums[1] / n + w2 * (1.0 - sums[2] / n) + w3 * f3 + w4 * sums[4] / n
        return min(1.0, max(0.0, r))

    def evaluate(self, flats: Iterable[int]) -> float:
        sums = self.empty()
        placed: list[int] = []
        for a in flats:
            self.add(sums, placed, a)
            placed.append(a)
        return self.value(sums)


def scores_from_dict(values: Mapping[str, float]) -> ConstructScores:
    return ConstructScores(*(float(values[k]) for k in ("f1", "f2", "f3", "f4")))
