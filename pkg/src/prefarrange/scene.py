"""Objects, receptacles, placements and arrangement feasibility."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    ComparisonError,
    PreconditionError,
    SceneLoadError,
    SceneReferenceError,
    ValidationError,
)

# geometric slack for containment / overlap comparisons, meters
GEOM_EPS = 1e-9

Vec3 = tuple[float, float, float]
Action = tuple[str, str, Vec3]


@dataclass(frozen=True)
class ObjectSpec:
    id: str
    name: str
    footprint: Vec3  # width (x), depth (y), height (z)
    usage_frequency: float = 0.0

    def __post_init__(self) -> None:
        if len(self.footprint) != 3 or any(not (v > 0) for v in self.footprint):
            raise ValidationError(f"object {self.id!r}: footprint dimensions must be > 0, got {self.footprint}")
        if not (self.usage_frequency >= 0) or not math.isfinite(self.usage_frequency):
            raise ValidationError(f"object {self.id!r}: usage_frequency must be >= 0")
        object.__setattr__(self, "footprint", tuple(float(v) for v in self.footprint))


@dataclass(frozen=True)
class Surface:
    """Axis-aligned rectangle with lower-left corner (x, y), extents (w, d), at height z."""

    x: float
    y: float
    w: float
    d: float
    z: float

    def __post_init__(self) -> None:
        if not (self.w > 0 and self.d > 0):
            raise ValidationError(f"surface extents must be > 0, got w={self.w} d={self.d}")

    @property
    def center(self) -> Vec3:
        return (self.x + self.w / 2, self.y + self.d / 2, self.z)


@dataclass(frozen=True)
class ReceptacleSpec:
    id: str
    name: str
    surface: Surface
    accessibility: float = 0.0
    grid_resolution: int = 1

    def __post_init__(self) -> None:
        if not (0.0 <= self.accessibility <= 1.0):
            raise ValidationError(f"receptacle {self.id!r}: accessibility must be in [0,1]")
        if int(self.grid_resolution) != self.grid_resolution or self.grid_resolution < 1:
            raise ValidationError(f"receptacle {self.id!r}: grid_resolution must be a positive integer")


@dataclass(frozen=True)
class Placement:
    object_id: str
    receptacle_id: str
    position: Vec3

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))


@dataclass(frozen=True)
class Arrangement:
    """A possibly partial set of placements.

    Placements are kept as a tuple so that duplicate assignments survive
    construction and can be reported by :func:`validate_arrangement`.
    """

    scene_ref: str
    placements: tuple[Placement, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "placements", tuple(self.placements))

    def __len__(self) -> int:
        return len(self.placements)

    def assignment(self) -> dict[str, str]:
        """Map object id to receptacle id (last placement wins on duplicates)."""
        return {p.object_id: p.receptacle_id for p in self.placements}

    def placed_ids(self) -> set[str]:
        return {p.object_id for p in self.placements}

    def placement_of(self, object_id: str) -> Placement | None:
        for p in self.placements:
            if p.object_id == object_id:
                return p
        return None

    def with_placement(self, placement: Placement) -> Arrangement:
        return Arrangement(self.scene_ref, self.placements + (placement,))

    def apply(self, action: Action) -> Arrangement:
        return self.with_placement(Placement(*action))

    def is_complete(self, scene: SceneDescription) -> bool:
        return self.placed_ids() == set(scene.object_ids) and len(self.placements) == len(scene.objects)


@dataclass(frozen=True)
class Violation:
    kind: str  # "duplicate assignment" | "containment" | "overlap"
    ids: tuple[str, ...]
    message: str


@dataclass(frozen=True)
class Validity:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class SceneDescription:
    id: str
    objects: tuple[ObjectSpec, ...]
    receptacles: tuple[ReceptacleSpec, ...]
    room: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "receptacles", tuple(self.receptacles))
        if not self.receptacles:
            raise SceneLoadError(f"scene {self.id!r}: at least one receptacle is required")
        for kind, items in (("object", self.objects), ("receptacle", self.receptacles)):
            seen: set[str] = set()
            for item in items:
                if item.id in seen:
                    raise SceneLoadError(f"scene {self.id!r}: duplicate {kind} id {item.id!r}")
                seen.add(item.id)
        if not self.diagonal > 0:
            raise SceneLoadError(f"scene {self.id!r}: degenerate bounding box")
        index = self.index
        for i, obj in enumerate(index.objects):
            if not index.fits[i].any():
                raise SceneLoadError(f"scene {self.id!r}: object {obj.id!r} fits on no receptacle slot")

    @cached_property
    def _objects_by_id(self) -> dict[str, ObjectSpec]:
        return {o.id: o for o in self.objects}

    @cached_property
    def _receptacles_by_id(self) -> dict[str, ReceptacleSpec]:
        return {r.id: r for r in self.receptacles}

    @property
    def object_ids(self) -> list[str]:
        return [o.id for o in self.objects]

    @property
    def receptacle_ids(self) -> list[str]:
        return [r.id for r in self.receptacles]

    def object(self, object_id: str) -> ObjectSpec:
        try:
            return self._objects_by_id[object_id]
        except KeyError:
            raise SceneReferenceError(f"unknown object id {object_id!r} in scene {self.id!r}") from None

    def receptacle(self, receptacle_id: str) -> ReceptacleSpec:
        try:
            return self._receptacles_by_id[receptacle_id]
        except KeyError:
            raise SceneReferenceError(f"unknown receptacle id {receptacle_id!r} in scene {self.id!r}") from None

    @cached_property
    def diagonal(self) -> float:
        """Diagonal of the bounding box of all receptacle surfaces, in meters."""
        xs = [r.surface.x for r in self.receptacles] + [r.surface.x + r.surface.w for r in self.receptacles]
        ys = [r.surface.y for r in self.receptacles] + [r.surface.y + r.surface.d for r in self.receptacles]
        zs = [r.surface.z for r in self.receptacles]
        return math.sqrt((max(xs) - min(xs)) ** 2 + (max(ys) - min(ys)) ** 2 + (max(zs) - min(zs)) ** 2)

    @cached_property
    def index(self) -> SceneIndex:
        return SceneIndex(self)

    def with_accessibility(self, accessibility: Mapping[str, float] | None) -> SceneDescription:
        """Copy of the scene with receptacle accessibility overridden where given."""
        if not accessibility:
            return self
        for rid in accessibility:
            self.receptacle(rid)
        recs = tuple(
            ReceptacleSpec(r.id, r.name, r.surface, float(accessibility.get(r.id, r.accessibility)), r.grid_resolution)
            for r in self.receptacles
        )
        return SceneDescription(self.id, self.objects, recs, self.room)


class SceneIndex:
    """Precomputed slot geometry used by the planner and the action generator.

    Objects are ordered by id, receptacles by id and slots by
    (receptacle id, row-major slot index), so iterating flat indices
    ``i * n_slots + s`` visits actions in the deterministic action order.
    """

    def __init__(self, scene: SceneDescription) -> None:
        self.objects = sorted(scene.objects, key=lambda o: o.id)
        self.receptacles = sorted(scene.receptacles, key=lambda r: r.id)
        self.object_pos = {o.id: i for i, o in enumerate(self.objects)}
        self.receptacle_pos = {r.id: j for j, r in enumerate(self.receptacles)}

        slot_rec: list[int] = []
        slot_local: list[int] = []
        positions: list[Vec3] = []
        for j, rec in enumerate(self.receptacles):
            for k, pos in enumerate(_grid(rec)):
                slot_rec.append(j)
                slot_local.append(k)
                positions.append(pos)
        self.slot_receptacle = slot_rec
        self.slot_local = slot_local
        self.positions = np.asarray(positions, dtype=float)
        self.n_objects = len(self.objects)
        self.n_slots = len(positions)
        self.slot_lookup = {
            (self.receptacles[j].id, k): s for s, (j, k) in enumerate(zip(slot_rec, slot_local))
        }

        n, S = self.n_objects, self.n_slots
        fits = np.zeros((n, S), dtype=bool)
        for i, obj in enumerate(self.objects):
            for s in range(S):
                fits[i, s] = _contained(obj.footprint, tuple(self.positions[s]), self.receptacles[slot_rec[s]].surface)
        self.fits = fits

        # conflicts[a] lists flat indices b = j*S + t (j != i) whose footprint
        # overlaps a = i*S + s on the same receptacle
        conflicts: list[list[int]] = [[] for _ in range(n * S)]
        for s in range(S):
            for t in range(S):
                if slot_rec[s] != slot_rec[t]:
                    continue
                for i in range(n):
                    if not fits[i, s]:
                        continue
                    for j in range(n):
                        if j == i or not fits[j, t]:
                            continue
                        if _boxes_overlap(
                            self.objects[i].footprint, tuple(self.positions[s]),
                            self.objects[j].footprint, tuple(self.positions[t]),
                        ):
                            conflicts[i * S + s].append(j * S + t)
        self.conflicts = conflicts

    def action(self, flat: int) -> Action:
        i, s = divmod(flat, self.n_slots)
        rec = self.receptacles[self.slot_receptacle[s]]
        return (self.objects[i].id, rec.id, tuple(float(v) for v in self.positions[s]))

    def placement(self, flat: int) -> Placement:
        return Placement(*self.action(flat))

    def flat(self, object_id: str, receptacle_id: str, slot: int) -> int:
        return self.object_pos[object_id] * self.n_slots + self.slot_lookup[(receptacle_id, slot)]


def _grid(rec: ReceptacleSpec) -> list[Vec3]:
    g = rec.grid_resolution
    s = rec.surface
    cw, cd = s.w / g, s.d / g
    return [(s.x + (ix + 0.5) * cw, s.y + (iy + 0.5) * cd, s.z) for iy in range(g) for ix in range(g)]


def _contained(footprint: Vec3, position: Sequence[float], surface: Surface) -> bool:
    w, d, _ = footprint
    x, y, z = position
    return (
        x - w / 2 >= surface.x - GEOM_EPS
        and x + w / 2 <= surface.x + surface.w + GEOM_EPS
        and y - d / 2 >= surface.y - GEOM_EPS
        and y + d / 2 <= surface.y + surface.d + GEOM_EPS
        and abs(z - surface.z) <= GEOM_EPS
    )


def _boxes_overlap(fa: Vec3, pa: Sequence[float], fb: Vec3, pb: Sequence[float]) -> bool:
    """Axis-aligned 3D intersection with positive volume; touching faces do not count."""
    for axis in range(2):
        lo_a, hi_a = pa[axis] - fa[axis] / 2, pa[axis] + fa[axis] / 2
        lo_b, hi_b = pb[axis] - fb[axis] / 2, pb[axis] + fb[axis] / 2
        if not (lo_a < hi_b - GEOM_EPS and lo_b < hi_a - GEOM_EPS):
            return False
    # boxes rest on the surface: z spans [z, z + height]
    lo_a, hi_a = pa[2], pa[2] + fa[2]
    lo_b, hi_b = pb[2], pb[2] + fb[2]
    return lo_a < hi_b - GEOM_EPS and lo_b < hi_a - GEOM_EPS


def _check_refs(scene: SceneDescription, x: Arrangement) -> None:
    if x.scene_ref != scene.id:
        raise SceneReferenceError(f"arrangement belongs to scene {x.scene_ref!r}, not {scene.id!r}")
    for p in x.placements:
        scene.object(p.object_id)
        scene.receptacle(p.receptacle_id)


def validate_arrangement(scene: SceneDescription, x: Arrangement) -> Validity:
    """Check unique assignment, surface containment and non-overlap.

    Returns a :class:`Validity` that is truthy when the arrangement is
    feasible; otherwise every violation is listed with the offending ids.
    Raises :class:`SceneReferenceError` for ids outside the scene.
    """
    _check_refs(scene, x)
    violations: list[Violation] = []

    counts: dict[str, int] = {}
    for p in x.placements:
        counts[p.object_id] = counts.get(p.object_id, 0) + 1
    for oid in sorted(k for k, c in counts.items() if c > 1):
        violations.append(Violation("duplicate assignment", (oid,), f"object {oid!r} placed {counts[oid]} times"))

    for p in x.placements:
        obj = scene.object(p.object_id)
        rec = scene.receptacle(p.receptacle_id)
        if not _contained(obj.footprint, p.position, rec.surface):
            violations.append(
                Violation("containment", (p.object_id, p.receptacle_id),
                          f"object {p.object_id!r} is not contained in surface of {p.receptacle_id!r}")
            )

    ps = sorted(x.placements, key=lambda p: (p.object_id, p.receptacle_id, p.position))
    for a in range(len(ps)):
        for b in range(a + 1, len(ps)):
            pa, pb = ps[a], ps[b]
            if pa.receptacle_id != pb.receptacle_id or pa.object_id == pb.object_id:
                continue
            if _boxes_overlap(scene.object(pa.object_id).footprint, pa.position,
                              scene.object(pb.object_id).footprint, pb.position):
                violations.append(
                    Violation("overlap", (pa.object_id, pb.object_id),
                              f"objects {pa.object_id!r} and {pb.object_id!r} overlap on {pa.receptacle_id!r}")
                )
    return Validity(tuple(violations))


def candidate_slots(scene: SceneDescription, receptacle_id: str) -> list[Vec3]:
    """Cell centers of the receptacle's slot grid, row-major (x fastest)."""
    return _grid(scene.receptacle(receptacle_id))


def admissible_actions(scene: SceneDescription, x: Arrangement) -> list[Action]:
    """Every (unplaced object, receptacle, slot position) that keeps ``x`` feasible."""
    if not validate_arrangement(scene, x).ok:
        raise PreconditionError("admissible_actions requires a feasible arrangement")
    idx = scene.index
    placed = x.placed_ids()
    by_rec: dict[str, list[Placement]] = {}
    for p in x.placements:
        by_rec.setdefault(p.receptacle_id, []).append(p)

    actions: list[Action] = []
    for i, obj in enumerate(idx.objects):
        if obj.id in placed:
            continue
        for s in range(idx.n_slots):
            if not idx.fits[i, s]:
                continue
            rec = idx.receptacles[idx.slot_receptacle[s]]
            pos = tuple(float(v) for v in idx.positions[s])
            if any(
                _boxes_overlap(obj.footprint, pos, scene.object(q.object_id).footprint, q.position)
                for q in by_rec.get(rec.id, ())
            ):
                continue
            actions.append((obj.id, rec.id, pos))
    return actions


def jaccard_similarity(a: Arrangement, b: Arrangement) -> float:
    """Intersection over union of (object, receptacle) pairs; 1.0 when both are empty."""
    if a.scene_ref != b.scene_ref:
        raise ComparisonError(f"cannot compare arrangements of scenes {a.scene_ref!r} and {b.scene_ref!r}")
    sa = {(p.object_id, p.receptacle_id) for p in a.placements}
    sb = {(p.object_id, p.receptacle_id) for p in b.placements}
    union = sa | sb
    if not union:
        return 1.0
    return len(sa & sb) / len(union)


# ---------------------------------------------------------------------------
# structured-text documents
# ---------------------------------------------------------------------------


def scene_from_dict(doc: Mapping[str, Any]) -> SceneDescription:
    try:
        objects = [
            ObjectSpec(
                id=str(o["id"]),
                name=str(o.get("name", o["id"])),
                footprint=tuple(float(v) for v in o["footprint"]),
                usage_frequency=float(o.get("usage_frequency", 0.0)),
            )
            for o in doc["objects"]
        ]
        receptacles = [
            ReceptacleSpec(
                id=str(r["id"]),
                name=str(r.get("name", r["id"])),
                surface=Surface(**{k: float(r["surface"][k]) for k in ("x", "y", "w", "d", "z")}),
                accessibility=float(r.get("accessibility", 0.0)),
                grid_resolution=int(r.get("grid_resolution", 1)),
            )
            for r in doc["receptacles"]
        ]
        return SceneDescription(str(doc["id"]), tuple(objects), tuple(receptacles), str(doc.get("room", "")))
    except (KeyError, TypeError, ValidationError) as exc:
        raise SceneLoadError(f"malformed scene document: {exc}") from exc


def scene_to_dict(scene: SceneDescription) -> dict[str, Any]:
    doc: dict[str, Any] = {"id": scene.id}
    if scene.room:
        doc["room"] = scene.room
    doc["objects"] = [
        {"id": o.id, "name": o.name, "footprint": list(o.footprint), "usage_frequency": o.usage_frequency}
        for o in scene.objects
    ]
    doc["receptacles"] = [
        {
            "id": r.id,
            "name": r.name,
            "surface": {"x": r.surface.x, "y": r.surface.y, "w": r.surface.w, "d": r.surface.d, "z": r.surface.z},
            "accessibility": r.accessibility,
            "grid_resolution": r.grid_resolution,
        }
        for r in scene.receptacles
    ]
    return doc


def arrangement_from_dict(doc: Mapping[str, Any]) -> Arrangement:
    try:
        placements = tuple(
            Placement(str(p["object_id"]), str(p["receptacle_id"]), tuple(float(v) for v in p["position"]))
            for p in doc["placements"]
        )
        return Arrangement(str(doc["scene_ref"]), placements)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed arrangement document: {exc}") from exc


def arrangement_to_dict(x: Arrangement) -> dict[str, Any]:
    return {
        "scene_ref": x.scene_ref,
        "placements": [
            {"object_id": p.object_id, "receptacle_id": p.receptacle_id, "position": list(p.position)}
            for p in x.placements
        ],
    }


def read_json(path: str | Path) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc


def write_json(path: str | Path, doc: Any) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=False)
        fh.write("\n")


def load_scene(path: str | Path) -> SceneDescription:
    return scene_from_dict(read_json(path))


def load_arrangement(path: str | Path) -> Arrangement:
    return arrangement_from_dict(read_json(path))


def arrangement_from_actions(scene_ref: str, actions: Iterable[Action]) -> Arrangement:
    return Arrangement(scene_ref, tuple(Placement(*a) for a in actions))
