"""Monte Carlo tree search over sequential placements, plus an exhaustive exact solver.

Search runs on flat action indices ``a = object_index * n_slots + slot`` of
the scene's :class:`~prefarrange.scene.SceneIndex`; increasing flat index is
the deterministic (object id, receptacle id, slot index) action order used
for every tie-break.
"""

from __future__ import annotations

import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, NamedTuple, Sequence

from .constructs import ConstructScores, IncrementalScorer, PreferenceWeights, PriorBundle, reward
from .errors import CapacityError, PlanningError, PreconditionError, ValidationError
from .scene import Action, Arrangement, Placement, SceneDescription, arrangement_to_dict, validate_arrangement

DEFAULT_C = 1 / math.sqrt(2)
MAX_EXACT_LEAVES = 10**7
_TIE_EPS = 1e-12
_SEED_STRIDE = 0x9E3779B97F4A7C15


@dataclass(frozen=True)
class PlannerConfig:
    """Search settings.

    ``refine_iterations`` is the visit budget each node on the extracted path
    (below the root) is topped up to before its best action is read off;
    ``None`` means ``iterations // N``. ``root_trees`` > 1 grows that many
    independently seeded trees and sums their statistics before extraction.
    """

    iterations: int = 10_000
    exploration_c: float = DEFAULT_C
    seed: int = 0
    rollout_policy: str = "uniform"
    refine_iterations: int | None = None
    root_trees: int = 1
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")
        if not self.exploration_c > 0:
            raise ValidationError("exploration_c must be > 0")
        if self.rollout_policy != "uniform":
            raise ValidationError(f"unknown rollout policy {self.rollout_policy!r}")
        if self.refine_iterations is not None and self.refine_iterations < 0:
            raise ValidationError("refine_iterations must be >= 0")
        if self.root_trees < 1 or self.jobs < 1:
            raise ValidationError("root_trees and jobs must be >= 1")
        if not (0 <= self.seed < 2**64):
            raise ValidationError("seed must be a 64-bit unsigned integer")


class SearchNode:
    """One partial arrangement in the search tree.

    ``n`` and ``total`` are the visit count and accumulated rollout return of
    the edge leading here, i.e. n(X, a) and TotalReward(X, a) as seen from the
    parent; for the root, ``n`` is n(X).
    """

    __slots__ = ("action", "n", "total", "children", "actions")

    def __init__(self, action: int | None = None) -> None:
        self.action = action
        self.n = 0
        self.total = 0.0
        self.children: dict[int, SearchNode] = {}
        self.actions: list[int] | None = None

    @property
    def q(self) -> float:
        return self.total / self.n if self.n else 0.0

    def __getstate__(self):
        return (self.action, self.n, self.total, self.children, self.actions)

    def __setstate__(self, state) -> None:
        self.action, self.n, self.total, self.children, self.actions = state

    def __repr__(self) -> str:
        return f"SearchNode(action={self.action}, n={self.n}, q={self.q:.4f}, children={len(self.children)})"


def select_ucb(node: SearchNode, c: float) -> int:
    """UCB1 tree policy.

    Unvisited actions come first, in action order; otherwise the argmax of
    ``Q + c * sqrt(ln n(X) / n(X, a))`` with ties to the earlier action.
    """
    if not node.actions:
        raise PreconditionError("select_ucb called on a terminal node")
    log_n = math.log(node.n) if node.n > 0 else 0.0
    best, best_v = None, -math.inf
    for a in node.actions:
        child = node.children.get(a)
        if child is None or child.n == 0:
            return a
        v = child.total / child.n + c * math.sqrt(log_n / child.n)
        if v > best_v:
            best, best_v = a, v
    return best


class _State:
    __slots__ = ("placed_obj", "blocked", "placed", "sums")

    def copy(self) -> _State:
        s = _State.__new__(_State)
        s.placed_obj = self.placed_obj[:]
        s.blocked = self.blocked[:]
        s.placed = self.placed[:]
        s.sums = self.sums[:]
        return s


class RolloutOutcome(NamedTuple):
    value: float
    dead_end: bool


class _Engine:
    """Mutable search machinery shared by MCTS and the exact solver."""

    def __init__(self, scene: SceneDescription, scorer: IncrementalScorer) -> None:
        idx = scene.index
        self.scene = scene
        self.index = idx
        self.scorer = scorer
        self.N = idx.n_objects
        self.S = idx.n_slots
        S = self.S
        self.fits_flat = [[i * S + s for s in range(S) if idx.fits[i, s]] for i in range(self.N)]
        self.conflicts = idx.conflicts

    def empty_state(self) -> _State:
        st = _State()
        st.placed_obj = [False] * self.N
        st.blocked = [0] * (self.N * self.S)
        st.placed = []
        st.sums = self.scorer.empty()
        return st

    def apply(self, st: _State, a: int) -> None:
        st.placed_obj[a // self.S] = True
        blocked = st.blocked
        for b in self.conflicts[a]:
            blocked[b] += 1
        self.scorer.add(st.sums, st.placed, a)
        st.placed.append(a)

    def state_for(self, prefix: Sequence[int]) -> _State:
        st = self.empty_state()
        for a in prefix:
            self.apply(st, a)
        return st

    def admissible(self, st: _State) -> list[int]:
        blocked = st.blocked
        out = []
        for i in range(self.N):
            if st.placed_obj[i]:
                continue
            out.extend(a for a in self.fits_flat[i] if not blocked[a])
        return out

    def is_complete(self, st: _State) -> bool:
        return len(st.placed) == self.N

    def rollout(self, st: _State, rng: random.Random) -> RolloutOutcome:
        """Uniform random completion; mutates ``st``.

        Returns the mean of the reward after each rollout action, or the
        reward of ``st`` itself when it is already complete. Steps that cannot
        be taken because the rollout painted itself into a corner score 0.
        """
        remaining = self.N - len(st.placed)
        scorer = self.scorer
        if remaining == 0:
            return RolloutOutcome(scorer.value(st.sums), False)
        S = self.S
        placed_obj, blocked = st.placed_obj, st.blocked
        cand = [a for i in range(self.N) if not placed_obj[i] for a in self.fits_flat[i]]
        total = 0.0
        for _ in range(remaining):
            a = -1
            while cand:
                k = rng.randrange(len(cand))
                b = cand[k]
                if placed_obj[b // S] or blocked[b]:
                    cand[k] = cand[-1]
                    cand.pop()
                    continue
                a = b
                break
            if a < 0:
                return RolloutOutcome(total / remaining, True)
            self.apply(st, a)
            total += scorer.value(st.sums)
        return RolloutOutcome(total / remaining, False)

    def iterate(self, node: SearchNode, base: _State, above: Sequence[SearchNode], c: float, rng: random.Random) -> None:
        """One select / expand / rollout / backpropagate pass starting at ``node``.

        ``above`` are the ancestors of ``node`` up to the tree root; they are
        credited too so every node's statistics stay the sum of its children's.
        """
        st = base.copy()
        path = [node]
        while True:
            if node.actions is None:
                node.actions = self.admissible(st)
            if not node.actions:
                break
            a = select_ucb(node, c)
            self.apply(st, a)
            child = node.children.get(a)
            if child is None:
                child = SearchNode(a)
                node.children[a] = child
                path.append(child)
                break
            node = child
            path.append(child)
        value = self.rollout(st, rng).value
        for nd in above:
            nd.n += 1
            nd.total += value
        for nd in path:
            nd.n += 1
            nd.total += value


@dataclass(frozen=True)
class StepRecord:
    step: int
    object_id: str
    receptacle_id: str
    position: tuple[float, float, float]
    scores: ConstructScores
    reward: float


@dataclass(frozen=True)
class PlanResult:
    scene_ref: str
    trajectory: tuple[Action, ...]
    final: Arrangement
    reward_trace: tuple[StepRecord, ...]
    iterations_used: int
    seed: int
    weights: PreferenceWeights
    config: dict[str, Any] = field(default_factory=dict)
    mode: str = "mcts"

    @property
    def final_reward(self) -> float:
        return self.reward_trace[-1].reward if self.reward_trace else 1.0

    @property
    def final_scores(self) -> ConstructScores:
        return self.reward_trace[-1].scores if self.reward_trace else ConstructScores(1.0, 1.0, 1.0, 1.0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "scene_ref": self.scene_ref,
            "mode": self.mode,
            "weights": list(self.weights.as_tuple()),
            "config": self.config,
            "seed": self.seed,
            "iterations_used": self.iterations_used,
            "trajectory": [
                {"step": k + 1, "object_id": o, "receptacle_id": r, "position": list(p)}
                for k, (o, r, p) in enumerate(self.trajectory)
            ],
            "final": arrangement_to_dict(self.final),
            "reward_trace": [
                {
                    "step": s.step,
                    "object_id": s.object_id,
                    "receptacle_id": s.receptacle_id,
                    "f1": s.scores.f1,
                    "f2": s.scores.f2,
                    "f3": s.scores.f3,
                    "f4": s.scores.f4,
                    "reward": s.reward,
                }
                for s in self.reward_trace
            ],
            "final_reward": self.final_reward,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> PlanResult:
        from .scene import arrangement_from_dict

        trajectory = tuple(
            (t["object_id"], t["receptacle_id"], tuple(float(v) for v in t["position"])) for t in doc["trajectory"]
        )
        trace = tuple(
            StepRecord(
                s["step"], s["object_id"], s["receptacle_id"], tuple(trajectory[k][2]),
                ConstructScores(s["f1"], s["f2"], s["f3"], s["f4"]), s["reward"],
            )
            for k, s in enumerate(doc["reward_trace"])
        )
        return cls(
            scene_ref=doc["scene_ref"],
            trajectory=trajectory,
            final=arrangement_from_dict(doc["final"]),
            reward_trace=trace,
            iterations_used=int(doc["iterations_used"]),
            seed=int(doc["seed"]),
            weights=PreferenceWeights.from_sequence(doc["weights"]),
            config=dict(doc.get("config", {})),
            mode=doc.get("mode", "mcts"),
        )


def _trace(scene: SceneDescription, priors: PriorBundle, w: PreferenceWeights, actions: Sequence[Action]) -> tuple[StepRecord, ...]:
    x = Arrangement(scene.id)
    out = []
    for k, act in enumerate(actions):
        x = x.apply(act)
        scores, r = reward(scene, x, priors, w)
        out.append(StepRecord(k + 1, act[0], act[1], act[2], scores, r))
    return tuple(out)


def _flat_from_arrangement(scene: SceneDescription, x: Arrangement) -> list[int]:
    idx = scene.index
    out = []
    for p in x.placements:
        i = idx.object_pos[p.object_id]
        for s in range(idx.n_slots):
            if idx.receptacles[idx.slot_receptacle[s]].id != p.receptacle_id:
                continue
            if math.dist(idx.positions[s], p.position) <= 1e-9:
                out.append(i * idx.n_slots + s)
                break
        else:
            raise PreconditionError(f"placement of {p.object_id!r} is not on a candidate slot")
    return out


def rollout(
    scene: SceneDescription,
    state: Arrangement,
    priors: PriorBundle,
    w: PreferenceWeights,
    rng: random.Random,
) -> RolloutOutcome:
    """Complete ``state`` with uniform random admissible actions and return the mean step reward."""
    if not validate_arrangement(scene, state).ok:
        raise PreconditionError("rollout requires a feasible state")
    engine = _Engine(scene, IncrementalScorer(scene, priors, w))
    st = engine.state_for(_flat_from_arrangement(scene, state))
    return engine.rollout(st, rng)


def _derived_seed(seed: int, k: int) -> int:
    return (seed + k * _SEED_STRIDE) % 2**64


def _grow(scene: SceneDescription, priors: PriorBundle, w: PreferenceWeights, cfg: PlannerConfig, seed: int) -> SearchNode:
    engine = _Engine(scene, IncrementalScorer(scene, priors, w))
    rng = random.Random(seed)
    root = SearchNode()
    base = engine.empty_state()
    for _ in range(cfg.iterations):
        engine.iterate(root, base, (), cfg.exploration_c, rng)
    return root


def merge_trees(into: SearchNode, other: SearchNode) -> SearchNode:
    """Sum ``other``'s statistics into ``into`` node by node."""
    into.n += other.n
    into.total += other.total
    if into.actions is None:
        into.actions = other.actions
    for a, child in other.children.items():
        mine = into.children.get(a)
        if mine is None:
            into.children[a] = child
        else:
            merge_trees(mine, child)
    if into.children:
        into.children = dict(sorted(into.children.items()))
    return into


def search_tree(
    scene: SceneDescription, priors: PriorBundle, w: PreferenceWeights, cfg: PlannerConfig
) -> SearchNode:
    """Grow the (possibly root-parallel) search tree without extracting a plan."""
    seeds = [_derived_seed(cfg.seed, k) for k in range(cfg.root_trees)]
    if cfg.root_trees > 1 and cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.jobs, cfg.root_trees)) as pool:
            trees = list(pool.map(_grow, *zip(*[(scene, priors, w, cfg, s) for s in seeds])))
    else:
        trees = [_grow(scene, priors, w, cfg, s) for s in seeds]
    root = trees[0]
    for t in trees[1:]:
        merge_trees(root, t)
    return root


def plan(
    scene: SceneDescription,
    priors: PriorBundle,
    w: PreferenceWeights | None = None,
    cfg: PlannerConfig | None = None,
) -> PlanResult:
    """Search for an arrangement maximizing the weighted reward.

    After the main search the plan is read off level by level as the action
    with the highest mean return. Below the root, each node on that path is
    first topped up with further iterations (credited to the whole path) until
    it has ``refine_iterations`` visits and every admissible action has been
    tried once; those iterations count toward ``iterations_used``.
    """
    cfg = cfg or PlannerConfig()
    w = priors.weights if w is None else w
    scorer = IncrementalScorer(scene, priors, w)
    engine = _Engine(scene, scorer)
    N = engine.N
    refine = cfg.refine_iterations if cfg.refine_iterations is not None else cfg.iterations // max(N, 1)

    root = search_tree(scene, priors, w, cfg)
    rng = random.Random(_derived_seed(cfg.seed, cfg.root_trees))

    node = root
    prefix: list[int] = []
    above: list[SearchNode] = []
    for depth in range(N):
        st = engine.state_for(prefix)
        if node.actions is None:
            node.actions = engine.admissible(st)
        if not node.actions:
            raise PlanningError(f"dead end after {depth} placements: remaining objects cannot be placed")
        if depth > 0:
            unvisited = sum(1 for a in node.actions if a not in node.children)
            for _ in range(max(refine - node.n, unvisited)):
                engine.iterate(node, st, above, cfg.exploration_c, rng)
        a = _best_action(engine, node, st)
        prefix.append(a)
        above.append(node)
        node = node.children[a]

    actions = tuple(engine.index.action(a) for a in prefix)
    final = Arrangement(scene.id, tuple(Placement(*act) for act in actions))
    if not validate_arrangement(scene, final).ok:
        raise PlanningError("extracted arrangement is infeasible")
    return PlanResult(
        scene_ref=scene.id,
        trajectory=actions,
        final=final,
        reward_trace=_trace(scene, priors, w, actions),
        iterations_used=root.n,
        seed=cfg.seed,
        weights=w,
        config=asdict(cfg),
    )


def _best_action(engine: _Engine, node: SearchNode, st: _State) -> int:
    """Highest mean return; a child that is a dead end yields to the most visited live child."""
    visited = [(a, node.children[a]) for a in node.actions if a in node.children and node.children[a].n > 0]
    if not visited:
        raise PlanningError("no visited action to extract")
    best_a, best_q = None, -math.inf
    for a, child in visited:
        if child.q > best_q:
            best_a, best_q = a, child.q
    if not _dead_end(engine, st, best_a):
        return best_a
    live = [(a, c) for a, c in visited if not _dead_end(engine, st, a)]
    if not live:
        raise PlanningError("every explored action leads to a dead end")
    return max(live, key=lambda ac: (ac[1].n, -ac[0]))[0]


def _dead_end(engine: _Engine, st: _State, a: int) -> bool:
    nxt = st.copy()
    engine.apply(nxt, a)
    return not engine.is_complete(nxt) and not engine.admissible(nxt)


def count_leaves(scene: SceneDescription, cap: int = MAX_EXACT_LEAVES) -> int:
    """Number of feasible complete slot assignments, counting stops just past ``cap``."""
    idx = scene.index
    S = idx.n_slots
    fits = [[i * S + s for s in range(S) if idx.fits[i, s]] for i in range(idx.n_objects)]
    if any(not f for f in fits):
        return 0
    return _count(idx, fits, cap)


def _count(idx, fits, cap) -> int:
    blocked = [0] * (idx.n_objects * idx.n_slots)
    conflicts = idx.conflicts
    n = idx.n_objects
    count = 0

    def dfs(i: int) -> bool:
        nonlocal count
        if i == n:
            count += 1
            return count > cap
        for a in fits[i]:
            if blocked[a]:
                continue
            for b in conflicts[a]:
                blocked[b] += 1
            stop = dfs(i + 1)
            for b in conflicts[a]:
                blocked[b] -= 1
            if stop:
                return True
        return False

    dfs(0)
    return count


def _exhaustive(engine: _Engine, visit) -> None:
    """Depth-first walk over every feasible complete assignment, calling ``visit(state)`` at leaves."""
    N = engine.N
    scorer = engine.scorer
    st = engine.empty_state()
    fits, conflicts, blocked = engine.fits_flat, engine.conflicts, st.blocked

    def dfs(i: int) -> None:
        if i == N:
            visit(st)
            return
        for a in fits[i]:
            if blocked[a]:
                continue
            saved = st.sums[:]
            for b in conflicts[a]:
                blocked[b] += 1
            scorer.add(st.sums, st.placed, a)
            st.placed.append(a)
            dfs(i + 1)
            st.placed.pop()
            st.sums = saved
            for b in conflicts[a]:
                blocked[b] -= 1

    dfs(0)


def _guard(scene: SceneDescription, max_leaves: int) -> None:
    leaves = count_leaves(scene, max_leaves)
    if leaves > max_leaves:
        raise CapacityError(f"more than {max_leaves} feasible leaf states; refusing exhaustive search")
    if leaves == 0:
        raise PlanningError("scene admits no feasible complete arrangement")


def solve_exact(
    scene: SceneDescription,
    priors: PriorBundle,
    w: PreferenceWeights | None = None,
    max_leaves: int = MAX_EXACT_LEAVES,
) -> tuple[Arrangement, float]:
    """Exhaustive depth-first search over all feasible complete assignments.

    Objects are assigned in id order and slots tried in (receptacle id, slot)
    order, so among equal rewards the lexicographically first assignment wins.
    Refuses instances with more than ``max_leaves`` feasible leaves.
    """
    w = priors.weights if w is None else w
    scorer = IncrementalScorer(scene, priors, w)
    engine = _Engine(scene, scorer)
    if engine.N == 0:
        x = Arrangement(scene.id)
        return x, reward(scene, x, priors, w)[1]
    _guard(scene, max_leaves)

    best_v = -math.inf
    best: list[int] = []

    def visit(st: _State) -> None:
        nonlocal best_v, best
        v = scorer.value(st.sums)
        if v > best_v + _TIE_EPS:
            best_v, best = v, st.placed[:]

    _exhaustive(engine, visit)
    x = Arrangement(scene.id, tuple(engine.index.placement(a) for a in best))
    return x, reward(scene, x, priors, w)[1]


def receptacle_optima(
    scene: SceneDescription,
    priors: PriorBundle,
    w: PreferenceWeights | None = None,
    max_leaves: int = MAX_EXACT_LEAVES,
) -> dict[tuple[str, ...], float]:
    """Best reward for every distinct receptacle-level assignment (objects in id order).

    Used to check that an optimum is unique once slot positions are ignored.
    """
    w = priors.weights if w is None else w
    scorer = IncrementalScorer(scene, priors, w)
    engine = _Engine(scene, scorer)
    _guard(scene, max_leaves)
    idx = engine.index
    rec_of_flat = [idx.receptacles[idx.slot_receptacle[a % idx.n_slots]].id for a in range(idx.n_objects * idx.n_slots)]
    best: dict[tuple[str, ...], float] = {}

    def visit(st: _State) -> None:
        key = tuple(rec_of_flat[a] for a in st.placed)
        v = scorer.value(st.sums)
        if v > best.get(key, -math.inf):
            best[key] = v

    _exhaustive(engine, visit)
    return best


def exact_plan(
    scene: SceneDescription,
    priors: PriorBundle,
    w: PreferenceWeights | None = None,
    max_leaves: int = MAX_EXACT_LEAVES,
) -> PlanResult:
    """Wrap :func:`solve_exact` as a :class:`PlanResult` (trajectory in object id order)."""
    w = priors.weights if w is None else w
    x, _ = solve_exact(scene, priors, w, max_leaves)
    actions = tuple((p.object_id, p.receptacle_id, p.position) for p in x.placements)
    return PlanResult(
        scene_ref=scene.id,
        trajectory=actions,
        final=x,
        reward_trace=_trace(scene, priors, w, actions),
        iterations_used=0,
        seed=0,
        weights=w,
        config={"max_leaves": max_leaves},
        mode="exact",
    )
