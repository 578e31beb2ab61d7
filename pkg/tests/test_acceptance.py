"""Acceptance suite: one test per criterion, each reporting a single PASS/FAIL line.

The lines are printed as the tests run (visible with ``-s``) and repeated in
the terminal summary. Run this file directly with ``python`` to execute the
suite on its own.
"""

from __future__ import annotations

import json
import random
import socket
import time

import pytest
from builders import FIXTURES, PROFILES, obj, random_instance, rec, scene
from conftest import ACCEPTANCE_LINES, NetworkAttempt
from formula_cases import ACTUAL, UCB_CHOICES
from hand_derived import EXPECTED

from prefarrange.cli import main, read_payload
from prefarrange.constructs import (
    CommonsensePriorTable,
    PreferenceWeights,
    PriorBundle,
    SemanticAffinities,
    SpatialPriors,
    reward,
)
from prefarrange.errors import SceneLoadError
from prefarrange.planner import PlannerConfig, plan, receptacle_optima, solve_exact
from prefarrange.priors import (
    DemonstrationSet,
    estimate_affinities,
    load_bundle,
    load_likert,
    weights_from_likert,
)
from prefarrange.scene import Arrangement, Placement, admissible_actions, load_scene, read_json

CASES = FIXTURES / "case_tables"


def report(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {n} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def _quiet_main(argv, capsys):
    rc = main([str(a) for a in argv])
    capsys.readouterr()
    return rc


def test_criterion_1_case_accuracies(tmp_path, capsys):
    t0 = time.perf_counter()
    args = ["eval", "--out", tmp_path, "--no-plot"]
    for p in PROFILES:
        args += ["--pred", CASES / f"{p}_pred.json", "--gt", CASES / f"{p}_gt.json", "--label", p.upper()]
    rc = _quiet_main(args, capsys)
    elapsed = time.perf_counter() - t0
    doc = read_payload(tmp_path / "report.json")
    accs = [c["object_accuracy"] for c in doc["cases"]]
    ok = rc == 0 and accs == [0.60, 0.40, 0.80, 0.90] and doc["mean_accuracy"] == 0.675 and elapsed < 1.0
    report(1, "reference case accuracies", ok,
           f"accuracies {accs}, mean {doc['mean_accuracy']}, {elapsed:.2f}s")


def test_criterion_2_profile_fixtures():
    t0 = time.perf_counter()
    parts, ok = [], True
    for pid in PROFILES:
        d = FIXTURES / "profiles" / pid
        sc, b = load_scene(d / "scene.json"), load_bundle(d / "bundle.json")
        expected = read_json(d / "expected.json")["assignment"]
        key = tuple(expected[o] for o in sorted(expected))

        x, best = solve_exact(sc, b)
        exact_ok = x.assignment() == expected
        optima = receptacle_optima(sc, b)
        margin = optima[key] - max(v for k, v in optima.items() if k != key)
        res = plan(sc, b, cfg=PlannerConfig(iterations=20_000, seed=0))
        got = res.final.assignment()
        matches = sum(got[o] == r for o, r in expected.items())
        ok &= exact_ok and margin > 0 and matches >= 9
        parts.append(f"{pid.upper()} exact={'ok' if exact_ok else 'MISMATCH'} margin={margin:.4f} plan={matches}/10")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 120
    report(2, "synthetic profile reproduction", ok, "; ".join(parts) + f"; {elapsed:.1f}s")


def test_criterion_3_oracle_equivalence():
    t0 = time.perf_counter()
    hits = 0
    for k in range(50):
        r = random.Random(10_000 + k)
        m = r.randint(1, 3)
        n = r.randint(1, min(4, m))  # single-slot receptacles hold one object each
        sc, b = random_instance(20_000 + k, n, m)
        _, best = solve_exact(sc, b)
        got = plan(sc, b, cfg=PlannerConfig(iterations=20_000, seed=k)).final_reward
        hits += got >= 0.999 * best
    elapsed = time.perf_counter() - t0
    ok = hits >= 48 and elapsed < 180
    report(3, "MCTS vs exact optimum", ok, f"{hits}/50 within 0.999 of optimum, {elapsed:.1f}s")


def _range_scene(r: random.Random, s: int):
    n = r.randint(1, 5)
    return scene(
        [obj(f"o{i}", r.uniform(0.05, 0.3), r.uniform(0.05, 0.3), r.uniform(0.05, 0.5), r.uniform(0, 20)) for i in range(n)]
        + [obj("hot", 0.1, 0.1, 0.1, 25.0)],
        [rec(f"r{j}", r.uniform(0, 6), r.uniform(0, 6), r.uniform(0.4, 1.2), r.uniform(0.4, 1.2), r.uniform(0, 2),
             r.random(), r.randint(1, 3)) for j in range(r.randint(1, 4))],
        f"range{s}",
    )


def _range_scenes():
    out = []
    for s in range(25):
        r = random.Random(s)
        while True:
            try:
                sc = _range_scene(r, s)
                break
            except SceneLoadError:
                continue  # some object fits no slot; draw again
        ids = sc.object_ids
        b = PriorBundle(
            SpatialPriors({o: (r.uniform(-5, 10), r.uniform(-5, 10), r.uniform(-1, 3)) for o in ids}),
            SemanticAffinities({(a, c): r.choice([-1.0, 1.0, r.uniform(-1, 1)]) for a in ids for c in ids if a < c}),
            CommonsensePriorTable({(o, q.id): r.random() for o in ids for q in sc.receptacles}),
            PreferenceWeights.from_sequence([0.25, 0.25, 0.25, 0.25]),
        )
        out.append((sc, b))
    return out


def test_criterion_4_score_ranges():
    rng = random.Random(4)
    cases = _range_scenes()
    violations = checked = 0
    for _ in range(10_000):
        sc, b = rng.choice(cases)
        x = Arrangement(sc.id)
        for _ in range(rng.randint(0, len(sc.objects))):
            acts = admissible_actions(sc, x)
            if not acts:
                break
            x = x.apply(rng.choice(acts))
        raw = [rng.random() for _ in range(4)]
        w = PreferenceWeights.from_sequence([v / sum(raw) for v in raw[:3]] + [1 - sum(raw[:3]) / sum(raw)])
        scores, r = reward(sc, x, b, w)
        violations += sum(not (0.0 <= v <= 1.0) for v in (*scores.as_tuple(), r))
        checked += 1
    report(4, "score ranges", violations == 0, f"{checked} arrangements, {violations} out-of-range values")


def test_criterion_5_formula_spot_checks():
    bad = [k for k in EXPECTED if abs(ACTUAL[k]() - EXPECTED[k]) > 1e-9]
    bad += [k for k, (run, want) in UCB_CHOICES.items() if run() != want]
    n = len(EXPECTED) + len(UCB_CHOICES)
    report(5, "formula spot checks", not bad and set(ACTUAL) == set(EXPECTED),
           f"{n - len(bad)}/{n} within 1e-9" + (f" (failed: {', '.join(bad)})" if bad else ""))


def test_criterion_6_estimator_properties():
    w = weights_from_likert(load_likert(FIXTURES / "profiles" / "p32" / "likert.json")).as_tuple()

    def demo(same):
        rb = "A" if same else "B"
        return Arrangement("s", (Placement("i", "A", (0, 0, 0)), Placement("j", rb, (0, 0, 0))))

    sig = {c: estimate_affinities(DemonstrationSet("s", [demo(k < c * 4) for k in range(4)]), 4).get("i", "j")
           for c in (1.0, 0.25, 0.0)}
    ok = w == (0.25, 0.25, 0.25, 0.25) and sig == {1.0: 1.0, 0.25: 0.0, 0.0: -1.0}
    report(6, "estimator properties", ok, f"P32 weights {list(w)}; sigma at c=1, 1/M, 0: {[sig[1.0], sig[0.25], sig[0.0]]}")


def test_criterion_7_determinism(tmp_path, capsys):
    d = FIXTURES / "profiles" / "p24"
    payloads = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        rc = _quiet_main(["plan", "--scene", d / "scene.json", "--bundle", d / "bundle.json",
                          "--seed", 7, "--iterations", 3000, "--out", out], capsys)
        doc = json.loads((out / "plan.json").read_text())
        assert set(doc) == {"meta", "result"}
        payloads.append((rc, json.dumps(doc["result"], indent=2).encode(), (out / "trace.csv").read_bytes()))
    ok = payloads[0] == payloads[1] and payloads[0][0] == 0
    report(7, "plan determinism", ok, "identical PlanResult payload and trace" if ok else "outputs differ")


def test_criterion_8_offline(tmp_path, capsys):
    blocked = False
    try:
        socket.create_connection(("example.com", 443), timeout=1)
    except NetworkAttempt:
        blocked = True
    d = FIXTURES / "profiles" / "p23"
    rc1 = _quiet_main(["--offline", "fetch-commonsense", "--scene", d / "scene.json",
                       "--stub", d / "commonsense.json", "--out", tmp_path], capsys)
    rc2 = _quiet_main(["plan", "--scene", d / "scene.json", "--bundle", d / "bundle.json",
                       "--iterations", 500, "--out", tmp_path], capsys)
    ok = blocked and rc1 == 0 and rc2 == 0
    report(8, "offline guarantee", ok,
           f"sockets blocked={blocked}, stub fetch rc={rc1}, plan rc={rc2}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
