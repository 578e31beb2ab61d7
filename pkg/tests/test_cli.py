import json

import pytest
from builders import FIXTURES, PROFILES, bundle, obj, rec, scene

from prefarrange.cli import main, read_payload
from prefarrange.planner import solve_exact
from prefarrange.priors import bundle_to_dict, commonsense_to_entries
from prefarrange.scene import scene_to_dict

CASES = FIXTURES / "case_tables"


def run(capsys, *argv):
    rc = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return rc, out, err


@pytest.fixture
def small(tmp_path):
    sc = scene([obj("mug", usage=4.0), obj("book", usage=1.0), obj("lamp", usage=2.0)],
               [rec("desk", w=1.0, d=0.5, access=0.9, grid=2), rec("shelf", x=1.5, w=0.5, d=0.5, z=1.2, access=0.3)], "study")
    b = bundle(sc, priors={"mug": (0.25, 0.125, 0.0), "book": (1.75, 0.25, 1.2), "lamp": (0.75, 0.125, 0.0)},
               sigma={("book", "lamp"): -0.5, ("book", "mug"): 0.2, ("lamp", "mug"): 0.6},
               cs={(o, r): 0.5 for o in sc.object_ids for r in sc.receptacle_ids}, w=(0.4, 0.3, 0.2, 0.1))
    (tmp_path / "scene.json").write_text(json.dumps(scene_to_dict(sc)))
    (tmp_path / "bundle.json").write_text(json.dumps(bundle_to_dict(b)))
    (tmp_path / "cs.json").write_text(json.dumps({"commonsense": commonsense_to_entries(b.commonsense)}))
    demo = {"scene_ref": "study", "placements": [
        {"object_id": "mug", "receptacle_id": "desk", "position": [0.25, 0.125, 0.0]},
        {"object_id": "lamp", "receptacle_id": "desk", "position": [0.75, 0.125, 0.0]},
        {"object_id": "book", "receptacle_id": "shelf", "position": [1.75, 0.25, 1.2]},
    ]}
    (tmp_path / "demos.json").write_text(json.dumps({"scene_ref": "study", "demonstrations": [demo]}))
    (tmp_path / "likert.json").write_text(json.dumps({"items": [4] * 12}))
    return sc, b, tmp_path


def case_args():
    args = []
    for p in PROFILES:
        args += ["--pred", CASES / f"{p}_pred.json", "--gt", CASES / f"{p}_gt.json", "--label", p.upper()]
    return args


def test_eval_reference_cases(capsys, tmp_path):
    rc, out, _ = run(capsys, "eval", "--out", tmp_path, *case_args())
    assert rc == 0
    report = read_payload(tmp_path / "report.json")
    assert [c["object_accuracy"] for c in report["cases"]] == [0.6, 0.4, 0.8, 0.9]
    assert report["mean_accuracy"] == 0.675
    assert "mean accuracy: 0.6750" in out
    assert (tmp_path / "accuracy.png").stat().st_size > 0
    rows = (tmp_path / "per_object.csv").read_text().splitlines()
    assert len(rows) == 41 and rows[0] == "case,object_id,predicted,ground_truth,match"


def test_eval_identical(capsys, tmp_path):
    gt = CASES / "p16_gt.json"
    rc, out, _ = run(capsys, "eval", "--out", tmp_path, "--no-plot", "--pred", gt, "--gt", gt)
    assert rc == 0 and read_payload(tmp_path / "report.json")["mean_accuracy"] == 1.0


def test_eval_without_cases_is_usage_error(capsys, tmp_path):
    rc, _, err = run(capsys, "eval", "--out", tmp_path)
    assert rc == 2 and err.startswith("error[E_USAGE]")


def test_eval_mismatched_scene(capsys, tmp_path):
    rc, _, err = run(capsys, "eval", "--out", tmp_path, "--pred", CASES / "p24_pred.json", "--gt", CASES / "p23_gt.json")
    assert rc == 1 and err.startswith("error[E_COMPARISON]")


def test_plan_twice_is_byte_identical(capsys, small):
    _, _, d = small
    payloads = []
    for k in range(2):
        out = d / f"run{k}"
        rc, text, _ = run(capsys, "--seed", 5, "plan", "--scene", d / "scene.json", "--bundle", d / "bundle.json",
                          "--iterations", 300, "--out", out)
        assert rc == 0 and "contribution" in text
        doc = json.loads((out / "plan.json").read_text())
        payloads.append((json.dumps(doc["result"]), (out / "trace.csv").read_bytes()))
    assert payloads[0] == payloads[1]


def test_global_flags_before_or_after_subcommand(capsys, small):
    _, _, d = small
    base = ["plan", "--scene", d / "scene.json", "--bundle", d / "bundle.json"]
    run(capsys, "--seed", 3, "--iterations", 50, "--out", d / "a", *base)
    run(capsys, *base, "--seed", 3, "--iterations", 50, "--out", d / "b")
    a = read_payload(d / "a" / "plan.json")
    b = read_payload(d / "b" / "plan.json")
    assert a == b and a["config"]["seed"] == 3 and a["config"]["iterations"] == 50


def test_plan_oracle_flag_uses_exact_solver(capsys, small):
    sc, b, d = small
    rc, _, _ = run(capsys, "plan", "--oracle", "--scene", d / "scene.json", "--bundle", d / "bundle.json", "--out", d / "o")
    res = read_payload(d / "o" / "plan.json")
    assert rc == 0 and res["mode"] == "exact"
    assert {p["object_id"]: p["receptacle_id"] for p in res["final"]["placements"]} == solve_exact(sc, b)[0].assignment()


def test_oracle_subcommand_and_render(capsys, small):
    _, _, d = small
    assert run(capsys, "oracle", "--scene", d / "scene.json", "--bundle", d / "bundle.json", "--out", d / "x")[0] == 0
    rc, out, _ = run(capsys, "render", "--scene", d / "scene.json", "--arrangement", d / "x" / "plan.json", "--out", d / "x")
    assert rc == 0 and "| desk" in out
    assert (d / "x" / "arrangement.svg").read_text().lstrip().startswith("<?xml")


def test_estimate_priors_uniform_likert(capsys, small):
    _, _, d = small
    rc, out, _ = run(capsys, "estimate-priors", "--scene", d / "scene.json", "--demos", d / "demos.json",
                     "--likert", d / "likert.json", "--commonsense", d / "cs.json", "--out", d / "est")
    assert rc == 0 and "spatial priors" in out
    doc = read_payload(d / "est" / "bundle.json")
    assert doc["weights"] == [0.25, 0.25, 0.25, 0.25]
    assert doc["spatial_priors"]["book"] == [1.75, 0.25, 1.2]


def test_estimate_priors_missing_object(capsys, small):
    _, _, d = small
    demos = json.loads((d / "demos.json").read_text())
    demos["demonstrations"][0]["placements"].pop()
    (d / "demos.json").write_text(json.dumps(demos))
    rc, _, err = run(capsys, "estimate-priors", "--scene", d / "scene.json", "--demos", d / "demos.json",
                     "--weights", "0.25,0.25,0.25,0.25", "--commonsense", d / "cs.json", "--out", d / "est")
    assert rc == 1 and "book" in err


def test_fetch_commonsense_offline(capsys, small):
    _, _, d = small
    rc, _, err = run(capsys, "--offline", "fetch-commonsense", "--scene", d / "scene.json", "--out", d / "cs")
    assert rc == 1 and "E_PRECONDITION" in err
    rc, _, _ = run(capsys, "--offline", "fetch-commonsense", "--scene", d / "scene.json", "--stub", d / "cs.json",
                   "--out", d / "cs")
    assert rc == 0 and len(read_payload(d / "cs" / "commonsense.json")["commonsense"]) == 6


def test_remote_without_credentials_fails_cleanly(capsys, small):
    _, _, d = small
    rc, _, err = run(capsys, "fetch-commonsense", "--scene", d / "scene.json", "--out", d / "cs")
    assert rc == 1 and "PREFARRANGE_ORACLE_KEY" in err


def test_no_credential_flag(capsys, small):
    _, _, d = small
    rc, _, _ = run(capsys, "fetch-commonsense", "--scene", d / "scene.json", "--api-key", "k")
    assert rc == 2


def test_profile_p16_plan_matches_predicted_column(capsys, tmp_path):
    d = FIXTURES / "profiles" / "p16"
    rc, _, _ = run(capsys, "plan", "--scene", d / "scene.json", "--bundle", d / "bundle.json",
                   "--iterations", 20000, "--seed", 0, "--out", tmp_path)
    expected = json.loads((d / "expected.json").read_text())["assignment"]
    got = {p["object_id"]: p["receptacle_id"] for p in read_payload(tmp_path / "plan.json")["final"]["placements"]}
    assert rc == 0 and sum(got[o] == r for o, r in expected.items()) >= 9


def test_missing_file(capsys, tmp_path):
    rc, _, err = run(capsys, "render", "--scene", tmp_path / "none.json", "--arrangement", tmp_path / "none.json")
    assert rc == 1 and err.startswith("error[E_IO]")
