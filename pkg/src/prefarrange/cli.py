"""Command-line front end.

One subcommand per pipeline stage; stages talk to each other through JSON
files. Every JSON output is an envelope ``{"meta": {...}, "result": {...}}``
where only ``meta`` carries run-dependent data such as the timestamp.

Exit status: 0 on success, 1 on a domain or I/O error, 2 on a usage error.
Errors are printed to stderr as ``error[CODE]: message``.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .constructs import CommonsensePriorTable, PreferenceWeights
from .errors import ArrangementError, PreconditionError, ValidationError
from .evaluation import (
    BatchSummary,
    batch_eval,
    format_report_table,
    ground_truth_from_dict,
    load_prediction,
)
from .oracle import PriorCache, RemoteBackend, RemoteConfig, StubBackend, fetch_table
from .planner import PlannerConfig, PlanResult, exact_plan, plan
from .priors import (
    build_bundle,
    bundle_from_dict,
    bundle_to_dict,
    commonsense_from_entries,
    commonsense_to_entries,
    demonstrations_from_dict,
    likert_from_dict,
    weights_from_likert,
)
from .scene import Arrangement, SceneDescription, arrangement_from_dict, read_json, scene_from_dict

DEFAULT_OUT = "out"
DEFAULT_ITERATIONS = 10_000


class UsageError(Exception):
    """Bad command-line usage detected after parsing (exit status 2)."""


# ---------------------------------------------------------------------------
# file envelope
# ---------------------------------------------------------------------------


def _timestamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0).isoformat()


def write_envelope(path: Path, command: str, payload: Any) -> Path:
    doc = {"meta": {"tool": "prefarrange", "version": __version__, "command": command, "created": _timestamp()}, "result": payload}
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return path


def read_payload(path: str | Path) -> Any:
    """Load a JSON file, unwrapping the output envelope if there is one."""
    doc = read_json(path)
    if isinstance(doc, dict) and set(doc) == {"meta", "result"}:
        return doc["result"]
    return doc


def _scene(path: str) -> SceneDescription:
    return scene_from_dict(read_payload(path))


def _commonsense(path: str) -> CommonsensePriorTable:
    doc = read_payload(path)
    entries = doc.get("commonsense") if isinstance(doc, dict) else doc
    if not isinstance(entries, list):
        raise ValidationError(f"{path}: expected a list of commonsense entries")
    return commonsense_from_entries(entries)


def _parse_weights(text: str) -> PreferenceWeights:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"--weights expects four comma-separated numbers, got {text!r}") from exc
    if len(values) != 4:
        raise UsageError(f"--weights expects four comma-separated numbers, got {text!r}")
    return PreferenceWeights.from_sequence(values)


def _out_dir(args) -> Path:
    out = Path(getattr(args, "out", DEFAULT_OUT))
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_estimate_priors(args) -> int:
    scene = _scene(args.scene)
    demos = demonstrations_from_dict(read_payload(args.demos))
    if args.likert and args.weights:
        raise UsageError("give either --likert or --weights, not both")
    if args.likert:
        weights = weights_from_likert(likert_from_dict(read_payload(args.likert)))
        weight_source = f"likert:{args.likert}"
    elif args.weights:
        weights = _parse_weights(args.weights)
        weight_source = "explicit"
    else:
        raise UsageError("estimate-priors needs --likert or --weights")
    table = _commonsense(args.commonsense)
    bundle = build_bundle(scene, demos, table, weights)
    path = write_envelope(_out_dir(args) / "bundle.json", "estimate-priors", bundle_to_dict(bundle))
    print(f"scene: {scene.id}  demonstrations: {len(demos.arrangements)}")
    print("spatial priors: modal-receptacle centroid")
    print(f"affinities: co-placement rate vs chance 1/{len(scene.receptacles)}")
    print("accessibility: mean normalized usage of objects placed per receptacle")
    print(f"commonsense: {table.provenance} ({len(table.score)} entries)")
    print("weights: " + " ".join(f"{v:.4f}" for v in weights.as_tuple()) + f"  ({weight_source})")
    print(f"wrote {path}")
    return 0


def cmd_fetch_commonsense(args) -> int:
    scene = _scene(args.scene)
    offline = getattr(args, "offline", False)
    if args.stub:
        backend = StubBackend.from_file(args.stub)
    elif offline:
        raise PreconditionError("--offline requires --stub FIXTURE for the commonsense oracle")
    else:
        cfg = RemoteConfig.from_file(args.config) if args.config else RemoteConfig.from_env()
        backend = RemoteBackend(cfg)
    cache = PriorCache(args.cache) if args.cache else None
    try:
        table = fetch_table(scene, backend, cache=cache, max_workers=args.workers)
    finally:
        if isinstance(backend, RemoteBackend):
            backend.close()
    path = write_envelope(_out_dir(args) / "commonsense.json", "fetch-commonsense", {
        "scene_ref": scene.id, "commonsense": commonsense_to_entries(table),
    })
    print(f"{len(table.score)} commonsense scores from {table.provenance}; wrote {path}")
    return 0


def _planner_config(args) -> PlannerConfig:
    return PlannerConfig(
        iterations=getattr(args, "iterations", DEFAULT_ITERATIONS),
        exploration_c=getattr(args, "exploration_c", PlannerConfig().exploration_c),
        seed=getattr(args, "seed", 0),
        root_trees=args.root_trees,
        jobs=args.jobs,
    )


def format_breakdown(result: PlanResult) -> str:
    w = result.weights.as_tuple()
    wo = max([6] + [len(s.object_id) for s in result.reward_trace])
    wr = max([10] + [len(s.receptacle_id) for s in result.reward_trace])
    lines = [
        f"scene {result.scene_ref}  mode {result.mode}  iterations {result.iterations_used}  seed {result.seed}",
        "weights  " + "  ".join(f"{n}={v:.3f}" for n, v in zip(("w1", "w2", "w3", "w4"), w)),
        f"{'step':>4}  {'object':<{wo}} {'receptacle':<{wr}} {'f1':>6} {'f2':>6} {'f3':>6} {'f4':>6} {'R':>7} {'dR':>8}",
    ]
    prev = 1.0
    for s in result.reward_trace:
        f = s.scores.as_tuple()
        lines.append(
            f"{s.step:>4}  {s.object_id:<{wo}} {s.receptacle_id:<{wr}} "
            + " ".join(f"{v:6.3f}" for v in f)
            + f" {s.reward:7.4f} {s.reward - prev:+8.4f}"
        )
        prev = s.reward
    f = result.final_scores.as_tuple()
    lines.append("contribution  " + "  ".join(f"w{k + 1}*f{k + 1}={w[k] * f[k]:.4f}" for k in range(4))
                 + f"  R={result.final_reward:.4f}")
    return "\n".join(lines)


def _write_trace_csv(path: Path, result: PlanResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["step", "object_id", "receptacle_id", "x", "y", "z", "f1", "f2", "f3", "f4", "reward"])
        for s in result.reward_trace:
            wr.writerow([s.step, s.object_id, s.receptacle_id, *(repr(v) for v in s.position),
                         *(repr(v) for v in s.scores.as_tuple()), repr(s.reward)])


def _emit_plan(args, scene: SceneDescription, result: PlanResult, command: str) -> int:
    out = _out_dir(args)
    write_envelope(out / "plan.json", command, result.to_dict())
    _write_trace_csv(out / "trace.csv", result)
    print(format_breakdown(result))
    fmt = getattr(args, "render", "none")
    if fmt != "none":
        from .render import plot_arrangement, plot_reward_trace

        plot_arrangement(scene, result.final, out / f"plan.{fmt}")
        plot_reward_trace(result, out / f"trace.{fmt}")
    print(f"wrote {out / 'plan.json'}")
    return 0


def _weights_override(args, bundle) -> PreferenceWeights:
    return _parse_weights(args.weights) if args.weights else bundle.weights


def cmd_plan(args) -> int:
    scene = _scene(args.scene)
    bundle = bundle_from_dict(read_payload(args.bundle))
    bundle.require_coverage(scene)
    w = _weights_override(args, bundle)
    if args.oracle:
        result = exact_plan(scene, bundle, w)
    else:
        result = plan(scene, bundle, w, _planner_config(args))
    return _emit_plan(args, scene, result, "plan")


def cmd_oracle(args) -> int:
    scene = _scene(args.scene)
    bundle = bundle_from_dict(read_payload(args.bundle))
    bundle.require_coverage(scene)
    result = exact_plan(scene, bundle, _weights_override(args, bundle), args.max_leaves)
    return _emit_plan(args, scene, result, "oracle")


def _eval_pairs(args) -> tuple[list, list[str]]:
    preds, gts = list(args.pred or []), list(args.gt or [])
    if len(preds) != len(gts):
        raise UsageError(f"{len(preds)} prediction file(s) but {len(gts)} ground-truth file(s)")
    if not preds:
        raise UsageError("eval needs at least one --pred/--gt pair")
    labels = list(args.label or [])
    if labels and len(labels) != len(preds):
        raise UsageError("--label must be given once per case")
    if not labels:
        labels = [Path(p).stem for p in preds]
    cases = []
    for p, g in zip(preds, gts):
        cases.append((load_prediction(p), ground_truth_from_dict(read_payload(g))))
    return cases, labels


def _write_per_object_csv(path: Path, summary: BatchSummary) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["case", "object_id", "predicted", "ground_truth", "match"])
        for label, rep in zip(summary.labels, summary.cases):
            for m in rep.per_object:
                wr.writerow([label, m.object_id, m.predicted, m.ground_truth, int(m.match)])


def cmd_eval(args) -> int:
    cases, labels = _eval_pairs(args)
    summary = batch_eval(cases, labels)
    out = _out_dir(args)
    write_envelope(out / "report.json", "eval", summary.to_dict())
    _write_per_object_csv(out / "per_object.csv", summary)
    if not args.no_plot:
        from .render import plot_accuracy

        plot_accuracy(summary.labels, [r.object_accuracy for r in summary.cases], out / "accuracy.png", summary.mean)
    for label, rep in zip(summary.labels, summary.cases):
        print(format_report_table(rep, label))
        print()
    print(f"cases: {len(summary.cases)}  mean accuracy: {summary.mean:.4f}  "
          f"population stdev: {summary.stdev:.4f}  range: [{summary.minimum:.2f}, {summary.maximum:.2f}]")
    return 0


def _arrangement_for_render(path: str) -> Arrangement:
    doc = read_payload(path)
    if isinstance(doc, dict) and "trajectory" in doc and "final" in doc:
        return PlanResult.from_dict(doc).final
    if isinstance(doc, dict) and "placements" in doc:
        return arrangement_from_dict(doc)
    raise ValidationError(f"{path}: render needs a plan or an arrangement with positions")


def cmd_render(args) -> int:
    from .render import ascii_arrangement, plot_arrangement

    scene = _scene(args.scene)
    x = _arrangement_for_render(args.arrangement)
    if x.scene_ref != scene.id:
        raise ValidationError(f"arrangement is for scene {x.scene_ref!r}, not {scene.id!r}")
    print(ascii_arrangement(scene, x))
    if args.format != "ascii":
        path = plot_arrangement(scene, x, _out_dir(args) / f"arrangement.{args.format}")
        print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _common() -> argparse.ArgumentParser:
    # SUPPRESS lets the flags appear before or after the subcommand without
    # the subparser's defaults clobbering a value given earlier
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--iterations", type=int, help=f"MCTS iterations (default {DEFAULT_ITERATIONS})")
    p.add_argument("--exploration-c", type=float, dest="exploration_c", help="UCB exploration constant (default 1/sqrt(2))")
    p.add_argument("--offline", action="store_true", help="never contact the remote oracle")
    p.add_argument("--out", help=f"output directory (default {DEFAULT_OUT})")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="prefarrange", description=__doc__.splitlines()[0], parents=[common])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate-priors", parents=[common], help="estimate a prior bundle from demonstrations")
    p.add_argument("--scene", required=True)
    p.add_argument("--demos", required=True)
    p.add_argument("--likert")
    p.add_argument("--weights", help="w1,w2,w3,w4 instead of a questionnaire")
    p.add_argument("--commonsense", required=True, help="commonsense table from fetch-commonsense or a fixture")
    p.set_defaults(func=cmd_estimate_priors)

    p = sub.add_parser("fetch-commonsense", parents=[common], help="build the commonsense table")
    p.add_argument("--scene", required=True)
    p.add_argument("--stub", help="fixture table served by the offline stub backend")
    p.add_argument("--config", help="remote backend config file (must not be group/other readable)")
    p.add_argument("--cache", help="JSON cache file for remote responses")
    p.add_argument("--workers", type=int, default=4)
    p.set_defaults(func=cmd_fetch_commonsense)

    p = sub.add_parser("plan", parents=[common], help="plan an arrangement")
    p.add_argument("--scene", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--weights", help="override the bundle weights: w1,w2,w3,w4")
    p.add_argument("--oracle", action="store_true", help="solve exactly instead of running MCTS")
    p.add_argument("--root-trees", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--render", choices=("none", "svg", "png"), default="none")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("eval", parents=[common], help="compare predictions with ground truth")
    p.add_argument("--pred", action="append", help="plan, arrangement or assignment file (repeatable)")
    p.add_argument("--gt", action="append", help="ground-truth assignment file (repeatable, same order)")
    p.add_argument("--label", action="append")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle", parents=[common], help="exact exhaustive solve")
    p.add_argument("--scene", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--weights")
    p.add_argument("--max-leaves", type=int, default=10_000_000)
    p.add_argument("--render", choices=("none", "svg", "png"), default="none")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("render", parents=[common], help="draw an arrangement")
    p.add_argument("--scene", required=True)
    p.add_argument("--arrangement", required=True, help="plan or arrangement file")
    p.add_argument("--format", choices=("svg", "png", "ascii"), default="svg")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error[E_USAGE]: {exc}", file=sys.stderr)
        return 2
    except ArrangementError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error[E_IO]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
