"""Figures and text views of arrangements, plans and evaluation reports.

Display only: nothing here feeds back into planning or scoring.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

from .planner import PlanResult  # noqa: E402
from .scene import Arrangement, SceneDescription  # noqa: E402

# fixed hash salt so SVG ids and metadata do not vary between runs
matplotlib.rcParams["svg.hashsalt"] = "prefarrange"
_SAVE_META = {"svg": {"Date": None}, "png": {"Software": None}, "pdf": {"CreationDate": None, "ModDate": None}}

CONSTRUCT_COLORS = ("#1b9e77", "#d95f02", "#7570b3", "#e7298a")


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fmt = path.suffix.lstrip(".").lower() or "png"
    fig.savefig(path, format=fmt, bbox_inches="tight", metadata=_SAVE_META.get(fmt))
    plt.close(fig)
    return path


def plot_arrangement(scene: SceneDescription, x: Arrangement, path: str | Path, title: str | None = None) -> Path:
    """Top-down view: receptacle surfaces as outlines, objects as labeled footprints."""
    fig, ax = plt.subplots(figsize=(7, 6))
    for k, rec in enumerate(scene.receptacles):
        s = rec.surface
        ax.add_patch(Rectangle((s.x, s.y), s.w, s.d, fill=False, lw=1.2, ec="0.35"))
        ax.text(s.x + 0.01, s.y + s.d - 0.01, rec.name or rec.id, fontsize=7, va="top", color="0.3")
    for p in x.placements:
        o = scene.object(p.object_id)
        w, d, _ = o.footprint
        cx, cy, _ = p.position
        ax.add_patch(Rectangle((cx - w / 2, cy - d / 2), w, d, fc="#a6cee3", ec="#1f78b4", alpha=0.8))
        ax.text(cx, cy, o.name or o.id, fontsize=6, ha="center", va="center")
    xs = [r.surface.x for r in scene.receptacles] + [r.surface.x + r.surface.w for r in scene.receptacles]
    ys = [r.surface.y for r in scene.receptacles] + [r.surface.y + r.surface.d for r in scene.receptacles]
    pad = 0.05 * max(max(xs) - min(xs), max(ys) - min(ys), 1e-6)
    ax.set_xlim(min(xs) - pad, max(xs) + pad)
    ax.set_ylim(min(ys) - pad, max(ys) + pad)
    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title(title or scene.id)
    return _save(fig, path)


def ascii_arrangement(scene: SceneDescription, x: Arrangement) -> str:
    """One block per receptacle listing what sits on it, in object id order."""
    by_rec: dict[str, list[str]] = {r.id: [] for r in scene.receptacles}
    for p in sorted(x.placements, key=lambda p: p.object_id):
        px, py, _ = p.position
        by_rec[p.receptacle_id].append(f"{p.object_id} @ ({px:.3f}, {py:.3f})")
    width = max([len(r.id) + 4 for r in scene.receptacles] + [len(s) + 4 for v in by_rec.values() for s in v] + [12])
    lines = []
    for rec in scene.receptacles:
        lines.append("+" + "-" * (width - 2) + "+")
        lines.append("| " + rec.id.ljust(width - 4) + " |")
        lines.append("|" + " " * (width - 2) + "|")
        for s in by_rec[rec.id] or ["(empty)"]:
            lines.append("| " + s.ljust(width - 4) + " |")
    if lines:
        lines.append("+" + "-" * (width - 2) + "+")
    return "\n".join(lines)


def plot_reward_trace(result: PlanResult, path: str | Path) -> Path:
    """Construct scores and weighted reward after each placement."""
    steps = [s.step for s in result.reward_trace]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for k, name in enumerate(("spatial", "habitual", "semantic", "commonsense")):
        ax.plot(steps, [s.scores.as_tuple()[k] for s in result.reward_trace], marker=".", lw=1, color=CONSTRUCT_COLORS[k], label=name)
    ax.plot(steps, [s.reward for s in result.reward_trace], color="k", lw=2, label="R")
    ax.set_xlabel("placement step")
    ax.set_ylabel("score")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=7, frameon=False, ncol=5, loc="lower center")
    ax.set_title(f"{result.scene_ref} ({result.mode})")
    return _save(fig, path)


def plot_accuracy(labels: Sequence[str], accuracies: Sequence[float], path: str | Path, mean: float | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(max(3.0, 0.9 * len(labels) + 1.5), 3.5))
    ax.bar(range(len(labels)), accuracies, color="#80b1d3", ec="#386cb0")
    for k, v in enumerate(accuracies):
        ax.text(k, v + 0.02, f"{v:.2f}", ha="center", fontsize=8)
    if mean is not None:
        ax.axhline(mean, ls="--", color="0.3", lw=1)
        ax.text(len(labels) - 0.5, mean + 0.02, f"mean {mean:.3f}", ha="right", fontsize=8, color="0.3")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylim(0, 1.1)
    ax.set_ylabel("object accuracy")
    return _save(fig, path)
