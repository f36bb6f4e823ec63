"""Figure rendering for simulation, analysis, and training artifacts.

All figures are written straight to files with the Agg backend.  SVG
output is kept deterministic (fixed hash salt, no embedded date) so that
repeated runs with the same seed produce byte-identical artifacts.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "hardmax"

import matplotlib.pyplot as plt
import numpy as np

from .clusters import ClusterReport, LeaderRecord
from .dynamics import TrajectoryRecord
from .geometry import convex_hull_2d
from .sentiment import EpochStats


def plot_tokens_svg(
    traj: TrajectoryRecord,
    leaders: tuple[LeaderRecord, ...],
    path: str | Path,
) -> None:
    """Scatter of initial and final token positions with hull and leaders.

    Final positions carry the gid "tokens-final" (one marker per token),
    leader stars the gid "leaders-final"; the hull of the final
    configuration is outlined.  2-D configurations only.
    """
    if traj.dim != 2:
        raise ValueError("token scatter is drawn for 2-D configurations only")
    initial = traj.initial.points
    final = traj.final.points

    fig, ax = plt.subplots(figsize=(6, 6))
    first = ax.scatter(
        initial[:, 0], initial[:, 1], s=40, facecolors="none",
        edgecolors="tab:gray", label="initial",
    )
    first.set_gid("tokens-initial")
    last = ax.scatter(
        final[:, 0], final[:, 1], s=40, c="tab:blue", label="final",
    )
    last.set_gid("tokens-final")

    hull = convex_hull_2d(final)
    if len(hull) >= 2:
        ring = np.vstack([hull, hull[0]])
        ax.plot(ring[:, 0], ring[:, 1], "-", color="tab:blue", lw=1, alpha=0.6)

    if leaders:
        pts = np.vstack([l.limit_point for l in leaders])
        stars = ax.scatter(
            pts[:, 0], pts[:, 1], marker="*", s=220, c="tab:red",
            edgecolors="black", linewidths=0.5, label="leaders", zorder=3,
        )
        stars.set_gid("leaders-final")

    ax.axhline(0, color="0.85", lw=0.8, zorder=0)
    ax.axvline(0, color="0.85", lw=0.8, zorder=0)
    ax.set_aspect("equal")
    ax.legend(loc="best", fontsize=8)
    ax.set_title(f"{traj.n} tokens, {traj.steps[-1].step + 1 if traj.steps else 0} steps")
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_clusters_png(
    traj: TrajectoryRecord, report: ClusterReport, path: str | Path
) -> None:
    """Final positions coloured by cluster, with representatives marked."""
    if traj.dim != 2:
        raise ValueError("cluster plot is drawn for 2-D configurations only")
    final = traj.final.points
    fig, ax = plt.subplots(figsize=(6, 6))
    cmap = plt.get_cmap("tab10")
    for ci, cluster in enumerate(report.clusters):
        members = np.array(cluster.members)
        ax.scatter(
            final[members, 0], final[members, 1], s=30,
            color=cmap(ci % 10), label=f"cluster {ci} ({cluster.kind})",
        )
        marker = "*" if cluster.kind == "vertex" else "D"
        ax.scatter(
            [cluster.position[0]], [cluster.position[1]], marker=marker, s=160,
            facecolors="none", edgecolors="black", zorder=3,
        )
    ax.scatter([0], [0], marker="+", s=80, c="black", zorder=3)
    ax.set_aspect("equal")
    ax.legend(fontsize=7, loc="best")
    ax.set_title("cluster points")
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_history_png(history: list[EpochStats], path: str | Path) -> None:
    epochs = [h.epoch for h in history]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(epochs, [h.loss for h in history], color="tab:blue", label="loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss", color="tab:blue")
    twin = ax.twinx()
    twin.plot(
        epochs, [h.accuracy for h in history], color="tab:orange", label="accuracy"
    )
    twin.set_ylabel("training accuracy", color="tab:orange")
    twin.set_ylim(0.0, 1.05)
    ax.set_title("training history")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_trace_png(
    traj: TrajectoryRecord, words: list[str], path: str | Path
) -> None:
    """Word-labelled token movement for one review (2-D embeddings)."""
    if traj.dim != 2:
        raise ValueError("trace plot is drawn for 2-D embeddings only")
    initial = traj.initial.points
    final = traj.final.points
    fig, ax = plt.subplots(figsize=(7, 7))
    for i in range(traj.n):
        ax.plot(
            [initial[i, 0], final[i, 0]], [initial[i, 1], final[i, 1]],
            color="0.8", lw=0.8, zorder=1,
        )
    ax.scatter(initial[:, 0], initial[:, 1], s=25, facecolors="none",
               edgecolors="tab:gray", zorder=2)
    ax.scatter(final[:, 0], final[:, 1], s=25, c="tab:blue", zorder=2)
    seen = set()
    for i, word in enumerate(words):
        key = (word, round(float(final[i, 0]), 6), round(float(final[i, 1]), 6))
        if key in seen:
            continue
        seen.add(key)
        ax.annotate(
            word, (final[i, 0], final[i, 1]), fontsize=7,
            xytext=(3, 3), textcoords="offset points",
        )
    ax.set_aspect("equal")
    ax.set_title("token trace")
    fig.savefig(path, dpi=150)
    plt.close(fig)
