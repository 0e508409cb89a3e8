"""Figure rendering for reports, demo trajectories, and training curves.

Everything draws through the Agg backend and writes image files next to the
delimited outputs; nothing opens a window.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .ddpg import EpisodeRecord
from .harness import _METRIC_FIELDS, AggregateReport

_METRIC_LABELS = {
    "success_rate": "Success rate",
    "collision_rate": "Collision rate",
    "time_spent": "Time spent (s)",
    "trajectory_length": "Trajectory length (m)",
}


def save_report_figures(report: AggregateReport, out_dir: str) -> list[str]:
    """One errorbar chart per metric: agent count on x, one line per policy."""
    paths = []
    counts = np.array(report.agent_counts)
    for metric, mean_attr, std_attr in _METRIC_FIELDS:
        fig, ax = plt.subplots(figsize=(6, 4))
        for policy in report.policies:
            means, stds = [], []
            for count in report.agent_counts:
                cell = report.cells[(policy, count)]
                means.append(getattr(cell, mean_attr))
                stds.append(getattr(cell, std_attr))
            mask = np.array([m is not None for m in means])
            if not mask.any():
                continue
            m = np.array([v if v is not None else np.nan for v in means], dtype=float)
            s = np.array([v if v is not None else np.nan for v in stds], dtype=float)
            ax.errorbar(
                counts[mask], m[mask], yerr=s[mask], marker="o", capsize=3, label=policy
            )
        ax.set_xlabel("Agents")
        ax.set_ylabel(_METRIC_LABELS[metric])
        ax.set_xticks(counts)
        ax.grid(alpha=0.3)
        ax.legend()
        fig.tight_layout()
        path = os.path.join(out_dir, f"{metric}.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths


def save_trajectory_figure(
    log_path: str, out_path: str, arena_half_extent: float, goals: list[tuple[float, float]]
) -> str:
    """Draw the per-agent paths recorded in a trajectory log."""
    tracks: dict[int, list[tuple[float, float]]] = {}
    with open(log_path) as f:
        for row in csv.DictReader(f):
            tracks.setdefault(int(row["agent_id"]), []).append(
                (float(row["x"]), float(row["y"]))
            )
    fig, ax = plt.subplots(figsize=(6, 6))
    colors = plt.cm.tab20(np.linspace(0, 1, max(len(tracks), 1)))
    for agent_id, points in sorted(tracks.items()):
        xy = np.array(points)
        color = colors[agent_id % len(colors)]
        ax.plot(xy[:, 0], xy[:, 1], "-", color=color, lw=1.2)
        ax.plot(xy[0, 0], xy[0, 1], "s", color=color, ms=6)
        if agent_id < len(goals):
            ax.plot(goals[agent_id][0], goals[agent_id][1], "*", color=color, ms=11)
    h = arena_half_extent
    ax.plot([-h, h, h, -h, -h], [-h, -h, h, h, -h], "k-", lw=1)
    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def smooth(values: np.ndarray, window: int = 15) -> np.ndarray:
    """Trailing moving average, shorter at the start; NaNs are skipped."""
    out = np.empty(len(values))
    for i in range(len(values)):
        chunk = values[max(0, i - window + 1) : i + 1]
        chunk = chunk[np.isfinite(chunk)]
        out[i] = chunk.mean() if len(chunk) else np.nan
    return out


def save_training_curves_figure(
    curves: dict[str, list[EpisodeRecord]], out_path: str, window: int = 15
) -> str:
    """Smoothed actor loss and success rate per episode, one line per run."""
    fig, (ax_loss, ax_succ) = plt.subplots(2, 1, figsize=(7, 7), sharex=True)
    for label, records in curves.items():
        episodes = np.array([r.episode for r in records])
        ax_loss.plot(
            episodes,
            smooth(np.array([r.actor_loss for r in records]), window),
            label=label,
        )
        ax_succ.plot(
            episodes,
            smooth(np.array([r.success_rate for r in records]), window),
            label=label,
        )
    ax_loss.set_ylabel("Actor loss (smoothed)")
    ax_loss.grid(alpha=0.3)
    ax_loss.legend()
    ax_succ.set_ylabel("Success rate (smoothed)")
    ax_succ.set_xlabel("Episode")
    ax_succ.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
