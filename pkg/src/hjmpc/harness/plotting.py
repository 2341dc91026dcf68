"""Static figures for the report command (written to files, never shown)."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Circle as CirclePatch  # noqa: E402

SAFE_COLOR = "tab:blue"
UNSAFE_COLOR = "tab:red"


def _scene(ax, scenario):
    for o in scenario.obstacles:
        ax.add_patch(CirclePatch((o.cx, o.cy), o.radius, color="0.55", alpha=0.7, lw=0))
    ax.plot(*scenario.goal, marker="*", ms=12, color="gold", mec="k", zorder=5)
    ax.add_patch(CirclePatch(scenario.goal, scenario.goal_tolerance, fill=False, ls="--", color="k", lw=0.8))
    ax.set_xlim(scenario.box[0], scenario.box[1])
    ax.set_ylim(scenario.box[2], scenario.box[3])
    ax.set_aspect("equal")


def trajectories_figure(scenario, trajectories: dict, path, max_per_config: int = 30) -> Path:
    """One panel per config; ``trajectories`` maps config id to [(states, safe), ...]."""
    configs = list(trajectories)
    ncols = min(3, max(1, len(configs)))
    nrows = max(1, math.ceil(len(configs) / ncols))
    fig, axes = plt.subplots(nrows, ncols, figsize=(4 * ncols, 4 * nrows), squeeze=False)
    for ax in axes.flat[len(configs):]:
        ax.set_visible(False)
    for ax, cfg in zip(axes.flat, configs):
        _scene(ax, scenario)
        for states, safe in trajectories[cfg][:max_per_config]:
            ax.plot(states[:, 0], states[:, 1], lw=0.8, alpha=0.8,
                    color=SAFE_COLOR if safe else UNSAFE_COLOR)
            ax.plot(states[0, 0], states[0, 1], "o", ms=2.5, color="k")
        ax.set_title(cfg, fontsize=9)
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def metrics_figure(report, path) -> Path:
    """Success rate bars and mean cost per config."""
    rows = report.rows
    labels = [r.config for r in rows]
    colors = ["tab:green" if r.variant == "safety-value" else "tab:gray" for r in rows]
    fig, (a, b) = plt.subplots(1, 2, figsize=(10, 3.8))
    a.bar(labels, [r.success_rate for r in rows], color=colors)
    a.set_ylim(0, 105)
    a.set_ylabel("rollout success [%]")
    b.bar(labels, [r.mean_cost for r in rows], color=colors)
    b.set_ylabel("mean cost")
    for ax in (a, b):
        ax.tick_params(axis="x", labelrotation=35, labelsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
