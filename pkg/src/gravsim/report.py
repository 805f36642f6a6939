"""Figure and report rendering for evaluation, power and sweep outputs.

Every report path writes machine-readable CSV/JSON first and renders the
matching matplotlib figures next to them.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .actuation import PowerSummary, TrajectoryLog


def render_power_figure(log: TrajectoryLog, summary: PowerSummary, path: Path) -> Path:
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    ax1.stackplot(
        log.t,
        summary.joint_trace,
        summary.winding_trace,
        labels=["joint (mechanical)", "winding (resistive)"],
        colors=["#4878d0", "#ee854a"],
        alpha=0.85,
    )
    ax1.axhline(summary.average_power_w, color="k", ls="--", lw=1,
                label=f"average {summary.average_power_w:.1f} W")
    ax1.set_ylabel("power [W]")
    ax1.legend(loc="upper right", fontsize=8)
    ax1.set_title("drivetrain power losses")

    ax2.plot(log.t, np.linalg.norm(log.base_twist[:, 0:2], axis=-1), lw=0.8)
    ax2.set_ylabel("base speed [m/s]")
    ax2.set_xlabel("time [s]")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_eval_figure(log: TrajectoryLog, summary: dict, path: Path) -> Path:
    fig, axes = plt.subplots(3, 1, figsize=(8, 8), sharex=True)
    axes[0].plot(log.t, log.base_twist[:, 0], label="base vx [m/s]", lw=0.8)
    axes[0].plot(log.t, log.base_pose[:, 2], label="base height [m]", lw=0.8)
    axes[0].legend(fontsize=8)
    axes[0].set_title(
        f"{summary.get('protocol', 'evaluation')}  "
        f"(g = {summary.get('gravity', '?')} m/s^2, "
        f"avg power {summary.get('avg_power_w', 0):.1f} W)"
    )
    axes[1].plot(log.t, log.joint_torque, lw=0.5)
    axes[1].set_ylabel("joint torque [N m]")
    for k in range(log.contact_flags.shape[1]):
        axes[2].fill_between(log.t, k, k + log.contact_flags[:, k] * 0.9,
                             step="pre", alpha=0.6)
    axes[2].set_ylabel("foot contact")
    axes[2].set_xlabel("time [s]")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_sweep_figure(report: dict, path: Path) -> Path:
    """Grid image per task: rows = gravity, cols = variant, cell = power."""
    tasks = sorted({cell["task"] for cell in report["cells"]})
    gravities = report["gravities"]
    variants = report["variants"]
    fig, axes = plt.subplots(1, len(tasks), figsize=(7 * len(tasks), 4.2), squeeze=False)
    for ax, task in zip(axes[0], tasks):
        grid = np.full((len(gravities), len(variants)), np.nan)
        marks = np.full(grid.shape, "", dtype=object)
        for cell in report["cells"]:
            if cell["task"] != task:
                continue
            i = gravities.index(cell["gravity_name"])
            j = variants.index(cell["variant"])
            if cell["status"] == "ok":
                grid[i, j] = cell["metrics"]["avg_power_w"]
                marks[i, j] = cell["gate"]
            else:
                marks[i, j] = "failed"
        im = ax.imshow(grid, cmap="viridis_r", aspect="auto")
        for i in range(len(gravities)):
            for j in range(len(variants)):
                label = "-" if np.isnan(grid[i, j]) else f"{grid[i, j]:.1f} W"
                ax.text(j, i, f"{label}\n{marks[i, j]}", ha="center", va="center",
                        fontsize=8, color="w")
        ax.set_xticks(range(len(variants)), variants, rotation=20, fontsize=8)
        ax.set_yticks(range(len(gravities)), gravities)
        ax.set_title(f"{task}: modeled power")
        fig.colorbar(im, ax=ax, label="W")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_metrics_figure(metrics_path: Path, path: Path) -> Path:
    records = [json.loads(line) for line in Path(metrics_path).read_text().splitlines()]
    if not records:
        raise ValueError(f"no metrics records in {metrics_path}")
    it = [r["iteration"] for r in records]
    fig, axes = plt.subplots(2, 2, figsize=(10, 6))
    axes[0, 0].plot(it, [r["rollout/reward_mean"] for r in records])
    axes[0, 0].set_title("mean step reward")
    axes[0, 1].plot(it, [r["rollout/tracking_mean"] for r in records])
    axes[0, 1].set_title("tracking term")
    axes[1, 0].plot(it, [r["rollout/power_w_mean"] for r in records])
    axes[1, 0].set_title("modeled power [W]")
    axes[1, 1].plot(it, [r["loss/value_loss"] for r in records])
    axes[1, 1].set_title("value loss")
    for ax in axes.flat:
        ax.set_xlabel("iteration")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
