"""Render training-log JSONL files to line-chart images."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")  # headless backend before pyplot import

import matplotlib.pyplot as plt

from ..nn import ContractError
from .srt import load_log

PLOT_METRICS = ("mean_return", "value_loss", "policy_loss", "entropy",
                "grad_norm")


def plot_log(log_path, out_dir, metrics=PLOT_METRICS, smooth: int = 1) -> list:
    """Writes one PNG per metric (metric vs timestep); returns written paths."""
    records = load_log(log_path)
    if not records:
        raise ContractError(f"empty training log {log_path}")
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.splitext(os.path.basename(str(log_path)))[0]
    steps = [r["timestep"] for r in records]
    written = []
    for metric in metrics:
        if metric not in records[0]:
            continue
        ys = [float(r[metric]) for r in records]
        if smooth > 1:
            ys = [sum(ys[max(0, i - smooth + 1):i + 1])
                  / (i - max(0, i - smooth + 1) + 1) for i in range(len(ys))]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(steps, ys, lw=1.2)
        ax.set_xlabel("timestep")
        ax.set_ylabel(metric)
        ax.grid(alpha=0.3)
        fig.tight_layout()
        path = os.path.join(out_dir, f"{stem}_{metric}.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def plot_trajectory(csv_path, out_path, arena_half_width: float | None = None):
    """Draws agent paths from a trajectory dump CSV."""
    import csv as _csv

    tracks = {}
    with open(csv_path, newline="") as fh:
        for row in _csv.DictReader(fh):
            tracks.setdefault(int(row["agent"]), []).append(
                (float(row["px"]), float(row["py"])))
    if not tracks:
        raise ContractError(f"empty trajectory file {csv_path}")
    fig, ax = plt.subplots(figsize=(5, 5))
    for agent, pts in sorted(tracks.items()):
        xs, ys = zip(*pts)
        ax.plot(xs, ys, lw=1.0, label=f"agent {agent}")
        ax.plot(xs[0], ys[0], "o", ms=4)
        ax.plot(xs[-1], ys[-1], "x", ms=6)
    if arena_half_width:
        ax.set_xlim(-arena_half_width, arena_half_width)
        ax.set_ylim(-arena_half_width, arena_half_width)
    ax.set_aspect("equal")
    if len(tracks) <= 8:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
