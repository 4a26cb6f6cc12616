"""Figures for metrics reports."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_report(report: dict, path, title: str | None = None) -> None:
    """Two stacked panels: drift (mean/max) and probe jitter per frame."""
    frames = report["frames"]
    idx = [r["frame"] + 1 for r in frames]
    fig, (ax_d, ax_j) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)

    mean = [r["drift_mean"] for r in frames]
    if any(v is not None for v in mean):
        ax_d.plot(idx, mean, label="mean", color="C0")
        ax_d.plot(idx, [r["drift_max"] for r in frames], label="max", color="C1", lw=0.8)
        ax_d.legend(frameon=False, fontsize=8)
    else:
        ax_d.text(0.5, 0.5, "no reference", ha="center", va="center", transform=ax_d.transAxes)
    ax_d.set_ylabel("drift (uvw)")

    jit = [(i, r["jitter"]) for i, r in zip(idx, frames) if r["jitter"] is not None]
    if jit:
        ax_j.plot(*zip(*jit), color="C2")
    else:
        ax_j.text(0.5, 0.5, "fewer than 3 frames", ha="center", va="center", transform=ax_j.transAxes)
    ax_j.set_ylabel("probe jitter (uvw)")
    ax_j.set_xlabel("frame")

    for ax in (ax_d, ax_j):
        ax.spines["top"].set_visible(False)
        ax.spines["right"].set_visible(False)
    if title:
        fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
