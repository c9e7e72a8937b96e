"""Static report figures rendered next to the CSV outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def rd_curve_figure(curves: dict[str, list[tuple[float, float]]], path: str | Path,
                    ylabel: str = "PSNR (dB)") -> Path:
    """Plot one or more RD curves; each value is a list of (bpp, quality)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4.2))
    for label, points in curves.items():
        pts = sorted(points)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=label)
    ax.set_xlabel("bits per pixel")
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def training_curve_figure(history: list[dict], path: str | Path) -> Path:
    """Loss and rate-estimate curves from training log records."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    steps = [h["step"] for h in history]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    axes[0].plot(steps, [h["loss"] for h in history])
    axes[0].set_xlabel("step")
    axes[0].set_ylabel("RD loss")
    axes[1].plot(steps, [h["bpp_est"] for h in history], label="bpp estimate")
    axes[1].plot(steps, [h["psnr"] for h in history], label="train PSNR")
    axes[1].set_xlabel("step")
    axes[1].legend()
    for ax in axes:
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def group_share_figure(shares: dict[str, float], path: str | Path) -> Path:
    """Bar chart of the first-group bitstream share per setting."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(5, 3.4))
    labels = list(shares)
    ax.bar(labels, [100.0 * shares[k] for k in labels])
    ax.axhline(50.0, color="gray", linestyle="--", linewidth=1)
    ax.set_ylabel("group-1 share of latent bits (%)")
    ax.set_ylim(0, 100)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
