"""Ablation sweeps: train matched variants, evaluate, compare BD-rate."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import ModelConfig, TrainConfig
from .evaluate import RdPoint, evaluate_dataset
from .metrics import bd_rate
from .plots import group_share_figure, rd_curve_figure
from .training import train

ABLATION_KINDS = ("ratio", "k", "attention", "context")


def variant_config(kind: str, setting, base: ModelConfig) -> ModelConfig:
    """Model configuration for one ablation setting."""
    kw = base.to_dict()
    if kind == "ratio":
        ratio = float(setting)
        kw.update(group_ratio=ratio, use_global=False)
        if ratio >= 1.0:
            kw.update(group_ratio=1.0)
    elif kind == "k":
        if str(setting) == "all":
            kw.update(use_global=True, global_mode="dense")
        else:
            kw.update(use_global=True, global_mode="topk", global_k=int(setting))
    elif kind == "attention":
        if setting not in ("group", "simple"):
            raise ValueError(f"attention setting must be group|simple, got {setting!r}")
        kw.update(attention_groups=2 if setting == "group" else 1)
    elif kind == "context":
        if setting == "causal_global":
            kw.update(group_ratio=0.5, use_global=True)
        elif setting == "causal":
            kw.update(group_ratio=0.5, use_global=False)
        elif setting == "conventional":
            kw.update(group_ratio=1.0, use_global=False)
        else:
            raise ValueError(f"context setting must be causal_global|causal|conventional, got {setting!r}")
    else:
        raise ValueError(f"unknown ablation kind {kind!r} (want one of {ABLATION_KINDS})")
    return ModelConfig(**kw)


@dataclass
class SweepResult:
    kind: str
    settings: list
    lambdas: list[float]
    points: dict[str, list[RdPoint]]  # setting label -> one point per lambda

    def curve(self, label: str) -> list[tuple[float, float]]:
        return [(p.bpp, p.psnr) for p in self.points[label]]

    def bdrate_vs(self, label_a: str, label_b: str) -> float:
        a, b = self.curve(label_a), self.curve(label_b)
        return bd_rate(
            np.array([p[0] for p in a]),
            np.array([p[1] for p in a]),
            np.array([p[0] for p in b]),
            np.array([p[1] for p in b]),
        )


def run_ablation(
    kind: str,
    settings: list,
    base_cfg: ModelConfig,
    train_cfg: TrainConfig,
    lambdas: list[float],
    eval_images,
    out_dir: str | Path | None = None,
) -> SweepResult:
    """Train every (setting, lambda) pair under identical seeds and budgets."""
    out = Path(out_dir) if out_dir is not None else None
    points: dict[str, list[RdPoint]] = {}
    for setting in settings:
        label = str(setting)
        cfg = variant_config(kind, setting, base_cfg)
        points[label] = []
        for q, lam in enumerate(lambdas):
            model, _ = train(cfg, replace(train_cfg, lam=lam), quality_id=q)
            csv_path = out / f"{kind}_{label}_lam{lam:g}_images.csv" if out else None
            stats, point = evaluate_dataset(eval_images, model, quality_id=q, csv_path=csv_path)
            points[label].append(point)
    result = SweepResult(kind=kind, settings=settings, lambdas=list(lambdas), points=points)
    if out is not None:
        _write_report(result, out)
    return result


def _write_report(result: SweepResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"{result.kind}_sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["setting", "lambda", "bpp", "psnr", "msssim", "group1_share"])
        for label, pts in result.points.items():
            for lam, p in zip(result.lambdas, pts):
                writer.writerow([label, lam, p.bpp, p.psnr, p.msssim, p.group1_share])
    rd_curve_figure(
        {label: result.curve(label) for label in result.points},
        out / f"{result.kind}_rd_curves.png",
    )
    shares = {
        label: sum(p.group1_share for p in pts) / len(pts)
        for label, pts in result.points.items()
        if any(p.group1_share > 0 for p in pts)
    }
    if shares:
        group_share_figure(shares, out / f"{result.kind}_group_share.png")
