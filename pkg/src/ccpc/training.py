"""Rate-distortion training loop."""

from __future__ import annotations

import json
import math
import os
from pathlib import Path

import torch
from torch import Tensor

from .config import ModelConfig, TrainConfig
from .datasets import ImageFolder, SyntheticTextures, patch_batches
from .metrics import ms_ssim
from .model import CodecModel, save_checkpoint


class NonFiniteLossError(RuntimeError):
    """Training step produced NaN/Inf; the step is aborted."""


def rd_loss(output: dict, x: Tensor, lam: float, metric: str = "mse"):
    """Lagrangian objective: rate in bits per pixel plus lam * distortion.

    The rate term uses the noise-quantized likelihoods from the forward
    pass; the reconstruction in ``output`` came from hard-rounded latents.
    Returns (loss, parts) with detached floats in ``parts``.
    """
    num_pixels = x.shape[0] * x.shape[2] * x.shape[3]
    bits = -torch.log2(output["probs_group1"]).sum()
    if output["probs_group2"] is not None:
        bits = bits - torch.log2(output["probs_group2"]).sum()
    bits_y = bits
    bits_z = -torch.log2(output["probs_z"]).sum()
    bpp = (bits_y + bits_z) / num_pixels
    if metric == "mse":
        distortion = torch.mean((x - output["x_hat"]) ** 2)
    elif metric == "msssim":
        distortion = 1.0 - ms_ssim(x, output["x_hat"].clamp(0, 1))
    else:
        raise ValueError(f"unknown metric {metric!r}")
    loss = bpp + lam * distortion
    parts = {
        "bpp": float(bpp.detach()),
        "distortion": float(distortion.detach()),
        "loss": float(loss.detach()),
    }
    return loss, parts


def _make_dataset(cfg: TrainConfig):
    if cfg.data_dir:
        return ImageFolder(cfg.data_dir)
    kwargs = {}
    if cfg.texture_kinds:
        kwargs["kinds"] = tuple(cfg.texture_kinds.split(","))
    return SyntheticTextures(
        num_images=cfg.num_images, size=max(cfg.patch_size, 128), seed=cfg.seed, **kwargs
    )


def seed_everything(seed: int) -> None:
    torch.manual_seed(seed)


def resolve_seed(cfg: TrainConfig) -> int:
    env = os.environ.get("CCPC_SEED")
    return int(env) if env is not None else cfg.seed


def train(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    out_dir: str | Path | None = None,
    quality_id: int = 0,
    log_file: str | Path | None = None,
) -> tuple[CodecModel, list[dict]]:
    """Train a model from scratch; returns (model, history of log records)."""
    seed = resolve_seed(train_cfg)
    seed_everything(seed)
    model = CodecModel(model_cfg)
    model.train()
    opt = torch.optim.Adam(model.parameters(), lr=train_cfg.lr)
    batches = patch_batches(
        _make_dataset(train_cfg), train_cfg.batch_size, train_cfg.patch_size, seed
    )
    history: list[dict] = []
    log_handle = open(log_file, "w") if log_file else None
    try:
        for step in range(1, train_cfg.steps + 1):
            if step == train_cfg.lr_decay_step:
                for group in opt.param_groups:
                    group["lr"] = train_cfg.lr_final
            x = next(batches)
            output = model(x, rate_input="noise")
            loss, parts = rd_loss(output, x, train_cfg.lam, train_cfg.metric)
            if not math.isfinite(parts["loss"]):
                raise NonFiniteLossError(f"non-finite loss at step {step}")
            opt.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), 5.0)
            opt.step()
            if step % train_cfg.log_every == 0 or step == 1 or step == train_cfg.steps:
                with torch.no_grad():
                    mse = torch.mean((x - output["x_hat"].clamp(0, 1)) ** 2).item()
                record = {
                    "step": step,
                    "loss": parts["loss"],
                    "bpp_est": parts["bpp"],
                    "psnr": 10.0 * math.log10(1.0 / max(mse, 1e-10)),
                }
                history.append(record)
                if log_handle:
                    log_handle.write(json.dumps(record) + "\n")
                    log_handle.flush()
    finally:
        if log_handle:
            log_handle.close()
    model.eval()
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(
            model,
            out_dir / "model.pt",
            quality_id=quality_id,
            meta={"lambda": train_cfg.lam, "metric": train_cfg.metric, "seed": seed},
        )
    return model, history


def smoothed(values: list[float], window: int = 20) -> list[float]:
    out = []
    for i in range(len(values)):
        lo = max(0, i - window + 1)
        out.append(sum(values[lo : i + 1]) / (i + 1 - lo))
    return out
