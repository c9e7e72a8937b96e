"""Compression evaluation: per-image stats, CSV emission, RD aggregation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import Tensor

from .codec import decode_image, encode_image
from .metrics import TooSmallImageError, ms_ssim, psnr
from .model import CodecModel
from .training import rd_loss

CSV_COLUMNS = ("bpp", "psnr", "msssim", "bits_g1", "bits_g2", "bits_z")


@dataclass
class ImageStats:
    bpp: float
    psnr: float
    msssim: float  # NaN when the image is too small for 5 scales
    bits_g1: float
    bits_g2: float
    bits_z: float

    def row(self) -> list:
        return [getattr(self, c) for c in CSV_COLUMNS]


@dataclass
class RdPoint:
    """One rate-distortion point (a model evaluated on a dataset)."""

    bpp: float
    psnr: float
    msssim: float
    group1_share: float


def evaluate_image(x: Tensor, model: CodecModel, quality_id: int = 0) -> ImageStats:
    """Real encode/decode of one image; returns measured statistics."""
    if x.dim() == 3:
        x = x.unsqueeze(0)
    enc = encode_image(x, model, quality_id=quality_id)
    dec = decode_image(enc.data, model, expected_quality=quality_id)
    if not torch.equal(dec.x_hat, enc.x_hat):
        raise RuntimeError("encoder/decoder reconstruction mismatch during eval")
    total_bits = 8.0 * len(enc.data)
    try:
        ms = float(ms_ssim(x, dec.x_hat))
    except TooSmallImageError:
        ms = math.nan
    return ImageStats(
        bpp=total_bits / enc.rate.num_pixels,
        psnr=psnr(x, dec.x_hat),
        msssim=ms,
        bits_g1=enc.rate.bits_y_group1,
        bits_g2=enc.rate.bits_y_group2,
        bits_z=enc.rate.bits_z,
    )


def estimate_bpp(x: Tensor, model: CodecModel) -> float:
    """Model-side rate estimate at hard-rounded latents, in bits per pixel."""
    if x.dim() == 3:
        x = x.unsqueeze(0)
    model.eval()
    with torch.no_grad():
        output = model(x, rate_input="round")
        _, parts = rd_loss(output, x, lam=1.0)
    return parts["bpp"]


def evaluate_dataset(
    images, model: CodecModel, quality_id: int = 0, csv_path: str | Path | None = None
) -> tuple[list[ImageStats], RdPoint]:
    """Evaluate every image; optionally write the per-image CSV."""
    stats = [evaluate_image(img, model, quality_id) for img in images]
    if csv_path is not None:
        write_stats_csv(stats, csv_path)
    return stats, aggregate(stats)


def aggregate(stats: list[ImageStats]) -> RdPoint:
    n = len(stats)
    mean = lambda vals: sum(vals) / n
    g1 = mean([s.bits_g1 for s in stats])
    g2 = mean([s.bits_g2 for s in stats])
    ms_vals = [s.msssim for s in stats if not math.isnan(s.msssim)]
    return RdPoint(
        bpp=mean([s.bpp for s in stats]),
        psnr=mean([s.psnr for s in stats]),
        msssim=sum(ms_vals) / len(ms_vals) if ms_vals else math.nan,
        group1_share=g1 / (g1 + g2) if g1 + g2 > 0 else 0.0,
    )


def write_stats_csv(stats: list[ImageStats], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for s in stats:
            writer.writerow(s.row())


def read_stats_csv(path: str | Path) -> list[ImageStats]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [ImageStats(**{k: float(row[k]) for k in CSV_COLUMNS}) for row in reader]
