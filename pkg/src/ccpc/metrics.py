"""Quality metrics and RD-curve comparison."""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor

PSNR_CAP_DB = 100.0
MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
_MSSSIM_WIN = 11
MSSSIM_MIN_SIZE = 160


class TooSmallImageError(ValueError):
    """Image too small for the requested number of MS-SSIM scales."""


def to_uint8(x: Tensor) -> Tensor:
    """Quantize a [0,1] float image to its 8-bit representation."""
    return (x.clamp(0, 1) * 255.0).round()


def psnr(x: Tensor, x_hat: Tensor) -> float:
    """PSNR in dB between 8-bit-rounded images, capped at 100 dB."""
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    a = to_uint8(x).double() / 255.0
    b = to_uint8(x_hat).double() / 255.0
    mse = F.mse_loss(a, b).item()
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP_DB)


def _gaussian_window(size: int, sigma: float, dtype, device) -> Tensor:
    coords = torch.arange(size, dtype=dtype, device=device) - (size - 1) / 2.0
    g = torch.exp(-(coords**2) / (2 * sigma**2))
    g = g / g.sum()
    return g.outer(g)


def _ssim_components(x: Tensor, y: Tensor, window: Tensor) -> tuple[Tensor, Tensor]:
    c = x.shape[1]
    kernel = window.expand(c, 1, *window.shape)
    mu_x = F.conv2d(x, kernel, groups=c)
    mu_y = F.conv2d(y, kernel, groups=c)
    xx = F.conv2d(x * x, kernel, groups=c) - mu_x**2
    yy = F.conv2d(y * y, kernel, groups=c) - mu_y**2
    xy = F.conv2d(x * y, kernel, groups=c) - mu_x * mu_y
    c1, c2 = 0.01**2, 0.03**2
    cs = (2 * xy + c2) / (xx + yy + c2)
    ssim = ((2 * mu_x * mu_y + c1) / (mu_x**2 + mu_y**2 + c1)) * cs
    return ssim.mean(), cs.mean()


def ms_ssim(x: Tensor, x_hat: Tensor, scales: int = 5) -> Tensor:
    """Multi-scale structural similarity with the standard 5-scale weights.

    Differentiable; inputs [B, 3, H, W] in [0, 1] with min(H, W) >= 160 so
    the coarsest scale still fits the 11-tap window.
    """
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    h, w = x.shape[2], x.shape[3]
    if min(h, w) < MSSSIM_MIN_SIZE:
        raise TooSmallImageError(
            f"need min(H, W) >= {MSSSIM_MIN_SIZE} for {scales} scales, got {min(h, w)}"
        )
    size = min(h, w)
    for _ in range(scales - 1):
        size = (size + size % 2) // 2
    if size < _MSSSIM_WIN:
        raise TooSmallImageError(
            f"coarsest scale would be {size} px, below the {_MSSSIM_WIN}-tap window"
        )
    window = _gaussian_window(_MSSSIM_WIN, 1.5, x.dtype, x.device)
    weights = torch.tensor(MSSSIM_WEIGHTS[:scales], dtype=x.dtype, device=x.device)
    values = []
    floor = 1e-8  # keeps the product strictly positive for anticorrelated pairs
    a, b = x, x_hat
    for i in range(scales):
        ssim, cs = _ssim_components(a, b, window)
        if i == scales - 1:
            values.append(ssim.clamp_min(floor))
        else:
            values.append(cs.clamp_min(floor))
            pad = (a.shape[3] % 2, 0, a.shape[2] % 2, 0)
            a = F.avg_pool2d(F.pad(a, pad, mode="replicate"), 2)
            b = F.avg_pool2d(F.pad(b, pad, mode="replicate"), 2)
    return torch.stack(values).pow(weights).prod()


def fit_log_rate_poly(quality: np.ndarray, log_rate: np.ndarray) -> np.ndarray:
    return np.polyfit(quality, log_rate, 3)


def bd_rate(
    rate_a: np.ndarray,
    quality_a: np.ndarray,
    rate_b: np.ndarray,
    quality_b: np.ndarray,
) -> float:
    """Average rate difference of curve A against curve B, in percent.

    Cubic fit of log-rate over quality, integrated analytically over the
    overlapping quality interval; negative means curve A is cheaper.
    """
    rate_a, quality_a = np.asarray(rate_a, float), np.asarray(quality_a, float)
    rate_b, quality_b = np.asarray(rate_b, float), np.asarray(quality_b, float)
    if len(rate_a) < 4 or len(rate_b) < 4:
        raise ValueError("BD-rate needs at least 4 points per curve")
    lo = max(quality_a.min(), quality_b.min())
    hi = min(quality_a.max(), quality_b.max())
    if hi <= lo:
        raise ValueError(f"quality ranges do not overlap: [{lo}, {hi}]")
    poly_a = fit_log_rate_poly(quality_a, np.log(rate_a))
    poly_b = fit_log_rate_poly(quality_b, np.log(rate_b))
    int_a = np.polyval(np.polyint(poly_a), hi) - np.polyval(np.polyint(poly_a), lo)
    int_b = np.polyval(np.polyint(poly_b), hi) - np.polyval(np.polyint(poly_b), lo)
    avg_log_diff = (int_a - int_b) / (hi - lo)
    return float((math.exp(avg_log_diff) - 1.0) * 100.0)
