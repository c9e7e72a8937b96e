"""Causal context extraction over the quantized latent grid.

Two masked-convolution variants produce the adjacent contexts:

* ``standard`` sees only strictly-earlier raster positions inside its
  K x K window (the center tap and everything after it are zeroed).
* ``improved`` additionally opens the center tap for the first ``s``
  input channels, so the already-decoded first latent group at the
  current position conditions the second group.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor, nn


@dataclass(frozen=True)
class MaskSpec:
    kernel: int = 5
    mode: str = "standard"  # standard | improved
    split: int = 0  # first-group channel count, used by improved mode

    def __post_init__(self) -> None:
        if self.kernel % 2 == 0:
            raise ValueError(f"mask kernel must be odd, got {self.kernel}")
        if self.mode not in ("standard", "improved"):
            raise ValueError(f"unknown mask mode {self.mode!r}")
        if self.mode == "improved" and self.split < 1:
            raise ValueError("improved mode needs split >= 1")


def build_mask(spec: MaskSpec, out_channels: int, in_channels: int) -> Tensor:
    """Binary weight mask [out, in, K, K]; depends only on the spec."""
    if spec.mode == "improved" and not 0 < spec.split < in_channels:
        raise ValueError(f"split {spec.split} out of range for {in_channels} channels")
    k = spec.kernel
    center = k // 2
    mask = torch.zeros(out_channels, in_channels, k, k)
    mask[:, :, :center, :] = 1.0
    mask[:, :, center, :center] = 1.0
    if spec.mode == "improved":
        mask[:, : spec.split, center, center] = 1.0
    return mask


class MaskedConv2d(nn.Conv2d):
    """Convolution whose kernel is masked to respect raster causality."""

    def __init__(self, spec: MaskSpec, in_channels: int, out_channels: int):
        super().__init__(
            in_channels, out_channels, spec.kernel, padding=spec.kernel // 2
        )
        self.spec = spec
        self.register_buffer("mask", build_mask(spec, out_channels, in_channels))

    def forward(self, y_hat: Tensor) -> Tensor:
        return self._conv_forward(y_hat, self.weight * self.mask, self.bias)


def split_channels(y_hat: Tensor, split: int) -> tuple[Tensor, Tensor]:
    """Split the latent volume into (channels [0, s), channels [s, M))."""
    return y_hat[:, :split], y_hat[:, split:]


def merge_channels(group1: Tensor, group2: Tensor) -> Tensor:
    return torch.cat([group1, group2], dim=1)
