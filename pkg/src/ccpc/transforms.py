"""Nonlinear analysis/synthesis transforms and their building blocks.

The encoder stack downsamples 16x (four stride-2 convolutions with GDN
between them and feature attention after the 2nd and 4th stage); the
decoder mirrors it with inverse GDN. The hyper transforms add another 4x.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import Tensor, nn

SPATIAL_FACTOR = 16
HYPER_FACTOR = 4
PAD_MULTIPLE = 64

_BETA_FLOOR = 1e-6


def gdn(x: Tensor, beta: Tensor, gamma: Tensor, inverse: bool = False) -> Tensor:
    """Divisive normalization across channels.

    Forward: ``y_c = x_c / sqrt(beta_c + sum_k gamma_ck * x_k^2)``.
    With ``inverse=True`` the division becomes a multiplication by the same
    norm of the input (the one-shot decoder form; see ``gdn_exact_inverse``
    for the algebraic inverse of the forward map).

    Args:
        x: input of shape [B, C, H, W]
        beta: per-channel offsets, shape [C], all > 0
        gamma: channel-pair weights, shape [C, C], all >= 0
    """
    c = x.shape[1]
    norm = F.conv2d(x * x, gamma.view(c, c, 1, 1), bias=beta)
    norm = torch.sqrt(norm)
    return x * norm if inverse else x / norm


def gdn_exact_inverse(y: Tensor, beta: Tensor, gamma: Tensor) -> Tensor:
    """Algebraic inverse of ``gdn(..., inverse=False)`` with the same params.

    Solving x_c = y_c * sqrt(beta_c + sum_k gamma_ck x_k^2) in the squares
    gives the per-position linear system (I - diag(y^2) gamma) u = y^2 * beta
    with u = x^2, followed by the multiplicative reconstruction step.
    """
    b, c, h, w = y.shape
    v = (y * y).permute(0, 2, 3, 1).reshape(-1, c)  # [BHW, C]
    eye = torch.eye(c, dtype=y.dtype, device=y.device)
    a = eye.unsqueeze(0) - v.unsqueeze(2) * gamma.unsqueeze(0)
    u = torch.linalg.solve(a, (v * beta).unsqueeze(2)).squeeze(2)
    x = torch.sign(y) * torch.sqrt(u.clamp_min(0.0)).reshape(b, h, w, c).permute(0, 3, 1, 2)
    return x


class Gdn(nn.Module):
    """GDN layer with reparameterized parameters.

    Effective values are ``beta = beta_raw**2 + 1e-6`` (positive with floor)
    and ``gamma = gamma_raw**2`` (nonnegative, can reach exactly zero), so
    the invariants hold by construction for any raw values.
    """

    def __init__(self, channels: int, inverse: bool = False):
        super().__init__()
        self.inverse = inverse
        self.beta_raw = nn.Parameter(torch.full((channels,), math.sqrt(1.0 - _BETA_FLOOR)))
        gamma_init = math.sqrt(0.1) * torch.eye(channels) + math.sqrt(1e-4) * (
            1.0 - torch.eye(channels)
        )
        self.gamma_raw = nn.Parameter(gamma_init)

    @property
    def beta(self) -> Tensor:
        return self.beta_raw * self.beta_raw + _BETA_FLOOR

    @property
    def gamma(self) -> Tensor:
        return self.gamma_raw * self.gamma_raw

    def set_effective(self, beta: Tensor, gamma: Tensor) -> None:
        """Assign raw parameters so that the effective values match exactly."""
        with torch.no_grad():
            self.beta_raw.copy_(torch.sqrt((beta - _BETA_FLOOR).clamp_min(0.0)))
            self.gamma_raw.copy_(torch.sqrt(gamma.clamp_min(0.0)))

    def forward(self, x: Tensor) -> Tensor:
        return gdn(x, self.beta, self.gamma, inverse=self.inverse)


class ResidualBlock(nn.Module):
    """Three 3x3 convolutions, each followed by ReLU, plus a skip connection."""

    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.ReLU(inplace=True),
        )

    def forward(self, x: Tensor) -> Tensor:
        return x + self.body(x)


class _AttentionBranch(nn.Module):
    """Trunk/mask attention over one channel group."""

    def __init__(self, channels: int):
        super().__init__()
        self.trunk = nn.Sequential(*[ResidualBlock(channels) for _ in range(3)])
        self.mask = nn.Sequential(
            *[ResidualBlock(channels) for _ in range(3)],
            nn.Conv2d(channels, channels, 1),
        )
        self.proj = nn.Conv2d(channels, channels, 1)

    def forward(self, x: Tensor) -> Tensor:
        return x + self.proj(self.trunk(x) * torch.sigmoid(self.mask(x)))


class GroupSeparatedAttention(nn.Module):
    """Feature attention applied independently to channel groups.

    With ``groups=2`` (default) the channels are split into two contiguous
    halves, each runs its own trunk/mask branch and the results are
    concatenated; ``groups=1`` is the undivided simplified form.
    """

    def __init__(self, channels: int, groups: int = 2):
        super().__init__()
        if channels % groups != 0:
            raise ValueError(f"channel count {channels} not divisible by {groups} groups")
        self.groups = groups
        self.branches = nn.ModuleList(
            _AttentionBranch(channels // groups) for _ in range(groups)
        )

    def forward(self, x: Tensor) -> Tensor:
        if self.groups == 1:
            return self.branches[0](x)
        parts = torch.chunk(x, self.groups, dim=1)
        return torch.cat([br(p) for br, p in zip(self.branches, parts)], dim=1)


def _conv(in_ch: int, out_ch: int, kernel: int = 5, stride: int = 2) -> nn.Conv2d:
    return nn.Conv2d(in_ch, out_ch, kernel, stride=stride, padding=kernel // 2)


def _deconv(in_ch: int, out_ch: int, kernel: int = 5, stride: int = 2) -> nn.ConvTranspose2d:
    return nn.ConvTranspose2d(
        in_ch, out_ch, kernel, stride=stride, padding=kernel // 2, output_padding=stride - 1
    )


class AnalysisTransform(nn.Module):
    """Image -> latent, four stride-2 stages (16x downsampling)."""

    def __init__(self, n: int, m: int, attention_groups: int = 2):
        super().__init__()
        self.stages = nn.Sequential(
            _conv(3, n),
            Gdn(n),
            _conv(n, n),
            Gdn(n),
            GroupSeparatedAttention(n, attention_groups),
            _conv(n, n),
            Gdn(n),
            _conv(n, m),
            GroupSeparatedAttention(m, attention_groups),
        )

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[1] != 3:
            raise ValueError(f"expected 3 input channels, got {x.shape[1]}")
        if x.shape[2] % PAD_MULTIPLE or x.shape[3] % PAD_MULTIPLE:
            raise ValueError(
                f"spatial dims must be multiples of {PAD_MULTIPLE}, got {tuple(x.shape[2:])}"
            )
        return self.stages(x)


class SynthesisTransform(nn.Module):
    """Latent -> image, mirror of the analysis transform with inverse GDN."""

    def __init__(self, n: int, m: int, attention_groups: int = 2):
        super().__init__()
        self.m = m
        self.stages = nn.Sequential(
            GroupSeparatedAttention(m, attention_groups),
            _deconv(m, n),
            Gdn(n, inverse=True),
            _deconv(n, n),
            Gdn(n, inverse=True),
            GroupSeparatedAttention(n, attention_groups),
            _deconv(n, n),
            Gdn(n, inverse=True),
            _deconv(n, 3),
        )

    def forward(self, y_hat: Tensor, clamp: bool = True) -> Tensor:
        if y_hat.shape[1] != self.m:
            raise ValueError(f"expected {self.m} latent channels, got {y_hat.shape[1]}")
        x = self.stages(y_hat)
        return x.clamp(0.0, 1.0) if clamp else x


class HyperAnalysis(nn.Module):
    """Latent -> hyper-latent, two stride-2 stages (4x downsampling)."""

    def __init__(self, n: int, m: int):
        super().__init__()
        self.m = m
        self.stages = nn.Sequential(
            nn.Conv2d(m, n, 3, padding=1),
            nn.ReLU(inplace=True),
            _conv(n, n),
            nn.ReLU(inplace=True),
            _conv(n, n),
        )

    def forward(self, y: Tensor) -> Tensor:
        if y.shape[1] != self.m:
            raise ValueError(f"expected {self.m} latent channels, got {y.shape[1]}")
        return self.stages(y)


class HyperFeatures(nn.Module):
    """Hyper-latent -> conditioning features at latent resolution.

    Produces the shared feature volume consumed by both parameter heads;
    it does not itself output distribution parameters.
    """

    def __init__(self, n: int, feature_channels: int):
        super().__init__()
        self.stages = nn.Sequential(
            _deconv(n, n),
            nn.ReLU(inplace=True),
            _deconv(n, feature_channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(feature_channels, feature_channels, 3, padding=1),
        )

    def forward(self, z_hat: Tensor) -> Tensor:
        return self.stages(z_hat)


def pad_to_multiple(x: Tensor, multiple: int = PAD_MULTIPLE) -> tuple[Tensor, int, int]:
    """Replication-pad H and W up to the next multiple; returns original size."""
    h, w = x.shape[2], x.shape[3]
    ph = (multiple - h % multiple) % multiple
    pw = (multiple - w % multiple) % multiple
    if ph or pw:
        x = F.pad(x, (0, pw, 0, ph), mode="replicate")
    return x, h, w


def crop_to(x: Tensor, h: int, w: int) -> Tensor:
    return x[:, :, :h, :w]
