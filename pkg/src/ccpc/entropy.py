"""Conditional entropy models for the latent and hyper-latent volumes.

The latent volume is modeled per element by an I-component Gaussian
mixture whose parameters come from two independent estimation heads (one
per channel group); discrete probabilities are CDF differences over unit
bins. The hyper-latent uses a per-channel learned monotone CDF.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import Tensor, nn

SIGMA_MIN = 0.01
SIGMA_MAX = 16.0
P_MIN = 2.0**-15
_LOG_SIGMA_BOUND = 12.0


class InvalidParamsError(ValueError):
    """Mixture parameters violate their invariants."""


@dataclass
class GmmParams:
    """Per-element mixture parameters, trailing axis is the component."""

    pi: Tensor
    mu: Tensor
    sigma: Tensor

    def __post_init__(self) -> None:
        if not (self.pi.shape == self.mu.shape == self.sigma.shape):
            raise InvalidParamsError("pi/mu/sigma shapes differ")

    @property
    def mixtures(self) -> int:
        return self.pi.shape[-1]


def _std_normal_cdf(x: Tensor) -> Tensor:
    # complementary error function keeps precision in the tails
    return 0.5 * torch.erfc(-(2.0**-0.5) * x)


def discrete_gmm_likelihood(
    y_hat: Tensor, params: GmmParams, sigma_min: float = SIGMA_MIN, p_min: float = P_MIN
) -> Tensor:
    """P(y_hat) as the mixture CDF mass of the unit bin around each value.

    Args:
        y_hat: integer-valued tensor, shape equal to params without the
            trailing component axis.
        p_min: lower clamp on the returned probabilities (0 disables).
    """
    if (params.sigma < sigma_min).any():
        raise InvalidParamsError(f"sigma below {sigma_min}")
    values = (y_hat.unsqueeze(-1) - params.mu).abs()
    upper = _std_normal_cdf((0.5 - values) / params.sigma)
    lower = _std_normal_cdf((-0.5 - values) / params.sigma)
    probs = (params.pi * (upper - lower)).sum(dim=-1)
    if p_min > 0:
        probs = probs.clamp_min(p_min)
    return probs


class GmmHead(nn.Module):
    """Estimates mixture parameters from stacked conditioning volumes.

    A stack of 1x1 convolutions maps the concatenated conditioning
    channels to (pi, mu, sigma) for each of ``out_channels`` latent
    channels; pi is softmax-normalized and sigma exponentiated and
    clamped to [sigma_min, sigma_max], so the parameter invariants hold
    by construction (the upper clamp keeps effectively all mixture mass
    inside the coding alphabet).
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        hidden: int,
        mixtures: int = 3,
        sigma_max: float = SIGMA_MAX,
    ):
        super().__init__()
        self.out_channels = out_channels
        self.mixtures = mixtures
        self.sigma_max = sigma_max
        self.net = nn.Sequential(
            nn.Conv2d(in_channels, hidden, 1),
            nn.ReLU(inplace=True),
            nn.Conv2d(hidden, hidden, 1),
            nn.ReLU(inplace=True),
            nn.Conv2d(hidden, out_channels * 3 * mixtures, 1),
        )

    def forward(self, *conditioning: Tensor) -> GmmParams:
        x = torch.cat(conditioning, dim=1) if len(conditioning) > 1 else conditioning[0]
        raw = self.net(x)
        b, _, h, w = raw.shape
        raw = raw.view(b, self.out_channels, 3, self.mixtures, h, w).permute(0, 1, 4, 5, 2, 3)
        pi = torch.softmax(raw[..., 0, :], dim=-1)
        mu = raw[..., 1, :]
        sigma = torch.exp(
            raw[..., 2, :].clamp(-_LOG_SIGMA_BOUND, _LOG_SIGMA_BOUND)
        ).clamp(SIGMA_MIN, self.sigma_max)
        return GmmParams(pi=pi, mu=mu, sigma=sigma)


class FactorizedPrior(nn.Module):
    """Learned per-channel monotone CDF for the hyper-latent.

    Each channel owns a small chain of monotone maps (positive matrices,
    bounded tanh gates) ending in a sigmoid, the standard flexible
    univariate density construction.
    """

    def __init__(self, channels: int, filters: tuple[int, ...] = (3, 3, 3), init_scale: float = 10.0):
        super().__init__()
        self.channels = channels
        dims = (1, *filters, 1)
        scale = init_scale ** (1.0 / (len(dims) - 1))
        self.matrices = nn.ParameterList()
        self.biases = nn.ParameterList()
        self.factors = nn.ParameterList()
        for i in range(len(dims) - 1):
            init = math.log(math.expm1(1.0 / scale / dims[i + 1]))
            self.matrices.append(nn.Parameter(torch.full((channels, dims[i + 1], dims[i]), init)))
            bias = torch.empty(channels, dims[i + 1], 1).uniform_(-0.5, 0.5)
            self.biases.append(nn.Parameter(bias))
            if i < len(dims) - 2:
                self.factors.append(nn.Parameter(torch.zeros(channels, dims[i + 1], 1)))

    def cdf(self, x: Tensor) -> Tensor:
        """Evaluate the per-channel CDF; x has shape [C, ...]."""
        shape = x.shape
        logits = x.reshape(self.channels, 1, -1)
        for i, matrix in enumerate(self.matrices):
            logits = F.softplus(matrix) @ logits + self.biases[i]
            if i < len(self.factors):
                logits = logits + torch.tanh(self.factors[i]) * torch.tanh(logits)
        return torch.sigmoid(logits).reshape(shape)


def factorized_likelihood(z_hat: Tensor, prior: FactorizedPrior, p_min: float = P_MIN) -> Tensor:
    """P(z_hat) = CDF(z_hat + 1/2) - CDF(z_hat - 1/2), clamped below at p_min.

    z_hat has shape [B, C, h, w]; the prior is applied channel-wise.
    """
    x = z_hat.transpose(0, 1)  # [C, B, h, w]
    probs = prior.cdf(x + 0.5) - prior.cdf(x - 0.5)
    probs = probs.transpose(0, 1)
    if p_min > 0:
        probs = probs.clamp_min(p_min)
    return probs


@dataclass
class RateReport:
    """Coded-size accounting, in bits, split by stream."""

    bits_y_group1: float
    bits_y_group2: float
    bits_z: float
    num_pixels: int

    @property
    def total_bits(self) -> float:
        return self.bits_y_group1 + self.bits_y_group2 + self.bits_z

    @property
    def bpp(self) -> float:
        return self.total_bits / self.num_pixels

    @property
    def group1_share(self) -> float:
        y_bits = self.bits_y_group1 + self.bits_y_group2
        return self.bits_y_group1 / y_bits if y_bits > 0 else 0.0


def bits_of(probs: Tensor) -> Tensor:
    """Information content -sum log2 P of a probability tensor."""
    return -torch.log2(probs).sum()


def rate_bits(
    probs_group1: Tensor, probs_group2: Tensor | None, probs_z: Tensor, num_pixels: int
) -> RateReport:
    """Assemble a RateReport from per-element probabilities."""
    b2 = 0.0 if probs_group2 is None or probs_group2.numel() == 0 else bits_of(probs_group2).item()
    return RateReport(
        bits_y_group1=bits_of(probs_group1).item(),
        bits_y_group2=b2,
        bits_z=bits_of(probs_z).item(),
        num_pixels=num_pixels,
    )
