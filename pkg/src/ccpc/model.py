"""Full codec model: transforms, context models and entropy heads."""

from __future__ import annotations

from pathlib import Path

import torch
from torch import Tensor, nn

from .config import ModelConfig
from .context import MaskSpec, MaskedConv2d, split_channels
from .entropy import FactorizedPrior, GmmHead, discrete_gmm_likelihood, factorized_likelihood
from .globalpred import GlobalPredictor
from .transforms import AnalysisTransform, HyperAnalysis, HyperFeatures, SynthesisTransform

CHECKPOINT_VERSION = 1


def round_away(x: Tensor) -> Tensor:
    """Round to nearest integer, halves away from zero."""
    return torch.sign(x) * torch.floor(x.abs() + 0.5)


def ste_round(x: Tensor) -> Tensor:
    """Hard rounding with a straight-through gradient."""
    return x + (round_away(x) - x).detach()


class CodecModel(nn.Module):
    """Everything needed to train, encode and decode.

    The forward pass is the teacher-forced training path: every context is
    computed from the full hard-quantized latents, exactly what the serial
    decoder reconstructs position by position.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        n, m = cfg.n_channels, cfg.m_channels
        s = cfg.split_index
        self.analysis = AnalysisTransform(n, m, cfg.attention_groups)
        self.synthesis = SynthesisTransform(n, m, cfg.attention_groups)
        self.hyper_analysis = HyperAnalysis(n, m)
        self.hyper_features = HyperFeatures(n, cfg.hyper_feature_channels)
        self.prior = FactorizedPrior(n)
        head_in = cfg.hyper_feature_channels + cfg.context_channels
        self.ctx_standard = MaskedConv2d(
            MaskSpec(cfg.mask_kernel, "standard"), m, cfg.context_channels
        )
        self.head1 = GmmHead(head_in, s if not cfg.single_group else m,
                             cfg.head_hidden, cfg.mixtures, sigma_max=cfg.sigma_max)
        if not cfg.single_group:
            self.ctx_improved = MaskedConv2d(
                MaskSpec(cfg.mask_kernel, "improved", s), m, cfg.context_channels
            )
            head2_in = head_in + (cfg.global_context_channels if cfg.use_global else 0)
            self.head2 = GmmHead(head2_in, m - s, cfg.head_hidden, cfg.mixtures,
                                 sigma_max=cfg.sigma_max)
            if cfg.use_global:
                self.global_pred = GlobalPredictor(
                    m - s,
                    cfg.global_context_channels,
                    k=cfg.global_k,
                    mode=cfg.global_mode,
                    distance=cfg.global_distance,
                )

    def entropy_parameters(self, y_hard: Tensor, features: Tensor):
        """Teacher-forced mixture parameters for both groups.

        Args:
            y_hard: hard-quantized latents [B, M, h, w]
            features: hyper feature volume [B, F, h, w]
        Returns:
            (params_group1, params_group2); the second is None for the
            single-group configuration.
        """
        local_ctx = self.ctx_standard(y_hard)
        params1 = self.head1(features, local_ctx)
        if self.cfg.single_group:
            return params1, None
        improved_ctx = self.ctx_improved(y_hard)
        if self.cfg.use_global:
            g1, g2 = split_channels(y_hard, self.cfg.split_index)
            global_ctx = self.global_pred(g1, g2)
            params2 = self.head2(features, improved_ctx, global_ctx)
        else:
            params2 = self.head2(features, improved_ctx)
        return params1, params2

    def forward(self, x: Tensor, rate_input: str = "noise") -> dict:
        """Training/eval pass.

        ``rate_input`` selects the values the rate term is evaluated at:
        additive-uniform-noise surrogates during training, hard-rounded
        values for eval-time rate estimates.
        """
        if rate_input not in ("noise", "round"):
            raise ValueError(f"unknown rate_input {rate_input!r}")
        s = self.cfg.split_index
        y = self.analysis(x)
        z = self.hyper_analysis(y)
        z_hard = ste_round(z)
        y_hard = ste_round(y)
        if rate_input == "noise":
            y_rate = y + torch.empty_like(y).uniform_(-0.5, 0.5)
            z_rate = z + torch.empty_like(z).uniform_(-0.5, 0.5)
        else:
            y_rate = y_hard
            z_rate = z_hard
        features = self.hyper_features(z_hard)
        params1, params2 = self.entropy_parameters(y_hard, features)
        y1_rate, y2_rate = split_channels(y_rate, s)
        probs1 = discrete_gmm_likelihood(y1_rate, params1)
        probs2 = None if params2 is None else discrete_gmm_likelihood(y2_rate, params2)
        probs_z = factorized_likelihood(z_rate, self.prior)
        x_hat = self.synthesis(y_hard, clamp=not self.training)
        return {
            "x_hat": x_hat,
            "y": y,
            "y_hard": y_hard,
            "z": z,
            "probs_group1": probs1,
            "probs_group2": probs2,
            "probs_z": probs_z,
        }


def save_checkpoint(
    model: CodecModel, path: str | Path, quality_id: int = 0, meta: dict | None = None
) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "quality_id": int(quality_id),
        "model_config": model.cfg.to_dict(),
        "state_dict": model.state_dict(),
        "meta": meta or {},
    }
    torch.save(payload, str(path))


def load_checkpoint(path: str | Path) -> tuple[CodecModel, int, dict]:
    payload = torch.load(str(path), map_location="cpu", weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"checkpoint format {version} unsupported (want {CHECKPOINT_VERSION})")
    cfg = ModelConfig.from_dict(payload["model_config"])
    model = CodecModel(cfg)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload["quality_id"], payload.get("meta", {})
