"""Model and training configuration."""

from __future__ import annotations

from dataclasses import dataclass, asdict
from pathlib import Path


@dataclass
class ModelConfig:
    """Architecture hyperparameters.

    ``n_channels`` / ``m_channels`` are the transform and latent widths.
    ``group_ratio`` sets the channel split: the first ``s = round(M * ratio)``
    latent channels are coded in stage one and condition the rest.
    ``group_ratio == 1.0`` selects the degenerate single-group configuration
    (one stage, plain masked convolution, no global prediction).
    """

    n_channels: int = 192
    m_channels: int = 192
    group_ratio: float = 0.5
    hyper_feature_channels: int = 0  # 0 -> 2 * m_channels
    context_channels: int = 0  # 0 -> 2 * m_channels
    head_hidden: int = 0  # 0 -> 2 * m_channels
    global_context_channels: int = 0  # 0 -> 2 * m_channels
    mixtures: int = 3
    mask_kernel: int = 5
    attention_groups: int = 2
    use_global: bool = True
    global_k: int = 4
    global_mode: str = "topk"  # topk | dense
    global_distance: str = "neg_l2"  # neg_l2 | cosine
    sigma_min: float = 0.01
    sigma_max: float = 16.0  # keeps mixture mass inside the coding alphabet
    p_min: float = 2.0**-15
    y_min: int = -64
    y_max: int = 63
    z_min: int = -64
    z_max: int = 63

    def __post_init__(self) -> None:
        if self.hyper_feature_channels == 0:
            self.hyper_feature_channels = 2 * self.m_channels
        if self.context_channels == 0:
            self.context_channels = 2 * self.m_channels
        if self.head_hidden == 0:
            self.head_hidden = 2 * self.m_channels
        if self.global_context_channels == 0:
            self.global_context_channels = 2 * self.m_channels
        if not 0.0 < self.group_ratio <= 1.0:
            raise ValueError(f"group_ratio must be in (0, 1], got {self.group_ratio}")
        if self.m_channels < 2:
            raise ValueError("m_channels must be >= 2")
        s = self.split_index
        if self.group_ratio < 1.0 and not 0 < s < self.m_channels:
            raise ValueError(f"split index {s} out of range for M={self.m_channels}")
        if self.global_mode not in ("topk", "dense"):
            raise ValueError(f"unknown global_mode {self.global_mode!r}")
        if self.global_distance not in ("neg_l2", "cosine"):
            raise ValueError(f"unknown global_distance {self.global_distance!r}")
        if self.mask_kernel % 2 == 0:
            raise ValueError("mask_kernel must be odd")

    @property
    def split_index(self) -> int:
        """Channel index separating the two latent groups."""
        return int(round(self.m_channels * self.group_ratio))

    @property
    def single_group(self) -> bool:
        return self.split_index >= self.m_channels

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def toy_config(**overrides) -> ModelConfig:
    """Desk-scale configuration used by tests and the bundled examples."""
    base = dict(
        n_channels=64,
        m_channels=32,
        group_ratio=0.5,
        hyper_feature_channels=64,
        context_channels=64,
        head_hidden=64,
        global_context_channels=64,
    )
    base.update(overrides)
    return ModelConfig(**base)


@dataclass
class TrainConfig:
    """Rate-distortion training settings."""

    lam: float = 300.0
    metric: str = "mse"  # mse | msssim
    lr: float = 5e-5
    lr_final: float = 1e-5
    lr_decay_step: int = 25_000
    steps: int = 30_000
    batch_size: int = 8
    patch_size: int = 128
    seed: int = 0
    log_every: int = 100
    data_dir: str = ""  # empty -> synthetic texture dataset
    num_images: int = 2000
    texture_kinds: str = ""  # comma list; empty -> all synthetic kinds

    def __post_init__(self) -> None:
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.metric not in ("mse", "msssim"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.patch_size % 64 != 0:
            raise ValueError("patch_size must be a multiple of 64")


def parse_config_file(path: str | Path) -> dict:
    """Parse a ``key = value`` config file into a dict of typed values."""
    values: dict = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line: {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        for caster in (int, float):
            try:
                values[key] = caster(val)
                break
            except ValueError:
                continue
        else:
            if val.lower() in ("true", "false"):
                values[key] = val.lower() == "true"
            else:
                values[key] = val
    return values
