"""Learned lossy image codec with two-group causal context modeling,
global reference prediction and a GMM hyperprior entropy model."""

from .codec import decode_image, encode_image, quantize
from .config import ModelConfig, TrainConfig, toy_config
from .entropy import GmmParams, RateReport, discrete_gmm_likelihood
from .metrics import bd_rate, ms_ssim, psnr
from .model import CodecModel, load_checkpoint, save_checkpoint
from .training import rd_loss, train

__version__ = "0.1.0"

__all__ = [
    "CodecModel",
    "GmmParams",
    "ModelConfig",
    "RateReport",
    "TrainConfig",
    "bd_rate",
    "decode_image",
    "discrete_gmm_likelihood",
    "encode_image",
    "load_checkpoint",
    "ms_ssim",
    "psnr",
    "quantize",
    "rd_loss",
    "save_checkpoint",
    "toy_config",
    "train",
]
