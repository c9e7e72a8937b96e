"""Training/eval data: procedural textures plus an image-folder loader.

The synthetic generator is fully determined by (seed, index) and leans on
repeated motifs, gratings and blocky structures, so latents carry both
local and long-range structure worth exploiting.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from torch import Tensor

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")


def _tiled_motif(rng: np.random.Generator, size: int) -> np.ndarray:
    tile = rng.random((3, rng.integers(8, 25), rng.integers(8, 25)))
    reps = (1, size // tile.shape[1] + 1, size // tile.shape[2] + 1)
    img = np.tile(tile, reps)[:, :size, :size]
    return img


def _long_period_motif(rng: np.random.Generator, size: int) -> np.ndarray:
    # repetition period of several latent cells: too far for a masked-conv
    # window, ideal for reference-based prediction
    side = int(rng.integers(max(40, size // 3), max(72, size // 2)))
    tile = np.kron(rng.random((3, side // 8, side // 8)), np.ones((1, 8, 8)))
    reps = (1, size // tile.shape[1] + 1, size // tile.shape[2] + 1)
    return np.tile(tile, reps)[:, :size, :size]


def _gratings(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / size
    img = np.zeros((3, size, size))
    for c in range(3):
        fx, fy = rng.uniform(1, 12, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        img[c] = 0.5 + 0.5 * np.sin(2 * np.pi * (fx * xx + fy * yy) + phase)
    return img


def _blocks(rng: np.random.Generator, size: int) -> np.ndarray:
    img = np.broadcast_to(rng.random((3, 1, 1)), (3, size, size)).copy()
    stamp = rng.random((3, rng.integers(6, 17), rng.integers(6, 17)))
    for _ in range(rng.integers(6, 14)):
        i = int(rng.integers(0, size - stamp.shape[1]))
        j = int(rng.integers(0, size - stamp.shape[2]))
        img[:, i : i + stamp.shape[1], j : j + stamp.shape[2]] = stamp
    return img


def _gradient_noise(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / size
    base = np.stack([a * xx + b * yy for a, b in rng.uniform(-1, 1, size=(3, 2))])
    base = (base - base.min()) / max(np.ptp(base), 1e-6)
    noise = rng.random((3, size // 8, size // 8)).repeat(8, axis=1).repeat(8, axis=2)
    return 0.7 * base + 0.3 * noise[:, :size, :size]


_GENERATORS = {
    "tiles": _tiled_motif,
    "bigtiles": _long_period_motif,
    "gratings": _gratings,
    "blocks": _blocks,
    "gradients": _gradient_noise,
}


class SyntheticTextures:
    """Deterministic procedural image set.

    ``kinds`` selects a subset of the pattern generators (default: all
    four, cycled by index).
    """

    def __init__(
        self,
        num_images: int = 2000,
        size: int = 256,
        seed: int = 0,
        kinds: tuple[str, ...] = tuple(_GENERATORS),
    ):
        if size % 64 != 0:
            raise ValueError("size must be a multiple of 64")
        unknown = set(kinds) - set(_GENERATORS)
        if unknown:
            raise ValueError(f"unknown texture kinds {sorted(unknown)}")
        self.num_images = num_images
        self.size = size
        self.seed = seed
        self.kinds = tuple(kinds)

    def __len__(self) -> int:
        return self.num_images

    def __getitem__(self, index: int) -> Tensor:
        if not 0 <= index < self.num_images:
            raise IndexError(index)
        rng = np.random.default_rng((self.seed, index))
        gen = _GENERATORS[self.kinds[index % len(self.kinds)]]
        img = np.clip(gen(rng, self.size), 0.0, 1.0)
        return torch.from_numpy(img.astype(np.float32))


class ImageFolder:
    """Flat folder of images, loaded as [3, H, W] floats in [0, 1]."""

    def __init__(self, root: str | Path):
        self.paths = sorted(
            p for p in Path(root).iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS
        )
        if not self.paths:
            raise FileNotFoundError(f"no images found under {root}")

    def __len__(self) -> int:
        return len(self.paths)

    def __getitem__(self, index: int) -> Tensor:
        from PIL import Image

        with Image.open(self.paths[index]) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
        return torch.from_numpy(arr).permute(2, 0, 1)


def random_patch(img: Tensor, patch: int, rng: np.random.Generator) -> Tensor:
    """Random crop, replication-padded up if the image is too small."""
    c, h, w = img.shape
    if h < patch or w < patch:
        pad_h, pad_w = max(0, patch - h), max(0, patch - w)
        img = torch.nn.functional.pad(img.unsqueeze(0), (0, pad_w, 0, pad_h), mode="replicate")[0]
        h, w = img.shape[1], img.shape[2]
    i = int(rng.integers(0, h - patch + 1))
    j = int(rng.integers(0, w - patch + 1))
    return img[:, i : i + patch, j : j + patch]


def patch_batches(dataset, batch_size: int, patch: int, seed: int):
    """Endless generator of [B, 3, patch, patch] training batches."""
    rng = np.random.default_rng(seed)
    n = len(dataset)
    while True:
        idx = rng.integers(0, n, size=batch_size)
        yield torch.stack([random_patch(dataset[int(i)], patch, rng) for i in idx])
