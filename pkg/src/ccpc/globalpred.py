"""Global reference prediction over decoded latents.

For every raster position the decoder already holds the first channel
group of all earlier positions, so pairwise similarities between those
group-1 vectors are available on both sides without any side information.
The k best-matching earlier positions are selected, their (fully decoded)
group-2 vectors run through a shared MLP, and the outputs are averaged
into a per-position global context vector.

Score convention: ``scores[m, n]`` compares candidate position m against
current position n and is finite only for m < n in raster order; all other
entries are -inf.
"""

from __future__ import annotations

import torch
from torch import Tensor, nn

NEG_INF = float("-inf")


def causal_scores(group1: Tensor, distance: str = "neg_l2") -> Tensor:
    """Pairwise similarity matrix with a strict causal mask.

    Args:
        group1: [P, s] or [B, P, s] group-1 vectors in raster order.
    Returns:
        [P, P] or [B, P, P] scores, entry (m, n) finite only for m < n.
    """
    squeeze = group1.dim() == 2
    if squeeze:
        group1 = group1.unsqueeze(0)
    g = group1.double()
    if distance == "neg_l2":
        gram = g @ g.transpose(1, 2)
        sq = torch.diagonal(gram, dim1=1, dim2=2)
        scores = -(sq.unsqueeze(2) + sq.unsqueeze(1) - 2.0 * gram)
    elif distance == "cosine":
        norms = g.norm(dim=2).clamp_min(1e-12)
        scores = (g @ g.transpose(1, 2)) / (norms.unsqueeze(2) * norms.unsqueeze(1))
    else:
        raise ValueError(f"unknown distance {distance!r}")
    p = scores.shape[1]
    future = ~torch.ones(p, p, dtype=torch.bool, device=scores.device).triu(1)
    scores = scores.masked_fill(future, NEG_INF)
    return scores.squeeze(0) if squeeze else scores


def topk_references(scores: Tensor, k: int) -> tuple[Tensor, Tensor]:
    """Select up to k causal references per position.

    Ordering is by descending score with ties broken by the smaller raster
    index (stable sort over candidates). Position n has min(k, n) references.

    Returns:
        indices: [..., P, k] reference raster indices (invalid slots are 0)
        counts:  [..., P] number of valid references per position
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    squeeze = scores.dim() == 2
    if squeeze:
        scores = scores.unsqueeze(0)
    p = scores.shape[1]
    k_eff = min(k, p)
    order = torch.argsort(-scores, dim=1, stable=True)  # candidates per column
    indices = order[:, :k_eff].transpose(1, 2)  # [B, P, k_eff]
    n_idx = torch.arange(p, device=scores.device)
    counts = torch.minimum(torch.full_like(n_idx, k_eff), n_idx)
    counts = counts.unsqueeze(0).expand(scores.shape[0], -1)
    slot = torch.arange(k_eff, device=scores.device).view(1, 1, -1)
    valid = slot < counts.unsqueeze(2)
    indices = torch.where(valid, indices, torch.zeros_like(indices))
    if squeeze:
        return indices.squeeze(0), counts.squeeze(0)
    return indices, counts


class ReferenceFusion(nn.Module):
    """Shared MLP applied to each reference vector, then averaged."""

    def __init__(self, in_dim: int, out_dim: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(in_dim, out_dim),
            nn.ReLU(inplace=True),
            nn.Linear(out_dim, out_dim),
            nn.ReLU(inplace=True),
            nn.Linear(out_dim, out_dim),
        )

    def forward(self, vectors: Tensor) -> Tensor:
        return self.net(vectors)


def gather_and_fuse(
    indices: Tensor, counts: Tensor, group2: Tensor, mlp: ReferenceFusion
) -> Tensor:
    """Average the MLP outputs of the selected reference vectors.

    Args:
        indices: [B, P, k] reference indices (invalid slots arbitrary)
        counts: [B, P] valid reference counts; 0 yields a zero vector
        group2: [B, P, c2] decoded second-group vectors
    Returns:
        [B, P, out_dim] global context vectors.
    """
    b, p, k = indices.shape
    p_src, dim2 = group2.shape[1], group2.shape[2]
    gathered = torch.gather(
        group2.unsqueeze(1).expand(b, p, p_src, dim2),
        2,
        indices.unsqueeze(3).expand(b, p, k, dim2),
    )
    fused = mlp(gathered)  # [B, P, k, out]
    slot = torch.arange(k, device=indices.device).view(1, 1, -1)
    valid = (slot < counts.unsqueeze(2)).unsqueeze(3).to(fused.dtype)
    total = (fused * valid).sum(dim=2)
    return total / counts.clamp_min(1).unsqueeze(2).to(fused.dtype)


class GlobalPredictor(nn.Module):
    """Builds the global context volume from decoded latent groups."""

    def __init__(
        self,
        group2_dim: int,
        out_channels: int,
        k: int = 4,
        mode: str = "topk",
        distance: str = "neg_l2",
    ):
        super().__init__()
        if mode not in ("topk", "dense"):
            raise ValueError(f"unknown mode {mode!r}")
        self.k = k
        self.mode = mode
        self.distance = distance
        self.mlp = ReferenceFusion(group2_dim, out_channels)
        self.out_channels = out_channels

    def forward(self, group1_hard: Tensor, group2_values: Tensor) -> Tensor:
        """Compute the global context for all positions (teacher forcing).

        Args:
            group1_hard: [B, s, h, w] decoded-value first group (scores only,
                gradients are not propagated through the similarities)
            group2_values: [B, c2, h, w] second group fed to the MLP
        """
        b, _, h, w = group1_hard.shape
        p = h * w
        g1 = group1_hard.flatten(2).transpose(1, 2).detach()
        g2 = group2_values.flatten(2).transpose(1, 2)
        scores = causal_scores(g1, self.distance)
        k = p if self.mode == "dense" else self.k
        indices, counts = topk_references(scores, k)
        fused = gather_and_fuse(indices, counts, g2, self.mlp)
        return fused.transpose(1, 2).reshape(b, self.out_channels, h, w)
