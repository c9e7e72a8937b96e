"""Float64 twin of the entropy-model side of the network, used for coding.

The encoder computes mixture parameters for all positions at once
(teacher forcing over the true quantized latents); the decoder recomputes
them one position at a time inside the serial loop. The coded stream is
only correct if both sides arrive at bit-identical CDF tables, so this
module re-implements the relevant forward math in double precision with
reduction orders that do not depend on how many positions are evaluated
together:

* all linear/convolution kernels reduce with a broadcast multiply followed
  by a sum over the last (contiguous) axis, whose summation order depends
  only on the reduced length;
* similarity scores on the integer-valued latents are exact in float64;
* reference fusion and score columns go through the same per-position
  helpers in both paths.

Everything here is pure NumPy/SciPy and single-threaded, so outputs are
also reproducible across processes.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, ndtr

from .config import ModelConfig
from .context import MaskSpec, build_mask

_LOG_SIGMA_BOUND = 12.0
CDF_TOTAL = 1 << 16
_LINEAR_CHUNK = 128


def _linear(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None) -> np.ndarray:
    """Row-wise affine map with a batch-size-independent reduction order.

    x: [P, Din]; weight: [Dout, Din]; returns [P, Dout].
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    p = x.shape[0]
    out = np.empty((p, weight.shape[0]), dtype=np.float64)
    for start in range(0, p, _LINEAR_CHUNK):
        chunk = x[start : start + _LINEAR_CHUNK]
        out[start : start + chunk.shape[0]] = (chunk[:, None, :] * weight[None, :, :]).sum(axis=2)
    if bias is not None:
        out += bias[None, :]
    return out


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def _conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, pad: int) -> np.ndarray:
    """Stride-1 convolution. x: [C, H, W], weight: [O, C, k, k] -> [O, H, W]."""
    o, c, k, _ = weight.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))  # [C, H, W, k, k]
    h, w = win.shape[1], win.shape[2]
    patches = np.ascontiguousarray(win.transpose(1, 2, 0, 3, 4)).reshape(h * w, c * k * k)
    out = _linear(patches, weight.reshape(o, c * k * k), bias)
    return np.ascontiguousarray(out.T).reshape(o, h, w)


def _deconv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Stride-2 transposed convolution, kernel 5, pad 2, output padding 1.

    x: [C, H, W]; weight in transposed-conv layout [C, O, 5, 5] -> [O, 2H, 2W].
    Implemented as zero-stuffing followed by a flipped-kernel correlation.
    """
    c, h, w = x.shape
    stuffed = np.zeros((c, 2 * h - 1 + 5, 2 * w - 1 + 5), dtype=np.float64)
    stuffed[:, 2 : 2 * h + 1 : 2, 2 : 2 * w + 1 : 2] = x
    kernel = np.ascontiguousarray(weight.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    return _conv2d(stuffed, kernel, bias, pad=0)


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _softmax_last(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _to_np(tensor) -> np.ndarray:
    return tensor.detach().cpu().numpy().astype(np.float64)


class CodecNet:
    """Deterministic evaluation of the conditioning and entropy paths."""

    def __init__(self, weights: dict, cfg: ModelConfig):
        self.w = weights
        self.cfg = cfg
        self.split = cfg.split_index if not cfg.single_group else cfg.m_channels
        k = cfg.mask_kernel
        self.mask_std = _to_np(
            build_mask(MaskSpec(k, "standard"), 1, cfg.m_channels)
        )[0].reshape(-1)
        if not cfg.single_group:
            self.mask_imp = _to_np(
                build_mask(MaskSpec(k, "improved", self.split), 1, cfg.m_channels)
            )[0].reshape(-1)

    @classmethod
    def from_model(cls, model) -> "CodecNet":
        cfg = model.cfg
        w: dict = {}
        hf = model.hyper_features.stages
        w["hf.deconv1.weight"], w["hf.deconv1.bias"] = _to_np(hf[0].weight), _to_np(hf[0].bias)
        w["hf.deconv2.weight"], w["hf.deconv2.bias"] = _to_np(hf[2].weight), _to_np(hf[2].bias)
        w["hf.conv3.weight"], w["hf.conv3.bias"] = _to_np(hf[4].weight), _to_np(hf[4].bias)

        def export_masked(conv, name):
            weight = _to_np(conv.weight * conv.mask)
            w[f"{name}.weight"] = weight.reshape(weight.shape[0], -1)
            w[f"{name}.bias"] = _to_np(conv.bias)

        def export_head(head, name):
            for idx, layer_idx in enumerate((0, 2, 4)):
                conv = head.net[layer_idx]
                w[f"{name}.l{idx}.weight"] = _to_np(conv.weight)[:, :, 0, 0]
                w[f"{name}.l{idx}.bias"] = _to_np(conv.bias)

        export_masked(model.ctx_standard, "ctx_std")
        export_head(model.head1, "head1")
        if not cfg.single_group:
            export_masked(model.ctx_improved, "ctx_imp")
            export_head(model.head2, "head2")
            if cfg.use_global:
                for idx, layer_idx in enumerate((0, 2, 4)):
                    lin = model.global_pred.mlp.net[layer_idx]
                    w[f"mlp.l{idx}.weight"] = _to_np(lin.weight)
                    w[f"mlp.l{idx}.bias"] = _to_np(lin.bias)
        w["prior.matrices"] = [_to_np(m) for m in model.prior.matrices]
        w["prior.biases"] = [_to_np(b) for b in model.prior.biases]
        w["prior.factors"] = [_to_np(f) for f in model.prior.factors]
        return cls(w, cfg)

    # ---------------- full-frame paths (run once per image) ----------------

    def hyper_feature_volume(self, z_hat: np.ndarray) -> np.ndarray:
        """[N, hz, wz] integer hyper-latents -> [F, h, w] features."""
        x = _relu(_deconv2d(z_hat.astype(np.float64), self.w["hf.deconv1.weight"], self.w["hf.deconv1.bias"]))
        x = _relu(_deconv2d(x, self.w["hf.deconv2.weight"], self.w["hf.deconv2.bias"]))
        return _conv2d(x, self.w["hf.conv3.weight"], self.w["hf.conv3.bias"], pad=1)

    def prior_cdf(self, x: np.ndarray) -> np.ndarray:
        """Per-channel monotone CDF of the hyper prior; x: [C, ...]."""
        shape = x.shape
        logits = x.reshape(shape[0], 1, -1).astype(np.float64)
        matrices, biases, factors = (
            self.w["prior.matrices"],
            self.w["prior.biases"],
            self.w["prior.factors"],
        )
        for i, matrix in enumerate(matrices):
            m = _softplus(matrix)
            logits = (m[:, :, :, None] * logits[:, None, :, :]).sum(axis=2) + biases[i]
            if i < len(factors):
                logits = logits + np.tanh(factors[i]) * np.tanh(logits)
        return expit(logits).reshape(shape)

    def z_cdf_tables(self) -> np.ndarray:
        """Quantized per-channel CDF tables over the hyper alphabet."""
        cfg = self.cfg
        grid = np.arange(cfg.z_min, cfg.z_max + 2, dtype=np.float64) - 0.5
        n = self.w["prior.matrices"][0].shape[0]
        cdf = self.prior_cdf(np.broadcast_to(grid, (n, grid.size)).copy())
        pmf = np.maximum(np.diff(cdf, axis=-1), cfg.p_min)
        return quantize_pmf(pmf)

    def z_pmf(self, z_hat_flat: np.ndarray, channel_ids: np.ndarray) -> np.ndarray:
        """Model probability of each hyper symbol (for rate accounting)."""
        cfg = self.cfg
        grid = np.arange(cfg.z_min, cfg.z_max + 2, dtype=np.float64) - 0.5
        n = self.w["prior.matrices"][0].shape[0]
        cdf = self.prior_cdf(np.broadcast_to(grid, (n, grid.size)).copy())
        pmf = np.maximum(np.diff(cdf, axis=-1), cfg.p_min)
        sym = (z_hat_flat - cfg.z_min).astype(np.int64)
        return pmf[channel_ids, sym]

    # ---------------- shared per-position kernels ----------------

    def _masked_context(self, patches: np.ndarray, improved: bool) -> np.ndarray:
        """patches: [P, M*K*K] raw window contents -> [P, C_ctx]."""
        mask = self.mask_imp if improved else self.mask_std
        name = "ctx_imp" if improved else "ctx_std"
        return _linear(patches * mask[None, :], self.w[f"{name}.weight"], self.w[f"{name}.bias"])

    def _head(self, name: str, x: np.ndarray, out_channels: int):
        """x: [P, Din] -> (pi, mu, sigma) each [P, C, I]."""
        h = _relu(_linear(x, self.w[f"{name}.l0.weight"], self.w[f"{name}.l0.bias"]))
        h = _relu(_linear(h, self.w[f"{name}.l1.weight"], self.w[f"{name}.l1.bias"]))
        raw = _linear(h, self.w[f"{name}.l2.weight"], self.w[f"{name}.l2.bias"])
        raw = raw.reshape(raw.shape[0], out_channels, 3, self.cfg.mixtures)
        pi = _softmax_last(np.ascontiguousarray(raw[:, :, 0, :]))
        mu = np.ascontiguousarray(raw[:, :, 1, :])
        sigma = np.clip(
            np.exp(np.clip(raw[:, :, 2, :], -_LOG_SIGMA_BOUND, _LOG_SIGMA_BOUND)),
            self.cfg.sigma_min,
            self.cfg.sigma_max,
        )
        return pi, mu, sigma

    def _mlp(self, vectors: np.ndarray) -> np.ndarray:
        """Shared reference MLP; vectors [P, M-s] -> [P, Cg]."""
        h = _relu(_linear(vectors, self.w["mlp.l0.weight"], self.w["mlp.l0.bias"]))
        h = _relu(_linear(h, self.w["mlp.l1.weight"], self.w["mlp.l1.bias"]))
        return _linear(h, self.w["mlp.l2.weight"], self.w["mlp.l2.bias"])

    def _score_column(self, g1_prev: np.ndarray, vec: np.ndarray) -> np.ndarray:
        """Similarity of every decoded group-1 vector against the current one."""
        if self.cfg.global_distance == "neg_l2":
            diff = g1_prev - vec[None, :]
            return -(diff * diff).sum(axis=1)
        dots = (g1_prev * vec[None, :]).sum(axis=1)
        norms = np.sqrt((g1_prev * g1_prev).sum(axis=1)) * max(
            np.sqrt(float((vec * vec).sum())), 1e-12
        )
        return dots / np.maximum(norms, 1e-12)

    def _select_references(self, col: np.ndarray, k: int) -> np.ndarray:
        """Indices of the top references: score desc, smaller index first."""
        if col.size == 0:
            return np.empty(0, dtype=np.int64)
        order = np.argsort(-col, kind="stable")
        return order[:k]

    def _fuse(self, refs: np.ndarray, mlp_cache: np.ndarray, k_pad: int) -> np.ndarray:
        """Mean MLP output over references, zero-padded to a fixed width."""
        cg = mlp_cache.shape[1]
        stacked = np.zeros((k_pad, cg), dtype=np.float64)
        if refs.size:
            stacked[: refs.size] = mlp_cache[refs]
        total = stacked.sum(axis=0)
        return total / max(int(refs.size), 1)

    def extract_patch(self, y_pad: np.ndarray, i: int, j: int) -> np.ndarray:
        """Window contents at latent position (i, j); y_pad is edge-padded."""
        k = self.cfg.mask_kernel
        return np.ascontiguousarray(y_pad[:, i : i + k, j : j + k]).reshape(1, -1)

    # ---------------- teacher-forced path (encoder) ----------------

    def teacher_forced_params(self, y_hat: np.ndarray, features: np.ndarray):
        """Mixture parameters for every position from the true latents.

        Args:
            y_hat: [M, h, w] integer latents
            features: [F, h, w] hyper features
        Returns:
            (params1, params2): tuples (pi, mu, sigma) with shape
            [P, C, I]; params2 is None in the single-group configuration.
        """
        cfg = self.cfg
        m, h, w = y_hat.shape
        p = h * w
        k = cfg.mask_kernel
        pad = k // 2
        y = y_hat.astype(np.float64)
        y_pad = np.pad(y, ((0, 0), (pad, pad), (pad, pad)))
        win = np.lib.stride_tricks.sliding_window_view(y_pad, (k, k), axis=(1, 2))
        patches = np.ascontiguousarray(win.transpose(1, 2, 0, 3, 4)).reshape(p, m * k * k)
        feat_rows = np.ascontiguousarray(features.reshape(features.shape[0], p).T)

        local_ctx = self._masked_context(patches, improved=False)
        params1 = self._head(
            "head1", np.concatenate([feat_rows, local_ctx], axis=1), self.split
        )
        if cfg.single_group:
            return params1, None

        improved_ctx = self._masked_context(patches, improved=True)
        if cfg.use_global:
            global_ctx = self._teacher_forced_global(y, p)
            head2_in = np.concatenate([feat_rows, improved_ctx, global_ctx], axis=1)
        else:
            head2_in = np.concatenate([feat_rows, improved_ctx], axis=1)
        params2 = self._head("head2", head2_in, m - self.split)
        return params1, params2

    def _teacher_forced_global(self, y: np.ndarray, p: int) -> np.ndarray:
        cfg = self.cfg
        s = self.split
        g1 = np.ascontiguousarray(y[:s].reshape(s, p).T)
        g2 = np.ascontiguousarray(y[s:].reshape(y.shape[0] - s, p).T)
        mlp_out = self._mlp(g2)
        k_pad = p if cfg.global_mode == "dense" else min(cfg.global_k, p)
        out = np.empty((p, mlp_out.shape[1]), dtype=np.float64)
        for n in range(p):
            col = self._score_column(g1[:n], g1[n])
            refs = self._select_references(col, k_pad)
            out[n] = self._fuse(refs, mlp_out, max(k_pad, 1))
        return out

    # ---------------- GMM -> quantized CDF tables ----------------

    def gmm_pmf(self, pi: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
        """Alphabet pmf for each element. Inputs [R, I] -> [R, S], clamped."""
        cfg = self.cfg
        edges = np.arange(cfg.y_min, cfg.y_max + 2, dtype=np.float64) - 0.5
        zval = (edges[None, :, None] - mu[:, None, :]) / sigma[:, None, :]
        cdf = ndtr(zval)  # [R, S+1, I]
        pmf = (np.diff(cdf, axis=1) * pi[:, None, :]).sum(axis=2)
        return np.maximum(pmf, cfg.p_min)

    def gmm_symbol_probs(self, values: np.ndarray, pi, mu, sigma) -> np.ndarray:
        """Model probability of given integer values (rate accounting)."""
        pmf = self.gmm_pmf(pi, mu, sigma)
        sym = (values - self.cfg.y_min).astype(np.int64)
        return pmf[np.arange(pmf.shape[0]), sym]


def quantize_pmf(pmf: np.ndarray) -> np.ndarray:
    """Deterministic 16-bit CDF tables; every symbol gets >= 1 count.

    pmf: [R, S] positive rows -> int64 [R, S+1], first 0, last 65536,
    strictly increasing. Counts are the rounded scaled probabilities, so a
    p_min-clamped tail lands exactly on round(p_min * 65536) and costs the
    coder what the model charged for it; the rounding residue is settled
    on the largest-count symbols, where one count is negligible.
    """
    pmf = np.asarray(pmf, dtype=np.float64)
    r, s = pmf.shape
    if s > CDF_TOTAL // 4:
        raise ValueError(f"alphabet of {s} symbols too large for 16-bit tables")
    scaled = pmf / pmf.sum(axis=1, keepdims=True) * CDF_TOTAL
    counts = np.rint(scaled).astype(np.int64)
    np.maximum(counts, 1, out=counts)
    arange = np.broadcast_to(np.arange(s), (r, s)).copy()
    for _ in range(CDF_TOTAL):  # settles in one pass except adversarial rows
        delta = CDF_TOTAL - counts.sum(axis=1)
        if not delta.any():
            break
        order = np.argsort(-counts, axis=1, kind="stable")
        rank = np.empty_like(order)
        np.put_along_axis(rank, order, arange, axis=1)
        growing = delta > 0
        counts[growing] += rank[growing] < delta[growing, None]
        shrinking = delta < 0
        if shrinking.any():
            # take one count from the largest symbols, never below one
            eligible = (counts > 1) & shrinking[:, None]
            elig_order = np.argsort(np.where(eligible, rank, s), axis=1, kind="stable")
            take_rank = np.empty_like(elig_order)
            np.put_along_axis(take_rank, elig_order, arange, axis=1)
            counts -= (take_rank < (-delta)[:, None]) & eligible
    else:
        raise AssertionError("CDF quantization failed to hit the 16-bit total")
    cdf = np.zeros((r, s + 1), dtype=np.int64)
    np.cumsum(counts, axis=1, out=cdf[:, 1:])
    return cdf


class SerialState:
    """Per-image decoder state reproducing the teacher-forced parameters.

    Usage per raster position n: ``stage1_params`` -> decode the first
    group -> ``commit_group1`` -> ``stage2_params`` -> decode the second
    group -> ``commit_group2``.
    """

    def __init__(self, net: CodecNet, features: np.ndarray, h: int, w: int):
        self.net = net
        cfg = net.cfg
        self.h, self.w = h, w
        self.p = h * w
        pad = cfg.mask_kernel // 2
        self.pad = pad
        self.y_pad = np.zeros((cfg.m_channels, h + 2 * pad, w + 2 * pad), dtype=np.float64)
        self.feat_rows = np.ascontiguousarray(
            features.reshape(features.shape[0], self.p).T
        )
        s = net.split
        self.two_stage = not cfg.single_group
        if self.two_stage and cfg.use_global:
            self.g1 = np.zeros((self.p, s), dtype=np.float64)
            cg = net.w["mlp.l2.weight"].shape[0]
            self.mlp_cache = np.zeros((self.p, cg), dtype=np.float64)
        self._patch_cache: np.ndarray | None = None

    def _pos(self, n: int) -> tuple[int, int]:
        return divmod(n, self.w)

    def stage1_params(self, n: int):
        i, j = self._pos(n)
        patch = self.net.extract_patch(self.y_pad, i, j)
        local_ctx = self.net._masked_context(patch, improved=False)
        x = np.concatenate([self.feat_rows[n : n + 1], local_ctx], axis=1)
        return self.net._head("head1", x, self.net.split)

    def commit_group1(self, n: int, values: np.ndarray) -> None:
        i, j = self._pos(n)
        s = self.net.split
        self.y_pad[:s, i + self.pad, j + self.pad] = values
        if self.two_stage and self.net.cfg.use_global:
            self.g1[n] = values

    def stage2_params(self, n: int):
        if not self.two_stage:
            raise RuntimeError("single-group model has no second stage")
        net = self.net
        cfg = net.cfg
        i, j = self._pos(n)
        patch = net.extract_patch(self.y_pad, i, j)
        improved_ctx = net._masked_context(patch, improved=True)
        if cfg.use_global:
            k_pad = self.p if cfg.global_mode == "dense" else min(cfg.global_k, self.p)
            col = net._score_column(self.g1[:n], self.g1[n])
            refs = net._select_references(col, k_pad)
            global_ctx = net._fuse(refs, self.mlp_cache, max(k_pad, 1))
            x = np.concatenate(
                [self.feat_rows[n : n + 1], improved_ctx, global_ctx[None, :]], axis=1
            )
        else:
            x = np.concatenate([self.feat_rows[n : n + 1], improved_ctx], axis=1)
        return net._head("head2", x, cfg.m_channels - net.split)

    def commit_group2(self, n: int, values: np.ndarray) -> None:
        i, j = self._pos(n)
        s = self.net.split
        self.y_pad[s:, i + self.pad, j + self.pad] = values
        if self.net.cfg.use_global:
            g2_vec = np.ascontiguousarray(values, dtype=np.float64)[None, :]
            self.mlp_cache[n] = self.net._mlp(g2_vec)[0]

    def decoded_volume(self) -> np.ndarray:
        if self.pad == 0:
            return self.y_pad.copy()
        return self.y_pad[:, self.pad : -self.pad, self.pad : -self.pad].copy()
