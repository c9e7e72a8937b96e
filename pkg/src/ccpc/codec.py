"""End-to-end encoding and decoding with a real serial two-stage bitstream.

File layout (big-endian):

    magic   4 bytes  b"CCPC"
    version u8
    quality u8
    orig_H  u16      original image height before padding
    orig_W  u16
    grid_h  u16      latent grid height (padded H / 16)
    grid_w  u16
    len_z   u32      hyper-latent payload length in bytes
    z bytes
    len_y   u32      latent payload length in bytes
    y bytes

The hyper-latent stream is coded channel-major with per-channel tables;
the latent stream is coded per raster position, first-group channels
ascending then second-group channels ascending, under per-element GMM
tables that the decoder reproduces inside its serial loop.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np
import torch
from torch import Tensor

from .deterministic import CodecNet, SerialState, quantize_pmf
from .entropy import RateReport
from .model import CodecModel, round_away
from .rangecoder import CorruptStreamError, RangeDecoder, RangeEncoder
from .transforms import HYPER_FACTOR, crop_to, pad_to_multiple

MAGIC = b"CCPC"
FORMAT_VERSION = 1
_HEADER = struct.Struct(">4sBBHHHH")
_LEN = struct.Struct(">I")
_PMF_CHUNK = 8192


class BitstreamError(CorruptStreamError):
    """Malformed container or payload."""


def quantize(y: Tensor, mode: str = "round") -> Tensor:
    """Quantize latents: nearest integer (ties away from zero) or noise."""
    if mode == "round":
        return round_away(y)
    if mode == "noise":
        return y + torch.empty_like(y).uniform_(-0.5, 0.5)
    raise ValueError(f"unknown quantize mode {mode!r}")


def _clamp_symbols(values: np.ndarray, lo: int, hi: int, label: str) -> np.ndarray:
    clipped = np.clip(values, lo, hi)
    overflow = int((clipped != values).sum())
    if overflow:
        warnings.warn(
            f"{overflow} {label} values outside [{lo}, {hi}] were clamped before coding",
            stacklevel=3,
        )
    return clipped


@dataclass
class Header:
    quality_id: int
    orig_h: int
    orig_w: int
    grid_h: int
    grid_w: int


@dataclass
class EncodeResult:
    data: bytes
    x_hat: Tensor
    y_hat: np.ndarray
    z_hat: np.ndarray
    rate: RateReport  # model-probability bits per stream
    len_z: int
    len_y: int
    table_bits_y: float = 0.0  # cross entropy under the quantized tables
    table_bits_z: float = 0.0
    params1: tuple | None = None
    params2: tuple | None = None


@dataclass
class DecodeResult:
    x_hat: Tensor
    y_hat: np.ndarray
    z_hat: np.ndarray
    params1: tuple | None = None
    params2: tuple | None = None


def _build_tables(net: CodecNet, pi, mu, sigma, symbols):
    """Quantized CDF tables plus model and table probabilities per symbol."""
    rows = pi.shape[0]
    tables = np.empty((rows, net.cfg.y_max - net.cfg.y_min + 2), dtype=np.int64)
    probs = np.empty(rows, dtype=np.float64)
    for start in range(0, rows, _PMF_CHUNK):
        end = min(start + _PMF_CHUNK, rows)
        pmf = net.gmm_pmf(pi[start:end], mu[start:end], sigma[start:end])
        tables[start:end] = quantize_pmf(pmf)
        probs[start:end] = pmf[np.arange(end - start), symbols[start:end]]
    return tables, probs


def _table_bits(tables: np.ndarray, symbols: np.ndarray) -> float:
    """Cross entropy of the symbols under the quantized tables, in bits."""
    if symbols.size == 0:
        return 0.0
    counts = np.diff(tables, axis=1)[np.arange(symbols.size), symbols]
    return float(-np.log2(counts / CDF_TOTAL_F).sum())


CDF_TOTAL_F = float(1 << 16)


def encode_image(
    x: Tensor, model: CodecModel, quality_id: int = 0, collect_params: bool = False
) -> EncodeResult:
    """Compress one image tensor [1, 3, H, W] (or [3, H, W]) in [0, 1]."""
    if x.dim() == 3:
        x = x.unsqueeze(0)
    if x.shape[0] != 1:
        raise ValueError("encode_image takes a single image")
    cfg = model.cfg
    model.eval()
    x_padded, orig_h, orig_w = pad_to_multiple(x)
    with torch.no_grad():
        y = model.analysis(x_padded)
        z = model.hyper_analysis(y)
    y_hat = _clamp_symbols(
        round_away(y)[0].numpy().astype(np.int64), cfg.y_min, cfg.y_max, "latent"
    )
    z_hat = _clamp_symbols(
        round_away(z)[0].numpy().astype(np.int64), cfg.z_min, cfg.z_max, "hyper-latent"
    )
    grid_h, grid_w = y_hat.shape[1], y_hat.shape[2]

    net = CodecNet.from_model(model)
    features = net.hyper_feature_volume(z_hat.astype(np.float64))
    params1, params2 = net.teacher_forced_params(y_hat.astype(np.float64), features)

    # hyper-latent stream, channel-major
    z_tables = net.z_cdf_tables()
    z_lists = [row.tolist() for row in z_tables]
    n_ch = z_hat.shape[0]
    z_flat = z_hat.reshape(n_ch, -1)
    enc_z = RangeEncoder()
    for c in range(n_ch):
        table = z_lists[c]
        for v in z_flat[c]:
            enc_z.encode(table, int(v) - cfg.z_min)
    z_payload = enc_z.finish()
    z_channel_ids = np.repeat(np.arange(n_ch), z_flat.shape[1])
    z_probs = net.z_pmf(z_flat.reshape(-1), z_channel_ids)
    z_counts = np.diff(z_tables, axis=1)[
        z_channel_ids, (z_flat.reshape(-1) - cfg.z_min).astype(np.int64)
    ]
    table_bits_z = float(-np.log2(z_counts / CDF_TOTAL_F).sum())

    # latent stream: per position, group-1 channels then group-2 channels
    p = grid_h * grid_w
    s = net.split
    i_mix = cfg.mixtures
    y_rows = np.ascontiguousarray(y_hat.reshape(cfg.m_channels, p).T)  # [P, M]
    sym1 = (y_rows[:, :s].reshape(-1) - cfg.y_min).astype(np.int64)
    tables1, probs1 = _build_tables(
        net,
        params1[0].reshape(-1, i_mix),
        params1[1].reshape(-1, i_mix),
        params1[2].reshape(-1, i_mix),
        sym1,
    )
    if params2 is not None:
        n_group2 = cfg.m_channels - s
        sym2 = (y_rows[:, s:].reshape(-1) - cfg.y_min).astype(np.int64)
        tables2, probs2 = _build_tables(
            net,
            params2[0].reshape(-1, i_mix),
            params2[1].reshape(-1, i_mix),
            params2[2].reshape(-1, i_mix),
            sym2,
        )
    else:
        n_group2 = 0
        sym2 = np.empty(0, dtype=np.int64)
        tables2 = probs2 = None

    enc_y = RangeEncoder()
    for n in range(p):
        for c in range(s):
            row = n * s + c
            enc_y.encode(tables1[row].tolist(), int(sym1[row]))
        for c in range(n_group2):
            row = n * n_group2 + c
            enc_y.encode(tables2[row].tolist(), int(sym2[row]))
    y_payload = enc_y.finish()

    header = _HEADER.pack(
        MAGIC, FORMAT_VERSION, quality_id, orig_h, orig_w, grid_h, grid_w
    )
    data = (
        header
        + _LEN.pack(len(z_payload))
        + z_payload
        + _LEN.pack(len(y_payload))
        + y_payload
    )

    with torch.no_grad():
        x_hat = model.synthesis(torch.from_numpy(y_hat[None].astype(np.float32)))
    x_hat = crop_to(x_hat, orig_h, orig_w)
    rate = RateReport(
        bits_y_group1=float(-np.log2(probs1).sum()),
        bits_y_group2=0.0 if probs2 is None else float(-np.log2(probs2).sum()),
        bits_z=float(-np.log2(z_probs).sum()),
        num_pixels=orig_h * orig_w,
    )
    table_bits_y = _table_bits(tables1, sym1)
    if tables2 is not None:
        table_bits_y += _table_bits(tables2, sym2)
    return EncodeResult(
        data=data,
        x_hat=x_hat,
        y_hat=y_hat,
        z_hat=z_hat,
        rate=rate,
        len_z=len(z_payload),
        len_y=len(y_payload),
        table_bits_y=table_bits_y,
        table_bits_z=table_bits_z,
        params1=params1 if collect_params else None,
        params2=params2 if collect_params else None,
    )


def parse_header(data: bytes) -> tuple[Header, bytes, bytes]:
    """Validate the container and split out the two payloads."""
    if len(data) < _HEADER.size + _LEN.size:
        raise BitstreamError("file shorter than header")
    magic, version, quality, orig_h, orig_w, grid_h, grid_w = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BitstreamError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise BitstreamError(f"unsupported bitstream version {version}")
    off = _HEADER.size
    (len_z,) = _LEN.unpack_from(data, off)
    off += _LEN.size
    if len(data) < off + len_z + _LEN.size:
        raise BitstreamError("truncated hyper-latent payload")
    z_payload = data[off : off + len_z]
    off += len_z
    (len_y,) = _LEN.unpack_from(data, off)
    off += _LEN.size
    if len(data) != off + len_y:
        raise BitstreamError(
            f"file length {len(data)} != header-implied {off + len_y}"
        )
    y_payload = data[off:]
    header = Header(quality, orig_h, orig_w, grid_h, grid_w)
    return header, z_payload, y_payload


def decode_image(
    data: bytes,
    model: CodecModel,
    expected_quality: int | None = None,
    collect_params: bool = False,
) -> DecodeResult:
    """Decompress a bitstream produced by encode_image with the same model."""
    cfg = model.cfg
    model.eval()
    header, z_payload, y_payload = parse_header(data)
    if expected_quality is not None and header.quality_id != expected_quality:
        raise BitstreamError(
            f"bitstream quality {header.quality_id} does not match checkpoint {expected_quality}"
        )
    grid_h, grid_w = header.grid_h, header.grid_w
    hz, wz = grid_h // HYPER_FACTOR, grid_w // HYPER_FACTOR
    net = CodecNet.from_model(model)

    z_tables = net.z_cdf_tables()
    z_lists = [row.tolist() for row in z_tables]
    n_ch = z_tables.shape[0]
    dec_z = RangeDecoder(z_payload)
    z_hat = np.empty((n_ch, hz * wz), dtype=np.int64)
    for c in range(n_ch):
        table = z_lists[c]
        for idx in range(hz * wz):
            z_hat[c, idx] = dec_z.decode(table) + cfg.z_min
    z_hat = z_hat.reshape(n_ch, hz, wz)
    if dec_z.bytes_consumed != len(z_payload):
        raise BitstreamError(
            f"hyper stream consumed {dec_z.bytes_consumed} of {len(z_payload)} bytes"
        )

    features = net.hyper_feature_volume(z_hat.astype(np.float64))
    state = SerialState(net, features, grid_h, grid_w)
    dec_y = RangeDecoder(y_payload)
    s = net.split
    n_group2 = cfg.m_channels - s
    p = grid_h * grid_w
    collected1: list | None = [] if collect_params else None
    collected2: list | None = [] if collect_params and n_group2 else None
    for n in range(p):
        pi, mu, sigma = state.stage1_params(n)
        if collected1 is not None:
            collected1.append((pi, mu, sigma))
        tables = quantize_pmf(net.gmm_pmf(pi[0], mu[0], sigma[0]))
        values = np.empty(s, dtype=np.float64)
        for c in range(s):
            values[c] = dec_y.decode(tables[c].tolist()) + cfg.y_min
        state.commit_group1(n, values)
        if n_group2:
            pi, mu, sigma = state.stage2_params(n)
            if collected2 is not None:
                collected2.append((pi, mu, sigma))
            tables = quantize_pmf(net.gmm_pmf(pi[0], mu[0], sigma[0]))
            values = np.empty(n_group2, dtype=np.float64)
            for c in range(n_group2):
                values[c] = dec_y.decode(tables[c].tolist()) + cfg.y_min
            state.commit_group2(n, values)

    if dec_y.bytes_consumed != len(y_payload):
        raise BitstreamError(
            f"latent stream consumed {dec_y.bytes_consumed} of {len(y_payload)} bytes"
        )
    y_hat = state.decoded_volume().astype(np.int64)
    with torch.no_grad():
        x_hat = model.synthesis(torch.from_numpy(y_hat[None].astype(np.float32)))
    x_hat = crop_to(x_hat, header.orig_h, header.orig_w)

    def _stack(parts):
        if parts is None:
            return None
        return tuple(np.concatenate([t[k] for t in parts], axis=0) for k in range(3))

    return DecodeResult(
        x_hat=x_hat,
        y_hat=y_hat,
        z_hat=z_hat,
        params1=_stack(collected1),
        params2=_stack(collected2),
    )
