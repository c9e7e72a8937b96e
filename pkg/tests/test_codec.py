import numpy as np
import pytest
import torch

from ccpc.codec import (
    BitstreamError,
    decode_image,
    encode_image,
    parse_header,
    quantize,
)
from ccpc.config import ModelConfig
from ccpc.model import CodecModel
from ccpc.rangecoder import CorruptStreamError


def small_cfg(**kw):
    base = dict(
        n_channels=8,
        m_channels=6,
        group_ratio=0.5,
        hyper_feature_channels=12,
        context_channels=12,
        head_hidden=16,
        global_context_channels=8,
    )
    base.update(kw)
    return ModelConfig(**base)


@pytest.fixture(scope="module")
def model():
    torch.manual_seed(0)
    return CodecModel(small_cfg()).eval()


class TestQuantize:
    def test_round_ties_away_from_zero(self):
        y = torch.tensor([2.5, -2.5, 1.2, -1.2, 0.5, -0.5])
        assert quantize(y).tolist() == [3.0, -3.0, 1.0, -1.0, 1.0, -1.0]

    def test_noise_bounded(self):
        y = torch.randn(1000)
        noisy = quantize(y, mode="noise")
        assert ((noisy - y).abs() <= 0.5).all()

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            quantize(torch.zeros(1), mode="stochastic")


class TestRoundTrip:
    def test_bit_exact_roundtrip_64(self, model):
        torch.manual_seed(1)
        x = torch.rand(1, 3, 64, 64)
        enc = encode_image(x, model)
        dec = decode_image(enc.data, model)
        assert np.array_equal(dec.y_hat, enc.y_hat)
        assert np.array_equal(dec.z_hat, enc.z_hat)
        assert torch.equal(dec.x_hat, enc.x_hat)
        assert dec.x_hat.shape == (1, 3, 64, 64)

    def test_bit_exact_roundtrip_128(self, model):
        torch.manual_seed(2)
        x = torch.rand(1, 3, 128, 128)
        enc = encode_image(x, model)
        dec = decode_image(enc.data, model)
        assert np.array_equal(dec.y_hat, enc.y_hat)
        assert np.array_equal(dec.z_hat, enc.z_hat)
        assert torch.equal(dec.x_hat, enc.x_hat)

    def test_padding_and_crop_for_odd_sizes(self, model):
        torch.manual_seed(3)
        x = torch.rand(1, 3, 100, 80)
        enc = encode_image(x, model)
        dec = decode_image(enc.data, model)
        assert dec.x_hat.shape == (1, 3, 100, 80)
        assert torch.equal(dec.x_hat, enc.x_hat)

    @pytest.mark.parametrize(
        "cfg_kw",
        [{"group_ratio": 1.0}, {"use_global": False}, {"global_mode": "dense"}],
    )
    def test_roundtrip_model_variants(self, cfg_kw):
        torch.manual_seed(4)
        variant = CodecModel(small_cfg(**cfg_kw)).eval()
        x = torch.rand(1, 3, 64, 64)
        enc = encode_image(x, variant)
        dec = decode_image(enc.data, variant)
        assert np.array_equal(dec.y_hat, enc.y_hat)
        assert torch.equal(dec.x_hat, enc.x_hat)

    def test_deterministic_bitstream(self, model):
        torch.manual_seed(5)
        x = torch.rand(1, 3, 64, 64)
        assert encode_image(x, model).data == encode_image(x.clone(), model).data


class TestContextEquivalence:
    def test_teacher_forced_equals_serial_params(self, model):
        torch.manual_seed(6)
        x = torch.rand(1, 3, 64, 64)
        enc = encode_image(x, model, collect_params=True)
        dec = decode_image(enc.data, model, collect_params=True)
        for got, want in (
            (dec.params1, enc.params1),
            (dec.params2, enc.params2),
        ):
            for g_arr, w_arr in zip(got, want):
                assert np.array_equal(g_arr, w_arr)


class TestStreamAccounting:
    def test_coded_size_close_to_table_entropy(self, model):
        # the binding bound is against the quantized tables the coder uses;
        # the model-probability rate can sit above actual when many symbols
        # land in p_min-clamped tails
        torch.manual_seed(7)
        x = torch.rand(1, 3, 128, 128)
        enc = encode_image(x, model)
        assert enc.table_bits_y <= 8 * enc.len_y <= enc.table_bits_y * 1.001 + 256
        assert enc.table_bits_z <= 8 * enc.len_z <= enc.table_bits_z * 1.001 + 256

    def test_model_bits_track_table_bits(self, model):
        torch.manual_seed(7)
        x = torch.rand(1, 3, 128, 128)
        enc = encode_image(x, model)
        ideal_y = enc.rate.bits_y_group1 + enc.rate.bits_y_group2
        assert enc.table_bits_y == pytest.approx(ideal_y, rel=0.05)
        assert enc.table_bits_z == pytest.approx(enc.rate.bits_z, rel=0.05)

    def test_rate_report_pixels_use_original_size(self, model):
        torch.manual_seed(8)
        x = torch.rand(1, 3, 100, 80)
        enc = encode_image(x, model)
        assert enc.rate.num_pixels == 100 * 80


class TestErrors:
    def test_truncated_payload_raises(self, model):
        torch.manual_seed(9)
        enc = encode_image(torch.rand(1, 3, 64, 64), model)
        with pytest.raises(CorruptStreamError):
            decode_image(enc.data[: len(enc.data) // 2], model)

    def test_mid_payload_truncation_raises(self, model):
        torch.manual_seed(10)
        enc = encode_image(torch.rand(1, 3, 64, 64), model)
        # keep the container consistent but cut y bytes from the end
        with pytest.raises(CorruptStreamError):
            decode_image(enc.data[:-4], model)

    def test_bad_magic(self, model):
        with pytest.raises(BitstreamError):
            parse_header(b"NOPE" + bytes(40))

    def test_bad_version(self, model):
        torch.manual_seed(11)
        enc = encode_image(torch.rand(1, 3, 64, 64), model)
        data = bytearray(enc.data)
        data[4] = 99
        with pytest.raises(BitstreamError):
            decode_image(bytes(data), model)

    def test_quality_mismatch(self, model):
        torch.manual_seed(12)
        enc = encode_image(torch.rand(1, 3, 64, 64), model, quality_id=3)
        with pytest.raises(BitstreamError):
            decode_image(enc.data, model, expected_quality=5)
        decode_image(enc.data, model, expected_quality=3)


class TestClamping:
    def test_overflow_warns_and_still_roundtrips(self):
        torch.manual_seed(13)
        cramped = CodecModel(small_cfg(y_min=-2, y_max=1, z_min=-2, z_max=1)).eval()
        with torch.no_grad():
            cramped.analysis.stages[7].bias.add_(6.0)  # push latents past y_max
        x = torch.rand(1, 3, 64, 64)
        with pytest.warns(UserWarning, match="clamped"):
            enc = encode_image(x, cramped)
        assert enc.y_hat.min() >= -2 and enc.y_hat.max() <= 1
        dec = decode_image(enc.data, cramped)
        assert np.array_equal(dec.y_hat, enc.y_hat)
        # encoder-side reconstruction already used the clamped values
        assert torch.equal(dec.x_hat, enc.x_hat)
