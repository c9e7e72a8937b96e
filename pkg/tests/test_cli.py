import subprocess
import sys

import numpy as np
import pytest
import torch
from PIL import Image

from ccpc.cli import load_image, main, save_image
from ccpc.codec import decode_image, encode_image
from ccpc.config import ModelConfig, TrainConfig
from ccpc.model import load_checkpoint
from ccpc.training import train


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory):
    out = tmp_path_factory.mktemp("ckpt")
    cfg = ModelConfig(
        n_channels=8,
        m_channels=6,
        group_ratio=0.5,
        hyper_feature_channels=8,
        context_channels=8,
        head_hidden=8,
        global_context_channels=8,
    )
    tc = TrainConfig(lam=100, steps=3, batch_size=1, patch_size=64, num_images=4, seed=2)
    train(cfg, tc, out_dir=out, quality_id=1)
    return out / "model.pt"


@pytest.fixture(scope="module")
def png(tmp_path_factory):
    path = tmp_path_factory.mktemp("img") / "input.png"
    rng = np.random.default_rng(3)
    base = np.kron(rng.random((8, 8, 3)), np.ones((8, 8, 1)))
    Image.fromarray((base * 255).astype(np.uint8)).save(path)
    return path


class TestImageIo:
    def test_load_save_roundtrip(self, tmp_path, png):
        x = load_image(png)
        assert x.shape == (1, 3, 64, 64)
        save_image(x, tmp_path / "copy.png")
        assert torch.equal(load_image(tmp_path / "copy.png"), x)


class TestCompressDecompress:
    def test_cli_matches_in_process_roundtrip(self, checkpoint, png, tmp_path):
        bitstream = tmp_path / "img.ccpc"
        recon = tmp_path / "recon.png"
        assert main(["compress", "-i", str(png), "-o", str(bitstream), "-m", str(checkpoint)]) == 0
        assert main(["decompress", "-i", str(bitstream), "-o", str(recon), "-m", str(checkpoint)]) == 0

        model, quality, _ = load_checkpoint(checkpoint)
        x = load_image(png)
        enc = encode_image(x, model, quality_id=quality)
        assert bitstream.read_bytes() == enc.data
        dec = decode_image(enc.data, model, expected_quality=quality)
        want = (dec.x_hat[0].clamp(0, 1) * 255.0).round().byte()
        got = torch.from_numpy(np.asarray(Image.open(recon)).copy()).permute(2, 0, 1)
        assert torch.equal(got, want)

    def test_cli_roundtrip_in_subprocesses(self, checkpoint, png, tmp_path):
        """Separate compress/decompress processes agree with in-process run."""
        bitstream = tmp_path / "img.ccpc"
        recon = tmp_path / "recon.png"
        for argv in (
            ["compress", "-i", str(png), "-o", str(bitstream), "-m", str(checkpoint)],
            ["decompress", "-i", str(bitstream), "-o", str(recon), "-m", str(checkpoint)],
        ):
            proc = subprocess.run(
                [sys.executable, "-m", "ccpc.cli", *argv],
                capture_output=True,
                text=True,
                timeout=300,
            )
            assert proc.returncode == 0, proc.stderr
        model, quality, _ = load_checkpoint(checkpoint)
        enc = encode_image(load_image(png), model, quality_id=quality)
        assert bitstream.read_bytes() == enc.data
        want = (enc.x_hat[0].clamp(0, 1) * 255.0).round().byte()
        got = torch.from_numpy(np.asarray(Image.open(recon)).copy()).permute(2, 0, 1)
        assert torch.equal(got, want)

    def test_missing_input_fails_with_message(self, checkpoint, tmp_path, capsys):
        rc = main(
            ["compress", "-i", str(tmp_path / "nope.png"), "-o",
             str(tmp_path / "x.ccpc"), "-m", str(checkpoint)]
        )
        assert rc == 1
        assert "compress" in capsys.readouterr().err


class TestEvalCommand:
    def test_eval_emits_csv_and_figure(self, checkpoint, tmp_path, capsys):
        csv_path = tmp_path / "rd.csv"
        rc = main(
            ["eval", "-m", str(checkpoint), "--emit-rd", str(csv_path),
             "--num-synthetic", "2", "--synthetic-size", "64"]
        )
        assert rc == 0
        header = csv_path.read_text().splitlines()[0]
        assert header == "bpp,psnr,msssim,bits_g1,bits_g2,bits_z"
        assert csv_path.with_suffix(".png").exists()
        assert "mean bpp" in capsys.readouterr().out

    def test_eval_on_folder(self, checkpoint, png, tmp_path, capsys):
        rc = main(
            ["eval", "-m", str(checkpoint), "-d", str(png.parent),
             "--emit-rd", str(tmp_path / "rd.csv")]
        )
        assert rc == 0


class TestTrainCommand:
    def test_train_writes_artifacts(self, tmp_path):
        out = tmp_path / "run"
        cfg_file = tmp_path / "model.cfg"
        cfg_file.write_text(
            "n_channels = 8\nm_channels = 6\ngroup_ratio = 0.5\n"
            "hyper_feature_channels = 8\ncontext_channels = 8\n"
            "head_hidden = 8\nglobal_context_channels = 8\n"
        )
        rc = main(
            ["train", "--config", str(cfg_file), "--steps", "2", "--batch-size", "1",
             "--patch-size", "64", "--out", str(out), "--quality", "3"]
        )
        assert rc == 0
        assert (out / "model.pt").exists()
        assert (out / "train_log.jsonl").exists()
        assert (out / "training_curves.png").exists()
        model, quality, _ = load_checkpoint(out / "model.pt")
        assert quality == 3 and model.cfg.m_channels == 6


class TestAblateCommand:
    def test_requires_exactly_one_kind(self, tmp_path, capsys):
        rc = main(["ablate", "--out", str(tmp_path)])
        assert rc == 2

    def test_micro_k_sweep(self, tmp_path, capsys):
        cfg_file = tmp_path / "model.cfg"
        cfg_file.write_text(
            "n_channels = 8\nm_channels = 6\ngroup_ratio = 0.5\n"
            "hyper_feature_channels = 8\ncontext_channels = 8\n"
            "head_hidden = 8\nglobal_context_channels = 8\n"
        )
        rc = main(
            ["ablate", "--k", "2,all", "--lambdas", "100,300", "--steps", "2",
             "--batch-size", "1", "--patch-size", "64", "--config", str(cfg_file),
             "--eval-images", "2", "--eval-size", "64", "--out", str(tmp_path / "sweep")]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert "k=2" in out and "k=all" in out
        assert (tmp_path / "sweep" / "k_sweep.csv").exists()
        assert (tmp_path / "sweep" / "k_rd_curves.png").exists()
