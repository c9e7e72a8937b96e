"""Command-line interface: train, compress, decompress, eval, ablate."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np
import torch

from .ablation import run_ablation
from .codec import decode_image, encode_image
from .config import ModelConfig, TrainConfig, parse_config_file, toy_config
from .datasets import ImageFolder, SyntheticTextures
from .evaluate import evaluate_dataset
from .model import load_checkpoint
from .plots import rd_curve_figure, training_curve_figure
from .training import train


def load_image(path: str | Path) -> torch.Tensor:
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0)


def save_image(x: torch.Tensor, path: str | Path) -> None:
    from PIL import Image

    arr = (x[0].clamp(0, 1) * 255.0).round().byte().permute(1, 2, 0).numpy()
    Image.fromarray(arr).save(path)


_CONFIG_ALIASES = {
    "N": "n_channels",
    "M": "m_channels",
    "F": "hyper_feature_channels",
    "k": "global_k",
    "mode": "global_mode",
    "distance": "global_distance",
}


def _model_config(args) -> ModelConfig:
    if args.config:
        raw = parse_config_file(args.config)
        return ModelConfig(**{_CONFIG_ALIASES.get(k, k): v for k, v in raw.items()})
    return toy_config()


def cmd_train(args) -> int:
    model_cfg = _model_config(args)
    seed = int(os.environ.get("CCPC_SEED", args.seed))
    train_cfg = TrainConfig(
        lam=args.lam,
        metric=args.metric,
        steps=args.steps,
        batch_size=args.batch_size,
        patch_size=args.patch_size,
        lr_decay_step=args.lr_decay_step,
        seed=seed,
        data_dir=args.data or "",
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _, history = train(
        model_cfg,
        train_cfg,
        out_dir=out,
        quality_id=args.quality,
        log_file=out / "train_log.jsonl",
    )
    training_curve_figure(history, out / "training_curves.png")
    print(f"checkpoint written to {out / 'model.pt'}")
    return 0


def cmd_compress(args) -> int:
    model, quality, _ = load_checkpoint(args.model)
    x = load_image(args.input)
    result = encode_image(x, model, quality_id=quality)
    Path(args.output).write_bytes(result.data)
    bpp = 8.0 * len(result.data) / result.rate.num_pixels
    print(f"{args.input} -> {args.output}: {len(result.data)} bytes, {bpp:.4f} bpp")
    return 0


def cmd_decompress(args) -> int:
    model, quality, _ = load_checkpoint(args.model)
    data = Path(args.input).read_bytes()
    result = decode_image(data, model, expected_quality=quality)
    save_image(result.x_hat, args.output)
    print(f"{args.input} -> {args.output}")
    return 0


def cmd_eval(args) -> int:
    model, quality, _ = load_checkpoint(args.model)
    if args.data:
        images = [img for img in ImageFolder(args.data)]
    else:
        ds = SyntheticTextures(num_images=args.num_synthetic, size=args.synthetic_size, seed=1)
        images = [ds[i] for i in range(len(ds))]
    csv_path = Path(args.emit_rd)
    stats, point = evaluate_dataset(images, model, quality_id=quality, csv_path=csv_path)
    rd_curve_figure(
        {"model": [(s.bpp, s.psnr) for s in stats]},
        csv_path.with_suffix(".png"),
    )
    print(
        f"{len(stats)} images: mean bpp {point.bpp:.4f}, PSNR {point.psnr:.2f} dB, "
        f"MS-SSIM {point.msssim:.4f}, group-1 share {point.group1_share:.1%}"
    )
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ccpc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model")
    p_train.add_argument("--config", help="key = value model config file")
    p_train.add_argument("--lambda", dest="lam", type=float, default=300.0)
    p_train.add_argument("--metric", choices=("mse", "msssim"), default="mse")
    p_train.add_argument("--steps", type=int, default=30_000)
    p_train.add_argument("--batch-size", type=int, default=8)
    p_train.add_argument("--patch-size", type=int, default=128)
    p_train.add_argument("--lr-decay-step", type=int, default=25_000)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--quality", type=int, default=0)
    p_train.add_argument("--data", help="image folder (default: synthetic textures)")
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.set_defaults(func=cmd_train)

    p_comp = sub.add_parser("compress", help="compress an image")
    p_comp.add_argument("-i", "--input", required=True)
    p_comp.add_argument("-o", "--output", required=True)
    p_comp.add_argument("-m", "--model", required=True)
    p_comp.set_defaults(func=cmd_compress)

    p_dec = sub.add_parser("decompress", help="decompress a bitstream")
    p_dec.add_argument("-i", "--input", required=True)
    p_dec.add_argument("-o", "--output", required=True)
    p_dec.add_argument("-m", "--model", required=True)
    p_dec.set_defaults(func=cmd_decompress)

    p_eval = sub.add_parser("eval", help="evaluate a model on a dataset")
    p_eval.add_argument("-d", "--data", help="image folder (default: synthetic)")
    p_eval.add_argument("-m", "--model", required=True)
    p_eval.add_argument("--emit-rd", default="rd.csv", help="per-image CSV path")
    p_eval.add_argument("--num-synthetic", type=int, default=8)
    p_eval.add_argument("--synthetic-size", type=int, default=192)
    p_eval.set_defaults(func=cmd_eval)

    p_abl = sub.add_parser("ablate", help="train + evaluate an ablation sweep")
    p_abl.add_argument("--ratio", help="comma list of group ratios, e.g. 0.25,0.5,1.0")
    p_abl.add_argument("--k", help="comma list of reference counts, e.g. 2,4,6,all")
    p_abl.add_argument("--attention", help="comma list from {group,simple}")
    p_abl.add_argument("--context", help="comma list from {causal_global,causal,conventional}")
    p_abl.add_argument("--lambdas", default="30,100,300,1000")
    p_abl.add_argument("--steps", type=int, default=30_000)
    p_abl.add_argument("--batch-size", type=int, default=8)
    p_abl.add_argument("--patch-size", type=int, default=128)
    p_abl.add_argument("--seed", type=int, default=0)
    p_abl.add_argument("--config", help="key = value model config file")
    p_abl.add_argument("--eval-images", type=int, default=6)
    p_abl.add_argument("--eval-size", type=int, default=128)
    p_abl.add_argument("--out", required=True)
    p_abl.set_defaults(func=cmd_ablate_full)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # present a message, not a traceback
        print(f"ccpc {args.command}: {exc}", file=sys.stderr)
        return 1


def cmd_ablate_full(args) -> int:
    chosen = [
        (kind, getattr(args, kind))
        for kind in ("ratio", "k", "attention", "context")
        if getattr(args, kind)
    ]
    if len(chosen) != 1:
        print("ablate: pass exactly one of --ratio/--k/--attention/--context", file=sys.stderr)
        return 2
    kind, raw = chosen[0]
    if kind == "ratio":
        settings = [float(v) for v in raw.split(",")]
    elif kind == "k":
        settings = [v if v == "all" else int(v) for v in raw.split(",")]
    else:
        settings = raw.split(",")
    base_cfg = _model_config(args)
    seed = int(os.environ.get("CCPC_SEED", args.seed))
    train_cfg = TrainConfig(
        steps=args.steps,
        batch_size=args.batch_size,
        patch_size=args.patch_size,
        seed=seed,
    )
    lambdas = [float(v) for v in args.lambdas.split(",")]
    eval_set = SyntheticTextures(num_images=args.eval_images, size=args.eval_size, seed=99)
    eval_images = [eval_set[i] for i in range(len(eval_set))]
    result = run_ablation(
        kind, settings, base_cfg, train_cfg, lambdas, eval_images, out_dir=args.out
    )
    for label in result.points:
        for lam, point in zip(result.lambdas, result.points[label]):
            print(f"{kind}={label} lambda={lam:g}: {point.bpp:.4f} bpp, {point.psnr:.2f} dB")
    return 0


if __name__ == "__main__":
    sys.exit(main())
