import time
from ccpc.config import ModelConfig, TrainConfig
from ccpc.training import train
from ccpc.datasets import SyntheticTextures
from ccpc.evaluate import evaluate_dataset

base_kw = dict(n_channels=16, m_channels=8, group_ratio=0.5,
               hyper_feature_channels=16, context_channels=16,
               head_hidden=16, global_context_channels=16, global_k=4)
kinds = "tiles,blocks,gradients"
ds = SyntheticTextures(num_images=12, size=128, seed=99, kinds=tuple(kinds.split(",")))
eval_images = [ds[i] for i in range(12)]
for lam in (3, 100):
    for use_global in (True, False):
        cfg = ModelConfig(use_global=use_global, **base_kw)
        tc = TrainConfig(lam=lam, steps=2500, batch_size=2, patch_size=64, seed=7,
                         lr=3e-4, lr_decay_step=2200, num_images=256, log_every=2000,
                         texture_kinds=kinds)
        t0 = time.time()
        model, _ = train(cfg, tc)
        stats, point = evaluate_dataset(eval_images, model)
        tag = "causal_global" if use_global else "causal"
        print(f"{tag:14s} lam={lam:4g}: {time.time()-t0:.0f}s bpp={point.bpp:.4f} "
              f"psnr={point.psnr:.2f} share={point.group1_share:.2f}", flush=True)
