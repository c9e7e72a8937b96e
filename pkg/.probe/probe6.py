import time
from ccpc.config import ModelConfig, TrainConfig
from ccpc.training import train
from ccpc.datasets import SyntheticTextures
from ccpc.evaluate import evaluate_dataset

base_kw = dict(n_channels=16, m_channels=8, group_ratio=0.5,
               hyper_feature_channels=16, context_channels=16,
               head_hidden=16, global_context_channels=16, global_k=4)
kinds = "bigtiles,blocks"
ds = SyntheticTextures(num_images=8, size=128, seed=99, kinds=tuple(kinds.split(",")))
eval_images = [ds[i] for i in range(8)]
for use_global in (True, False):
    cfg = ModelConfig(use_global=use_global, **base_kw)
    tc = TrainConfig(lam=30, steps=1500, batch_size=1, patch_size=128, seed=7,
                     lr=3e-4, lr_decay_step=1300, num_images=256, log_every=1500,
                     texture_kinds=kinds)
    t0 = time.time()
    model, _ = train(cfg, tc)
    stats, point = evaluate_dataset(eval_images, model)
    tag = "causal_global" if use_global else "causal"
    print(f"{tag:14s}: {time.time()-t0:.0f}s bpp={point.bpp:.4f} psnr={point.psnr:.2f} "
          f"share={point.group1_share:.2f}", flush=True)
