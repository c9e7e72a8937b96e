import time, torch, numpy as np
from ccpc.ablation import run_ablation, variant_config
from ccpc.config import ModelConfig, TrainConfig
from ccpc.datasets import SyntheticTextures

base = ModelConfig(n_channels=16, m_channels=8, group_ratio=0.5,
                   hyper_feature_channels=16, context_channels=16,
                   head_hidden=16, global_context_channels=16, global_k=4)
tc = TrainConfig(steps=300, batch_size=2, patch_size=64, seed=7,
                 lr=1e-4, lr_decay_step=250, num_images=256, log_every=1000)
ds = SyntheticTextures(num_images=6, size=64, seed=99)
eval_images = [ds[i] for i in range(6)]
t0 = time.time()
res = run_ablation("context", ["causal_global", "causal", "conventional"],
                   base, tc, [30, 100, 300, 1000], eval_images, out_dir=None)
print(f"total {time.time()-t0:.0f}s")
for label in res.points:
    for lam, p in zip(res.lambdas, res.points[label]):
        print(f"{label:14s} lam={lam:5g}: bpp={p.bpp:.4f} psnr={p.psnr:.2f} share={p.group1_share:.2f}")
print("BD causal vs conventional:", res.bdrate_vs("causal", "conventional"))
print("BD causal_global vs causal:", res.bdrate_vs("causal_global", "causal"))
