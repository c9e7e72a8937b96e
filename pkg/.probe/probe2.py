import time
from ccpc.ablation import run_ablation
from ccpc.config import ModelConfig, TrainConfig
from ccpc.datasets import SyntheticTextures

base = ModelConfig(n_channels=16, m_channels=8, group_ratio=0.5,
                   hyper_feature_channels=16, context_channels=16,
                   head_hidden=16, global_context_channels=16, global_k=4)
tc = TrainConfig(steps=800, batch_size=2, patch_size=64, seed=7,
                 lr=1.5e-4, lr_decay_step=650, num_images=256, log_every=1000)
ds = SyntheticTextures(num_images=4, size=128, seed=99)
eval_images = [ds[i] for i in range(4)]
t0 = time.time()
res = run_ablation("context", ["causal_global", "causal", "conventional"],
                   base, tc, [10, 50, 250, 1200], eval_images, out_dir=None)
print(f"total {time.time()-t0:.0f}s")
for label in res.points:
    for lam, p in zip(res.lambdas, res.points[label]):
        print(f"{label:14s} lam={lam:5g}: bpp={p.bpp:.4f} psnr={p.psnr:.2f} share={p.group1_share:.2f}")
print("BD causal vs conventional:", res.bdrate_vs("causal", "conventional"))
print("BD causal_global vs causal:", res.bdrate_vs("causal_global", "causal"))
