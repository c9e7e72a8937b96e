import time
from ccpc.config import ModelConfig, TrainConfig
from ccpc.training import train
from ccpc.datasets import SyntheticTextures
from ccpc.evaluate import evaluate_dataset

cfg = ModelConfig(n_channels=16, m_channels=8, group_ratio=0.5,
                  hyper_feature_channels=16, context_channels=16,
                  head_hidden=16, global_context_channels=16)
ds = SyntheticTextures(num_images=4, size=128, seed=99, kinds=("blocks", "gradients"))
eval_images = [ds[i] for i in range(4)]
for lam in (10, 1200):
    tc = TrainConfig(lam=lam, steps=2000, batch_size=2, patch_size=64, seed=7,
                     lr=3e-4, lr_decay_step=1700, num_images=256, log_every=500)
    import dataclasses, ccpc.training as T
    # train on the same easy kinds
    orig = T._make_dataset
    T._make_dataset = lambda c: SyntheticTextures(num_images=c.num_images, size=max(c.patch_size,128), seed=c.seed, kinds=("blocks","gradients"))
    t0=time.time()
    model, hist = train(cfg, tc)
    T._make_dataset = orig
    stats, point = evaluate_dataset(eval_images, model)
    print(f"lam={lam}: {time.time()-t0:.0f}s bpp={point.bpp:.4f} psnr={point.psnr:.2f} "
          f"final_loss={hist[-1]['loss']:.3f} train_psnr={hist[-1]['psnr']:.1f}", flush=True)
