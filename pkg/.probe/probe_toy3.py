import sys
sys.path.insert(0, "tests")
import conftest
from ccpc.config import ModelConfig, TrainConfig
from ccpc.datasets import SyntheticTextures
from ccpc.evaluate import estimate_bpp
from ccpc.codec import encode_image

cfg_kw = dict(conftest.TOY_MODEL_CFG)
tc_kw = dict(conftest.TOY_TRAIN_CFG)
tc_kw.update(steps=3000, lr_decay_step=2800)
model, hist = conftest.train_cached("toyprobe", ModelConfig(**cfg_kw), TrainConfig(**tc_kw))
print(f"final bpp_est {hist[-1]['bpp_est']:.4f} train psnr {hist[-1]['psnr']:.1f}", flush=True)
for size in (256, 384):
    ds = SyntheticTextures(num_images=8, size=size, seed=2025)
    errs = []
    for i in range(8):
        x = ds[i].unsqueeze(0)
        est = estimate_bpp(x, model) * size * size
        enc = encode_image(x, model)
        actual = 8.0 * (enc.len_z + enc.len_y)
        errs.append(abs(actual - est) / est)
    print(f"size {size}: mean rel err {sum(errs)/len(errs):.4%} max {max(errs):.4%}", flush=True)
