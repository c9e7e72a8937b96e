import sys
sys.path.insert(0, "tests")
import conftest
from ccpc.config import ModelConfig, TrainConfig

model, history = conftest.train_cached(
    "toy", ModelConfig(**conftest.TOY_MODEL_CFG), TrainConfig(**conftest.TOY_TRAIN_CFG)
)
losses = [h["loss"] for h in history]
sm = conftest and None
from ccpc.training import smoothed
s = smoothed(losses, window=5)
steps = [h["step"] for h in history]
at100 = s[min(range(len(steps)), key=lambda i: abs(steps[i]-100))]
print(f"final smoothed loss {s[-1]:.3f} vs step-100 {at100:.3f} ratio {s[-1]/at100:.2f}")
print(f"final bpp_est {history[-1]['bpp_est']:.4f} train psnr {history[-1]['psnr']:.2f}")
