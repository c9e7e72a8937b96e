import sys
sys.path.insert(0, "tests")
import conftest

class FakeRequest: pass

# invoke the fixture function directly; it caches to tests/.cache
fixture_fn = conftest.model_zoo.__wrapped__ if hasattr(conftest.model_zoo, "__wrapped__") else conftest.model_zoo
result = fixture_fn()
for label in result.points:
    for lam, p in zip(result.lambdas, result.points[label]):
        print(f"{label:14s} lam={lam:5g}: bpp={p.bpp:.4f} psnr={p.psnr:.2f} share={p.group1_share:.2f}")
print("BD causal vs conventional:", result.bdrate_vs("causal", "conventional"))
print("BD causal_global vs causal:", result.bdrate_vs("causal_global", "causal"))
