"""How strongly does each augmentation move the feature statistics?

For each kind the ratio compares proxy-FID after augmenting both image
sets with proxy-FID of the clean sets.  Identity gives exactly 1.
"""
import numpy as np

from augan import augment, data, evaluation
from augan.harness.cli import trend

real = data.gen_toy(1024, seed=10).images
fake = data.gen_toy(1024, seed=11).images * 0.9 + 0.05  # a slightly washed-out "generator"
fx = evaluation.FeatureExtractor(real.shape[1:], seed=0)
print(f"clean proxy-FID {evaluation.proxy_fid(fx, real, fake):.4f}\n")

for kind in augment.KINDS:
    ratios = [evaluation.fid_ratio(fx, augment.AugmentSpec(kind, s), real, fake, np.random.default_rng(0))
              for s in (0.1, 0.2, 0.3)]
    print(f"{kind:<14} " + "  ".join(f"{r:7.3f}" for r in ratios) + f"   {trend(ratios)}")
