"""Render every augmentation kind on a handful of toy images.

Writes one PPM per kind into demos_out/gallery.  The first row of each
grid holds the clean images, the rows below hold three strengths.
"""
from pathlib import Path

import numpy as np

from augan import augment, data
from augan.harness import emit

out = Path("demos_out/gallery")
out.mkdir(parents=True, exist_ok=True)
clean = data.gen_toy(8, seed=3).images

# Spatial kinds top out at 0.5; MixUp strength is a Beta concentration.
strengths = {"MixUp": (0.2, 1.0, 5.0), "InstanceNoise": (0.001, 0.005, 0.02)}

for kind in augment.KINDS:
    rows = [clean]
    for i, s in enumerate(strengths.get(kind, (0.1, 0.25, 0.45))):
        rng = np.random.default_rng(i)
        rows.append(augment.augment_array([augment.AugmentSpec(kind, s)], rng, clean))
    # InstanceNoise leaves [0, 1]; the PPM writer clamps on output
    emit.emit_ppm_grid(np.concatenate(rows), cols=len(clean), path=out / f"{kind}.ppm")
    print(f"{kind:<14} -> {out / (kind + '.ppm')}")

# Chains apply left to right, each with its own draw.
chain = augment.parse_chain("Translation+Brightness", 0.2)
mixed = augment.augment_array(chain, np.random.default_rng(9), clean)
emit.emit_ppm_grid(np.concatenate([clean, mixed]), 8, out / "Translation+Brightness.ppm")
