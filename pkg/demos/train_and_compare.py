"""Short training runs comparing where augmentation is applied.

Each mode trains the same small GAN on the toy distribution for a few
hundred steps.  The script prints the final proxy-FID per mode and plots
the discriminator loss curves.  Budgets this small are noisy; the
acceptance suite uses 2000 steps and five seeds.
"""
from pathlib import Path

from augan import data, trainer
from augan.augment import AugmentSpec
from augan.harness import emit

out = Path("demos_out/train")
out.mkdir(parents=True, exist_ok=True)
ds = data.gen_toy(2000, seed=0)
held_out = data.gen_toy(1024, seed=1).images

base = trainer.TrainConfig(steps=300, batch_size=64, eval_interval=100,
                           augment=(AugmentSpec("Translation", 0.1),))

curves = {}
for mode in ("baseline", "aug_real_only", "aug_real_fake", "bcr"):
    rec = trainer.run(trainer.with_mode(base, mode), ds, held_out)
    print(f"{mode:<14} proxy-FID by step: " + ", ".join(f"{s}:{f:.3f}" for s, f in rec.evals))
    # thin the curve so the SVG stays small
    curves[mode] = [(m["step"], m["L_D"]) for m in rec.losses[::10]]
    emit.emit_ppm_grid(rec.grids[rec.state.step], 8, out / f"{mode}_samples.ppm")

emit.emit_svg_lines(curves, "step", "L_D", out / "d_loss.svg", title="discriminator loss")
print(f"plots and sample grids in {out}")
