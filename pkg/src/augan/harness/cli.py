"""Command line front-end.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .. import augment, data as data_mod, evaluation, gan, trainer
from ..errors import AuganError, ConfigError
from . import emit
from .config import SweepConfig, config_from_dict, load_config
from .sweep import load_data, run_sweep, single_run

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
DEFAULT_RATIO_STRENGTHS = (0.1, 0.2, 0.3)


def _config(args) -> SweepConfig:
    return load_config(args.config) if args.config else config_from_dict({})


def _out(args, cfg, default):
    return Path(args.out or cfg.out_dir or default)


def cmd_train(args) -> int:
    cfg = _config(args)
    res = single_run(cfg, _out(args, cfg, "runs/train"), seed=args.seed)
    (key, rec), = res.records.items()
    print(f"final proxy-FID {rec.final_fid!r} after {len(rec.losses)} steps ({rec.wall_clock:.1f} s)")
    print(f"outputs in {res.out_dir}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if args.seed is not None:
        cfg = replace(cfg, seeds=(args.seed,))
    res = run_sweep(cfg, _out(args, cfg, "runs/sweep"), threads=args.threads)
    for row in res.summary:
        print(f"{row['kind']:<24} {row['strength']:<6g} {row['mode']:<14} "
              f"mean {row['mean_fid']:.4f}  std {row['std_fid']:.4f}  top15 {row['top15_fid']:.4f}")
    print(f"outputs in {res.out_dir}")
    return EXIT_OK


def load_source(spec: str, cfg: SweepConfig, seed: int) -> np.ndarray:
    """Image source: ``toy[:n[:seed]]``, ``cifar10:PATH``, ``idx:PATH``, ``ckpt:PATH[:n]`` or ``data``."""
    kind, _, rest = spec.partition(":")
    shape = tuple(cfg.base.model.image_shape)
    if kind == "toy":
        parts = rest.split(":") if rest else []
        n = int(parts[0]) if parts else cfg.base.eval_samples
        s = int(parts[1]) if len(parts) > 1 else seed
        return data_mod.gen_toy(n, dims=shape, seed=s).images
    if kind == "cifar10":
        return data_mod.load_cifar10(rest).images
    if kind == "idx":
        return data_mod.load_idx(rest).images
    if kind == "ckpt":
        path, _, n = rest.partition(":")
        n = int(n) if n else cfg.base.eval_samples
        model = cfg.base.model
        state = gan.load_checkpoint(path, model)
        z = trainer.stream(seed, "eval").standard_normal((n, model.latent_dim))
        return trainer.sample_images(state, z)
    if kind == "data":
        return load_data(cfg.data, cfg.base)[0].images
    raise ConfigError(f"unknown image source {spec!r} (toy, cifar10, idx, ckpt, data)", "--real/--fake")


def _fx(cfg: SweepConfig, images) -> evaluation.FeatureExtractor:
    return evaluation.FeatureExtractor(images.shape[1:], seed=cfg.base.feature_seed)


def cmd_eval(args) -> int:
    cfg = _config(args)
    seed = cfg.base.seed if args.seed is None else args.seed
    real = load_source(args.real, cfg, seed)
    fake = load_source(args.fake, cfg, seed + 1)
    d2 = evaluation.proxy_fid(_fx(cfg, real), real, fake)
    print(f"proxy-FID {d2!r}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        emit.write_csv(out / "eval.csv", ("real", "fake", "proxy_fid"),
                       [{"real": args.real, "fake": args.fake, "proxy_fid": d2}])
    return EXIT_OK


def trend(values) -> str:
    diffs = np.diff(np.asarray(values, dtype=np.float64))
    if np.all(diffs > 0):
        return "increasing"
    if np.all(diffs < 0):
        return "decreasing"
    if np.all(diffs == 0):
        return "flat"
    return "non-monotone"


def fid_ratio_table(cfg: SweepConfig, real, fake, kinds, strengths, seed: int) -> list[dict]:
    fx = _fx(cfg, real)
    rows = []
    for kind in kinds:
        for strength in strengths:
            specs = [s.with_strength(strength) for s in augment.parse_chain(kind)]
            rng = trainer.stream(seed, f"fid_ratio/{kind}/{strength!r}")
            ratio = evaluation.fid_ratio(fx, specs, real, fake, rng)
            rows.append({"kind": kind, "strength": float(strength), "fid_ratio": ratio})
    return rows


def cmd_fid_ratio(args) -> int:
    cfg = _config(args)
    seed = cfg.base.seed if args.seed is None else args.seed
    real = load_source(args.real, cfg, seed)
    fake = load_source(args.fake, cfg, seed + 1)
    kinds = list(augment.KINDS) if args.kinds is None else args.kinds.split(",")
    try:
        strengths = [float(v) for v in args.strengths.split(",")]
    except ValueError:
        raise ConfigError(f"cannot parse strengths {args.strengths!r}", "--strengths") from None
    for k in kinds:
        for s in strengths:
            try:
                for spec in augment.parse_chain(k, s):
                    spec.validate()
            except AuganError as exc:
                raise ConfigError(str(exc), "--kinds/--strengths") from None
    rows = fid_ratio_table(cfg, real, fake, kinds, strengths, seed)
    lines = ["FID ratio (augmented / clean proxy-FID) at strengths " + ", ".join(f"{s:g}" for s in strengths)]
    for k in kinds:
        vals = [r["fid_ratio"] for r in rows if r["kind"] == k]
        lines.append(f"{k:<24} " + " ".join(f"{v:.4f}" for v in vals) + f"  {trend(vals)}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        emit.write_csv(out / "fid_ratio.csv", ("kind", "strength", "fid_ratio"), rows)
        (out / "fid_ratio_report.txt").write_text(text, encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="augan", description="GAN augmentation laboratory.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file (defaults when omitted)")
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        sp.add_argument("--seed", type=int, help="master seed override")
        sp.add_argument("--threads", type=int, default=1, help="concurrent runs (sweep only)")

    sp = sub.add_parser("train", help="train the base configuration once")
    common(sp)
    sp.set_defaults(func=cmd_train)
    sp = sub.add_parser("sweep", help="train every kind x strength x mode x seed cell")
    common(sp)
    sp.set_defaults(func=cmd_sweep)
    sp = sub.add_parser("eval", help="proxy-FID between two image sources")
    common(sp)
    sp.add_argument("--real", default="data", help="image source (default: the configured data)")
    sp.add_argument("--fake", required=True, help="image source, e.g. ckpt:run.ckpt or toy:1024:7")
    sp.set_defaults(func=cmd_eval)
    sp = sub.add_parser("fid-ratio", help="augmented/clean proxy-FID ratio per kind and strength")
    common(sp)
    sp.add_argument("--real", default="data", help="image source (default: the configured data)")
    sp.add_argument("--fake", required=True, help="image source, e.g. ckpt:run.ckpt")
    sp.add_argument("--kinds", help="comma-separated kinds (default: all single kinds)")
    sp.add_argument("--strengths", default=",".join(map(str, DEFAULT_RATIO_STRENGTHS)))
    sp.set_defaults(func=cmd_fid_ratio)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors count as configuration errors
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AuganError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
