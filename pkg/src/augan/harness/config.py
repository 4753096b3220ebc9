"""JSON experiment configuration.

A config is one JSON object with up to four sections; every key is
optional and unknown keys are rejected::

    {
      "train":  {"mode": "bcr", "augment": [{"kind": "Translation", "strength": 0.1}],
                 "batch_size": 64, "steps": 2000, "d_steps": 1, "anneal": false, "seed": 0,
                 "optimizer": {"lr_g": 2e-4, "lr_d": 2e-4, "beta1": 0.0, "beta2": 0.999, "eps": 1e-8},
                 "bcr": {"lambda_bcr": 10, "fake_term": true},
                 "cntr": {"lambda_cntr": 0.1, "tau": 0.1},
                 "model": {"latent_dim": 32, "image_shape": [3, 16, 16], "g_hidden": [256, 256],
                           "d_hidden": [256, 128], "proj_hidden": 128, "embed_dim": 64, "slope": 0.2},
                 "eval": {"interval": 0, "samples": 1024, "feature_seed": 0},
                 "grid_interval": 0},
      "data":   {"source": "toy", "n": 5000, "seed": 0, "eval_n": 1024, "eval_seed": 1, "path": null, "channels": 3},
      "sweep":  {"kinds": ["Translation", "Translation+Brightness"], "strengths": [0.1, 0.2],
                 "modes": ["aug_real_fake", "bcr"], "seeds": [0, 1, 2]},
      "output": {"dir": "runs/demo"}
    }

``augment`` may also be a kind string such as ``"Translation+Brightness"``
together with a top-level ``"strength"``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

from ..augment import KINDS, AugmentSpec, SimclrSpec, parse_chain
from ..errors import ConfigError, ContractError
from ..gan import GanConfig
from ..regularizers import BcrConfig, CntrConfig
from ..trainer import MODES, AdamConfig, TrainConfig, with_mode


@dataclass(frozen=True)
class DataConfig:
    source: str = "toy"
    path: str | None = None
    n: int = 5000
    seed: int = 0
    eval_n: int | None = None
    eval_seed: int = 1
    channels: int = 3


@dataclass(frozen=True)
class SweepConfig:
    base: TrainConfig
    kinds: tuple
    strengths: tuple
    modes: tuple
    seeds: tuple
    data: DataConfig = DataConfig()
    out_dir: str | None = None

    def cells(self):
        """(kind, strength, mode) triples in sweep order."""
        return [(k, s, m) for k in self.kinds for s in self.strengths for m in self.modes]

    def cell_config(self, kind: str, strength: float, mode: str, seed: int) -> TrainConfig:
        chain = tuple(
            replace(spec, strength=float(strength)) for spec in _chain_with_base(kind, self.base)
        )
        return with_mode(self.base, mode, augment=chain, seed=int(seed))


def _chain_with_base(kind, base: TrainConfig):
    """Parse a kind label, keeping per-kind settings (e.g. simclr jitter) from the base chain."""
    specs = parse_chain(kind)
    by_kind = {s.kind: s for s in base.augment}
    return [replace(by_kind[s.kind], strength=0.0, channel=s.channel) if s.kind in by_kind else s for s in specs]


# --- validation helpers --------------------------------------------------------

def _where(path):
    return ".".join(path) if path else "<root>"


def _obj(value, path, allowed):
    if not isinstance(value, dict):
        raise ConfigError(f"expected an object, got {type(value).__name__}", _where(path))
    for key in value:
        if key not in allowed:
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(allowed))})", _where(path + [key]))
    return value


def _num(value, path, lo=None, hi=None, lo_open=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {json.dumps(value)}", _where(path))
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError("must be finite", _where(path))
    if lo is not None and (value < lo or (lo_open and value == lo)):
        raise ConfigError(f"must be {'>' if lo_open else '>='} {lo}, got {value}", _where(path))
    if hi is not None and value > hi:
        raise ConfigError(f"must be <= {hi}, got {value}", _where(path))
    return value


def _int(value, path, lo=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"expected an integer, got {json.dumps(value)}", _where(path))
    if lo is not None and value < lo:
        raise ConfigError(f"must be >= {lo}, got {value}", _where(path))
    return value


def _bool(value, path):
    if not isinstance(value, bool):
        raise ConfigError(f"expected true or false, got {json.dumps(value)}", _where(path))
    return value


def _str(value, path, choices=None):
    if not isinstance(value, str):
        raise ConfigError(f"expected a string, got {json.dumps(value)}", _where(path))
    if choices is not None and value not in choices:
        raise ConfigError(f"must be one of {', '.join(choices)}; got {value!r}", _where(path))
    return value


def _list(value, path, item, nonempty=True):
    if not isinstance(value, list):
        raise ConfigError(f"expected a list, got {json.dumps(value)}", _where(path))
    if nonempty and not value:
        raise ConfigError("must not be empty", _where(path))
    return tuple(item(v, path[:-1] + [f"{path[-1]}[{i}]"]) for i, v in enumerate(value))


def _check_spec(spec: AugmentSpec, path):
    try:
        spec.validate()
    except ContractError as exc:
        raise ConfigError(str(exc), _where(path)) from None
    return spec


def _kind_label(value, path):
    _str(value, path)
    try:
        return "+".join(s.label for s in parse_chain(value))
    except ContractError as exc:
        raise ConfigError(f"{exc} (known kinds: {', '.join(KINDS)})", _where(path)) from None


def _simclr(doc, path) -> SimclrSpec:
    keys = {"flip_prob", "brightness", "contrast", "saturation", "hue"}
    _obj(doc, path, keys)
    kw = {k: _num(doc[k], path + [k], lo=0.0) for k in keys if k in doc}
    return SimclrSpec(**kw)


def _augment_entry(doc, path, default_strength) -> AugmentSpec:
    _obj(doc, path, {"kind", "strength", "channel", "simclr"})
    if "kind" not in doc:
        raise ConfigError("missing required key", _where(path + ["kind"]))
    label = _kind_label(doc["kind"], path + ["kind"])
    specs = parse_chain(label)
    if len(specs) != 1:
        raise ConfigError("use one entry per chained augmentation", _where(path + ["kind"]))
    spec = specs[0]
    strength = _num(doc.get("strength", default_strength), path + ["strength"], lo=0.0)
    spec = replace(spec, strength=strength)
    if "channel" in doc:
        ch = doc["channel"]
        if isinstance(ch, str):
            spec = replace(spec, channel=parse_chain(f"Colorness({ch})")[0].channel)
        else:
            spec = replace(spec, channel=_int(ch, path + ["channel"], lo=0))
    if "simclr" in doc:
        spec = replace(spec, simclr=_simclr(doc["simclr"], path + ["simclr"]))
    return _check_spec(spec, path)


def _augment(doc, path, strength) -> tuple:
    if isinstance(doc, str):
        label = _kind_label(doc, path)
        specs = tuple(replace(s, strength=strength) for s in parse_chain(label))
        for i, s in enumerate(specs):
            _check_spec(s, path[:-1] + ["strength"])
    else:
        specs = _list(doc, path, lambda d, p: _augment_entry(d, p, strength))
    if len(specs) > 2:
        raise ConfigError(f"at most 2 chained augmentations are supported, got {len(specs)}", _where(path))
    return specs


def _model(doc, path) -> GanConfig:
    _obj(doc, path, {"latent_dim", "image_shape", "g_hidden", "d_hidden", "proj_hidden", "embed_dim", "slope"})
    kw = {}
    for key in ("latent_dim", "proj_hidden", "embed_dim"):
        if key in doc:
            kw[key] = _int(doc[key], path + [key], lo=1)
    for key in ("g_hidden", "d_hidden"):
        if key in doc:
            kw[key] = _list(doc[key], path + [key], lambda v, p: _int(v, p, lo=1))
    if "image_shape" in doc:
        shape = _list(doc["image_shape"], path + ["image_shape"], lambda v, p: _int(v, p, lo=1))
        if len(shape) != 3:
            raise ConfigError("expected [C, H, W]", _where(path + ["image_shape"]))
        kw["image_shape"] = shape
    if "slope" in doc:
        kw["slope"] = _num(doc["slope"], path + ["slope"], lo=0.0)
    return GanConfig(**kw)


def _train(doc, path) -> TrainConfig:
    _obj(doc, path, {
        "mode", "augment", "strength", "batch_size", "steps", "d_steps", "anneal", "seed",
        "optimizer", "bcr", "cntr", "model", "eval", "grid_interval",
    })
    kw = {}
    mode = _str(doc.get("mode", "baseline"), path + ["mode"], MODES)
    strength = _num(doc.get("strength", 0.0), path + ["strength"], lo=0.0)
    if "augment" in doc:
        kw["augment"] = _augment(doc["augment"], path + ["augment"], strength)
    for key, lo in (("batch_size", 1), ("steps", 1), ("d_steps", 1), ("seed", 0), ("grid_interval", 0)):
        if key in doc:
            kw[key] = _int(doc[key], path + [key], lo=lo)
    if "anneal" in doc:
        kw["anneal"] = _bool(doc["anneal"], path + ["anneal"])
    if "optimizer" in doc:
        o = _obj(doc["optimizer"], path + ["optimizer"], {"lr_g", "lr_d", "beta1", "beta2", "eps"})
        op = path + ["optimizer"]
        akw = {}
        for key in ("lr_g", "lr_d", "eps"):
            if key in o:
                akw[key] = _num(o[key], op + [key], lo=0.0, lo_open=True)
        for key in ("beta1", "beta2"):
            if key in o:
                akw[key] = _num(o[key], op + [key], lo=0.0, hi=1.0)
                if akw[key] == 1.0:
                    raise ConfigError("must be < 1", _where(op + [key]))
        kw["adam"] = AdamConfig(**akw)
    if "bcr" in doc:
        b = _obj(doc["bcr"], path + ["bcr"], {"lambda_bcr", "fake_term"})
        bkw = {}
        if "lambda_bcr" in b:
            bkw["lambda_bcr"] = _num(b["lambda_bcr"], path + ["bcr", "lambda_bcr"], lo=0.0)
        if "fake_term" in b:
            bkw["fake_term"] = _bool(b["fake_term"], path + ["bcr", "fake_term"])
        kw["bcr"] = BcrConfig(**bkw)
    if "cntr" in doc:
        c = _obj(doc["cntr"], path + ["cntr"], {"lambda_cntr", "tau"})
        ckw = {}
        if "lambda_cntr" in c:
            ckw["lambda_cntr"] = _num(c["lambda_cntr"], path + ["cntr", "lambda_cntr"], lo=0.0)
        if "tau" in c:
            ckw["tau"] = _num(c["tau"], path + ["cntr", "tau"], lo=0.0, lo_open=True)
        kw["cntr"] = CntrConfig(**ckw)
    if "model" in doc:
        kw["model"] = _model(doc["model"], path + ["model"])
    if "eval" in doc:
        e = _obj(doc["eval"], path + ["eval"], {"interval", "samples", "feature_seed"})
        ep = path + ["eval"]
        if "interval" in e:
            kw["eval_interval"] = _int(e["interval"], ep + ["interval"], lo=0)
        if "samples" in e:
            kw["eval_samples"] = _int(e["samples"], ep + ["samples"], lo=2)
        if "feature_seed" in e:
            kw["feature_seed"] = _int(e["feature_seed"], ep + ["feature_seed"], lo=0)
    cfg = with_mode(TrainConfig(**kw), mode)
    if cfg.eval_samples < 65:
        raise ConfigError("need at least 65 samples for 64-d feature statistics", _where(path + ["eval", "samples"]))
    return cfg


def _data(doc, path) -> DataConfig:
    _obj(doc, path, {"source", "path", "n", "seed", "eval_n", "eval_seed", "channels"})
    kw = {}
    if "source" in doc:
        kw["source"] = _str(doc["source"], path + ["source"], ("toy", "cifar10", "idx"))
    if "path" in doc and doc["path"] is not None:
        kw["path"] = _str(doc["path"], path + ["path"])
    for key, lo in (("n", 1), ("seed", 0), ("eval_seed", 0), ("channels", 1), ("eval_n", 2)):
        if key in doc and doc[key] is not None:
            kw[key] = _int(doc[key], path + [key], lo=lo)
    cfg = DataConfig(**kw)
    if cfg.source != "toy" and cfg.path is None:
        raise ConfigError(f"source {cfg.source!r} needs a path", _where(path + ["path"]))
    return cfg


def parse_config(text: str) -> SweepConfig:
    """Parse and fully validate a JSON config document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", f"line {exc.lineno} column {exc.colno}") from None
    return config_from_dict(doc)


def config_from_dict(doc) -> SweepConfig:
    _obj(doc, [], {"train", "data", "sweep", "output"})
    base = _train(doc.get("train", {}), ["train"])
    data = _data(doc.get("data", {}), ["data"])

    sweep = _obj(doc.get("sweep", {}), ["sweep"], {"kinds", "strengths", "modes", "seeds"})
    kinds = (
        _list(sweep["kinds"], ["sweep", "kinds"], _kind_label)
        if "kinds" in sweep else ("+".join(s.label for s in base.augment),)
    )
    strengths = (
        _list(sweep["strengths"], ["sweep", "strengths"], lambda v, p: _num(v, p, lo=0.0))
        if "strengths" in sweep else (base.augment[0].strength,)
    )
    modes = (
        _list(sweep["modes"], ["sweep", "modes"], lambda v, p: _str(v, p, MODES))
        if "modes" in sweep else (base.mode,)
    )
    seeds = (
        _list(sweep["seeds"], ["sweep", "seeds"], lambda v, p: _int(v, p, lo=0))
        if "seeds" in sweep else (base.seed,)
    )
    for axis, values in (("kinds", kinds), ("strengths", strengths), ("modes", modes), ("seeds", seeds)):
        if len(set(values)) != len(values):
            raise ConfigError("values must be distinct", f"sweep.{axis}")

    out = _obj(doc.get("output", {}), ["output"], {"dir"})
    out_dir = _str(out["dir"], ["output", "dir"]) if "dir" in out else None

    cfg = SweepConfig(base, kinds, strengths, modes, seeds, data, out_dir)
    # every grid cell must be a valid training config
    for ki, kind in enumerate(kinds):
        for si, strength in enumerate(strengths):
            for mode in modes:
                try:
                    cfg.cell_config(kind, strength, mode, seeds[0]).validate()
                except ContractError as exc:
                    where = f"sweep.strengths[{si}]" if "strength" in str(exc) else f"sweep.kinds[{ki}]"
                    raise ConfigError(str(exc), where) from None
    return cfg


def load_config(path) -> SweepConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_config(text)
