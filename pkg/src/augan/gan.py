"""Compact generator, discriminator and projection head.

The networks are leaky-ReLU multilayer perceptrons over flattened images.
Parameters live in plain dicts of float64 arrays keyed ``"<net>.<layer>.w"``
and ``"<net>.<layer>.b"``; forward functions take a mapping of names to
:class:`~augan.tensor.Tensor`, so the same code runs on constants or on
leaves watched by a tape.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from . import tensor as T
from .errors import ContractError, FormatError, NumericalError
from .tensor import Tape, Tensor


@dataclass(frozen=True)
class GanConfig:
    latent_dim: int = 32
    image_shape: tuple = (3, 16, 16)
    g_hidden: tuple = (256, 256)
    d_hidden: tuple = (256, 128)
    proj_hidden: int = 128
    embed_dim: int = 64
    slope: float = 0.2
    contrastive: bool = False

    @property
    def image_size(self) -> int:
        return int(np.prod(self.image_shape))

    @property
    def hidden_dim(self) -> int:
        return self.d_hidden[-1]

    def fingerprint(self) -> bytes:
        doc = json.dumps(asdict(self), sort_keys=True, default=list).encode()
        return hashlib.sha256(doc).digest()


@dataclass
class GanState:
    """Parameters, Adam moments and the step counter of one training run."""

    config: GanConfig
    params: dict
    moments: dict = field(default_factory=dict)
    step: int = 0

    def group(self, prefix: str) -> dict:
        return {k: v for k, v in self.params.items() if k.startswith(prefix + ".")}

    def bind(self, tape: Tape | None = None, watch: tuple = ()) -> dict:
        """Wrap parameters as tensors, watching the groups named in ``watch``."""
        out = {}
        for k, v in self.params.items():
            if tape is not None and k.split(".", 1)[0] in watch:
                out[k] = tape.watch(v)
            else:
                out[k] = Tensor(v)
        return out

    def copy(self) -> GanState:
        return GanState(
            self.config,
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.moments.items()},
            self.step,
        )


def _layer_sizes(cfg: GanConfig) -> dict:
    sizes = {
        "g": [cfg.latent_dim, *cfg.g_hidden, cfg.image_size],
        "d": [cfg.image_size, *cfg.d_hidden],
        "l": [cfg.hidden_dim, 1],
    }
    if cfg.contrastive:
        sizes["p"] = [cfg.hidden_dim, cfg.proj_hidden, cfg.embed_dim]
    return sizes


def init_state(cfg: GanConfig, rng: np.random.Generator) -> GanState:
    """He-scaled normal weights, zero biases."""
    params = {}
    for net, sizes in _layer_sizes(cfg).items():
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = i == len(sizes) - 2 and net != "d"
            gain = 1.0 if last else 2.0 / (1.0 + cfg.slope ** 2)
            params[f"{net}.{i}.w"] = rng.standard_normal((fan_in, fan_out)) * np.sqrt(gain / fan_in)
            params[f"{net}.{i}.b"] = np.zeros(fan_out)
    return GanState(cfg, params)


def _params(source) -> Mapping[str, Tensor]:
    if isinstance(source, GanState):
        return source.bind()
    return source


def _mlp(p, net, x, n_layers, slope, final_act=True):
    for i in range(n_layers):
        try:
            x = T.matmul(x, p[f"{net}.{i}.w"]) + p[f"{net}.{i}.b"]
            if final_act or i < n_layers - 1:
                x = T.leaky_relu(x, slope)
        except NumericalError as exc:
            raise NumericalError(f"{net} layer {i}: {exc}", exc.node_id) from exc
    return x


def generate(params, z, cfg: GanConfig | None = None) -> Tensor:
    """Map latents (B, latent_dim) to images (B, C, H, W) in [0, 1]."""
    cfg = cfg or params.config
    p = _params(params)
    z = z if isinstance(z, Tensor) else Tensor(z)
    if z.data.ndim != 2 or z.shape[1] != cfg.latent_dim:
        raise ContractError(f"latent batch must be (B, {cfg.latent_dim}), got {z.shape}")
    a = _mlp(p, "g", z, len(cfg.g_hidden) + 1, cfg.slope, final_act=False)
    img = (T.tanh(a) + 1.0) * 0.5
    return T.reshape(img, (z.shape[0], *cfg.image_shape))


def discriminate(params, x, cfg: GanConfig | None = None) -> tuple[Tensor, Tensor]:
    """Return (logits (B,), hidden (B, hidden_dim))."""
    cfg = cfg or params.config
    p = _params(params)
    x = x if isinstance(x, Tensor) else Tensor(x)
    if tuple(x.shape[1:]) != tuple(cfg.image_shape) or x.data.ndim != 4:
        raise ContractError(f"discriminator expects (B, {cfg.image_shape}), got {x.shape}")
    B = x.shape[0]
    h = T.reshape(x, (B, cfg.image_size)) * 2.0 - 1.0
    hidden = _mlp(p, "d", h, len(cfg.d_hidden), cfg.slope)
    logit = T.matmul(hidden, p["l.0.w"]) + p["l.0.b"]
    return T.reshape(logit, (B,)), hidden


def project(params, hidden, cfg: GanConfig | None = None) -> Tensor:
    """Projection head: hidden representations -> contrastive embeddings."""
    cfg = cfg or params.config
    p = _params(params)
    if "p.0.w" not in p:
        raise ContractError("projection head requested but contrastive mode is disabled")
    hidden = hidden if isinstance(hidden, Tensor) else Tensor(hidden)
    x = _mlp(p, "p", hidden, 1, cfg.slope)
    return T.matmul(x, p["p.1.w"]) + p["p.1.b"]


def hinge_losses(real_logits, fake_logits) -> tuple[Tensor, Tensor]:
    """Discriminator and generator hinge objectives.

    ``L_D = mean(relu(1 - D(real))) + mean(relu(1 + D(fake)))`` and
    ``L_G = -mean(D(fake))``.
    """
    d_loss = T.mean(T.relu(1.0 - real_logits)) + T.mean(T.relu(1.0 + fake_logits))
    g_loss = -T.mean(fake_logits)
    return d_loss, g_loss


def generator_loss(fake_logits) -> Tensor:
    return -T.mean(fake_logits)


# --- checkpoint files ------------------------------------------------------
#
# little-endian layout:
#   8 bytes  magic b"AUGANCK1"
#   32 bytes sha256 of the GanConfig
#   u64      step
#   u32      number of arrays
#   per array: u16 name length, name (utf-8), u32 ndim, ndim x u32 dims
#   then every array's values as float64, in table order

MAGIC = b"AUGANCK1"


def save_checkpoint(state: GanState, path) -> None:
    arrays = {**state.params, **{f"m:{k}": v for k, v in state.moments.items()}}
    names = sorted(arrays)
    head = [MAGIC, state.config.fingerprint(), struct.pack("<QI", state.step, len(names))]
    for name in names:
        raw = name.encode()
        arr = arrays[name]
        head.append(struct.pack("<H", len(raw)) + raw + struct.pack("<I", arr.ndim))
        head.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
    body = [np.ascontiguousarray(arrays[n], dtype="<f8").tobytes() for n in names]
    Path(path).write_bytes(b"".join(head + body))


def load_checkpoint(path, cfg: GanConfig) -> GanState:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise FormatError("not an augan checkpoint (bad magic)", 0)
    if data[8:40] != cfg.fingerprint():
        raise FormatError("checkpoint was written for a different model configuration", 8)
    try:
        step, count = struct.unpack_from("<QI", data, 40)
        pos = 52
        table = []
        for _ in range(count):
            (n,) = struct.unpack_from("<H", data, pos)
            name = data[pos + 2:pos + 2 + n].decode()
            pos += 2 + n
            (ndim,) = struct.unpack_from("<I", data, pos)
            dims = struct.unpack_from(f"<{ndim}I", data, pos + 4)
            pos += 4 + 4 * ndim
            table.append((name, dims))
    except struct.error:
        raise FormatError("truncated checkpoint header", len(data)) from None
    params, moments = {}, {}
    for name, dims in table:
        size = int(np.prod(dims)) * 8
        if pos + size > len(data):
            raise FormatError(f"truncated values for {name}", pos)
        arr = np.frombuffer(data, dtype="<f8", count=size // 8, offset=pos).reshape(dims).astype(np.float64)
        pos += size
        if name.startswith("m:"):
            moments[name[2:]] = arr
        else:
            params[name] = arr
    if pos != len(data):
        raise FormatError("trailing bytes after checkpoint values", pos)
    return GanState(cfg, params, moments, step)
