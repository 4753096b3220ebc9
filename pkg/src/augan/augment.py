"""Differentiable image augmentations for real and generated batches.

Every augmentation is split in two halves: :func:`sample_params` draws the
random quantities for a whole batch (one draw per image), and :func:`apply`
maps a batch through them.  Because the draw is explicit, the same transform
can be replayed, tested against oracles, or applied to constants and watched
tensors alike.  All spatial transforms are bilinear resampling over a
per-image rectangle, so gradients reach every input pixel that contributes.

Images are (batch, channel, height, width) arrays with pixels in [0, 1].
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import ContractError
from .tensor import Tensor

KINDS = (
    "ZoomIn",
    "ZoomOut",
    "TranslationX",
    "TranslationY",
    "Translation",
    "Brightness",
    "Colorness",
    "InstanceNoise",
    "CutOut",
    "CutMix",
    "MixUp",
    "SimclrCompose",
    "Identity",
)
SPATIAL_KINDS = frozenset({"ZoomIn", "ZoomOut", "TranslationX", "TranslationY", "Translation"})
PIXEL_KINDS = frozenset({"Brightness", "Colorness", "InstanceNoise"})
MIX_KINDS = frozenset({"CutOut", "CutMix", "MixUp"})

CHANNEL_NAMES = {"red": 0, "green": 1, "blue": 2}
ASPECT_RANGE = (3.0 / 4.0, 4.0 / 3.0)
CROP_ATTEMPTS = 10

# Luma weights for saturation; YIQ basis for hue rotation.
_LUMA = np.array([0.299, 0.587, 0.114])
_RGB2YIQ = np.array([
    [0.299, 0.587, 0.114],
    [0.596, -0.274, -0.322],
    [0.211, -0.523, 0.312],
])
_YIQ2RGB = np.linalg.inv(_RGB2YIQ)


@dataclass(frozen=True)
class SimclrSpec:
    """Random resized crop, flip and colour jitter settings.

    ``crop_strength`` sets the smallest crop as ``1 - crop_strength`` of the
    full image area; 0.92 reproduces the usual [0.08, 1] area range.
    """

    crop_strength: float = 0.92
    flip_prob: float = 0.5
    brightness: float = 0.5
    contrast: float = 0.5
    saturation: float = 0.5
    hue: float = 0.125

    @property
    def area_lower_bound(self) -> float:
        return 1.0 - self.crop_strength

    def validate(self):
        if not 0.0 <= self.crop_strength < 1.0:
            raise ContractError(
                f"SimclrCompose crop strength must lie in [0, 1), got {self.crop_strength}"
                " (a strength of 1 allows zero-area crops)"
            )
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ContractError(f"flip probability must lie in [0, 1], got {self.flip_prob}")
        for name in ("brightness", "contrast", "saturation", "hue"):
            if getattr(self, name) < 0:
                raise ContractError(f"jitter strength {name} must be >= 0")


@dataclass(frozen=True)
class AugmentSpec:
    """An augmentation kind and its strength.

    ``channel`` selects the channel for Colorness.  For SimclrCompose the
    strength is the crop strength and ``simclr`` supplies the remaining
    settings.
    """

    kind: str
    strength: float = 0.0
    channel: int = 0
    simclr: SimclrSpec | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"unknown augmentation kind {self.kind!r}")

    @property
    def label(self) -> str:
        if self.kind == "Colorness":
            names = {v: k for k, v in CHANNEL_NAMES.items()}
            return f"Colorness({names.get(self.channel, self.channel)})"
        return self.kind

    def simclr_spec(self) -> SimclrSpec:
        return replace(self.simclr or SimclrSpec(), crop_strength=float(self.strength))

    def with_strength(self, strength: float) -> AugmentSpec:
        return replace(self, strength=float(strength))

    def validate(self):
        lam = self.strength
        if not math.isfinite(lam) or lam < 0:
            raise ContractError(f"{self.label}: strength must be finite and >= 0, got {lam}")
        if self.kind in SPATIAL_KINDS and lam > 0.5:
            raise ContractError(f"{self.label}: strength must lie in [0, 0.5], got {lam}")
        if self.kind in ("Brightness", "Colorness", "CutOut", "CutMix") and lam > 1.0:
            raise ContractError(f"{self.label}: strength must lie in [0, 1], got {lam}")
        if self.kind == "Colorness" and self.channel < 0:
            raise ContractError(f"Colorness: channel must be >= 0, got {self.channel}")
        if self.kind == "SimclrCompose":
            self.simclr_spec().validate()


def parse_kind(name: str, strength: float = 0.0) -> AugmentSpec:
    """Build a spec from a kind name such as ``"Colorness(blue)"``."""
    m = re.fullmatch(r"\s*Colorness\s*\(\s*(\w+)\s*\)\s*", name)
    if m:
        ch = m.group(1).lower()
        channel = CHANNEL_NAMES.get(ch)
        if channel is None:
            if not ch.isdigit():
                raise ContractError(f"unknown Colorness channel {m.group(1)!r}")
            channel = int(ch)
        return AugmentSpec("Colorness", strength, channel=channel)
    return AugmentSpec(name.strip(), strength)


def parse_chain(name: str, strength: float = 0.0) -> list[AugmentSpec]:
    """``"Translation+Brightness"`` -> two specs sharing ``strength``."""
    return [parse_kind(part, strength) for part in name.split("+")]


def chain_label(specs: Sequence[AugmentSpec]) -> str:
    return "+".join(s.label for s in specs)


@dataclass
class AugParams:
    """The random draw for one augmentation over a batch.

    Unused fields stay ``None``.  ``rect`` holds per-image source rectangles
    (top, left, height, width) in pixel units; a negative width mirrors the
    image horizontally.  ``patch`` holds integer (top, left, height, width)
    boxes for CutOut and CutMix, and ``perm`` the in-batch partner of each
    image for CutMix and MixUp.
    """

    kind: str
    shape: tuple
    alpha: np.ndarray | None = None
    alpha_h: np.ndarray | None = None
    alpha_w: np.ndarray | None = None
    rect: np.ndarray | None = None
    patch: np.ndarray | None = None
    perm: np.ndarray | None = None
    channel: int = 0
    noise_seed: int | None = None
    noise_std: float = 0.0
    flip: np.ndarray | None = None
    jitter: np.ndarray | None = None  # (B, 4): brightness, contrast, saturation, hue
    simclr: SimclrSpec | None = field(default=None, repr=False)

    @property
    def batch(self) -> int:
        return self.shape[0]


def _check_shape(shape):
    if len(shape) != 4 or min(shape) < 1:
        raise ContractError(f"image batch must have shape (B, C, H, W), got {tuple(shape)}")


def _partner(rng, B, kind):
    if B < 2:
        raise ContractError(f"{kind} needs a batch of at least 2 images, got {B}")
    return rng.permutation(B)


def _patches(rng, alpha, H, W):
    """Integer boxes of size round(alpha*H) x round(alpha*W) lying inside the image."""
    B = alpha.shape[0]
    out = np.zeros((B, 4), dtype=np.int64)
    for b in range(B):
        ph = int(round(alpha[b] * H))
        pw = int(round(alpha[b] * W))
        top = int(rng.integers(0, H - ph + 1))
        left = int(rng.integers(0, W - pw + 1))
        out[b] = (top, left, ph, pw)
    return out


def _simclr_crop(rng, spec: SimclrSpec, B, H, W):
    lo = spec.area_lower_bound
    log_r = (math.log(ASPECT_RANGE[0]), math.log(ASPECT_RANGE[1]))
    rect = np.zeros((B, 4))
    for b in range(B):
        rect[b] = (0.0, 0.0, H, W)
        for _ in range(CROP_ATTEMPTS):
            area = rng.uniform(lo, 1.0) * H * W
            ratio = math.exp(rng.uniform(*log_r))
            w = math.sqrt(area * ratio)
            h = math.sqrt(area / ratio)
            if w <= W and h <= H:
                rect[b] = (rng.uniform(0.0, H - h), rng.uniform(0.0, W - w), h, w)
                break
    return rect


def sample_params(spec: AugmentSpec, rng: np.random.Generator, shape) -> AugParams:
    """Draw per-image parameters for ``spec`` on a batch of ``shape``."""
    spec.validate()
    shape = tuple(int(s) for s in shape)
    _check_shape(shape)
    B, C, H, W = shape
    lam = float(spec.strength)
    kind = spec.kind
    p = AugParams(kind, shape)

    if kind == "Identity":
        return p
    if kind == "ZoomIn":
        a = rng.uniform(0.0, lam, B)
        u = rng.uniform(0.0, 1.0, (B, 2))
        h, w = (1.0 - a) * H, (1.0 - a) * W
        p.alpha = a
        p.rect = np.stack([u[:, 0] * (H - h), u[:, 1] * (W - w), h, w], axis=1)
    elif kind == "ZoomOut":
        a = rng.uniform(0.0, lam, B)
        u = rng.uniform(0.0, 1.0, (B, 2))
        # crop of (1+a) inside the (1+2a) padded frame, in original coordinates
        h, w = (1.0 + a) * H, (1.0 + a) * W
        p.alpha = a
        p.rect = np.stack([u[:, 0] * (a * H) - a * H, u[:, 1] * (a * W) - a * W, h, w], axis=1)
    elif kind in ("TranslationX", "TranslationY", "Translation"):
        ah = np.zeros(B)
        aw = np.zeros(B)
        if kind == "Translation":
            ah = rng.uniform(-lam, lam, B)
            aw = rng.uniform(-lam, lam, B)
        elif kind == "TranslationX":
            aw = rng.uniform(-lam, lam, B)
        else:
            ah = rng.uniform(-lam, lam, B)
        p.alpha = aw if kind == "TranslationX" else ah
        p.alpha_h, p.alpha_w = ah, aw
        p.rect = np.stack([-ah * H, -aw * W, np.full(B, float(H)), np.full(B, float(W))], axis=1)
    elif kind == "Brightness":
        p.alpha = rng.uniform(-lam, lam, B)
    elif kind == "Colorness":
        if spec.channel >= C:
            raise ContractError(f"Colorness channel {spec.channel} out of range for {C} channels")
        p.alpha = rng.uniform(-lam, lam, B)
        p.channel = spec.channel
    elif kind == "InstanceNoise":
        p.noise_std = math.sqrt(lam)
        p.noise_seed = int(rng.integers(0, 2**63 - 1))
    elif kind == "CutOut":
        p.alpha = rng.uniform(0.0, lam, B)
        p.patch = _patches(rng, p.alpha, H, W)
    elif kind == "CutMix":
        p.perm = _partner(rng, B, kind)
        p.alpha = rng.uniform(0.0, lam, B)
        p.patch = _patches(rng, p.alpha, H, W)
    elif kind == "MixUp":
        p.perm = _partner(rng, B, kind)
        if lam == 0.0:
            p.alpha = np.ones(B)
        else:
            a = rng.beta(lam, lam, B)
            p.alpha = np.maximum(a, 1.0 - a)
    elif kind == "SimclrCompose":
        sc = spec.simclr_spec()
        p.simclr = sc
        p.rect = _simclr_crop(rng, sc, B, H, W)
        p.flip = rng.uniform(0.0, 1.0, B) < sc.flip_prob
        p.jitter = np.stack([
            rng.uniform(-sc.brightness, sc.brightness, B),
            rng.uniform(1.0 - sc.contrast, 1.0 + sc.contrast, B),
            rng.uniform(1.0 - sc.saturation, 1.0 + sc.saturation, B),
            rng.uniform(-sc.hue, sc.hue, B),
        ], axis=1)
    return p


# --- application --------------------------------------------------------------

def _tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_input(params: AugParams, x: Tensor):
    if tuple(x.shape) != params.shape:
        raise ContractError(
            f"{params.kind}: parameters drawn for shape {params.shape}, input has {tuple(x.shape)}"
        )


def sampling_grid(rect: np.ndarray, out_hw) -> np.ndarray:
    """Pixel-coordinate grid (B, Ho, Wo, 2) resampling each rectangle to ``out_hw``."""
    Ho, Wo = out_hw
    top, left, h, w = (rect[:, i][:, None] for i in range(4))
    rows = top + (np.arange(Ho) + 0.5)[None, :] * (h / Ho) - 0.5
    cols = left + (np.arange(Wo) + 0.5)[None, :] * (w / Wo) - 0.5
    B = rect.shape[0]
    grid = np.empty((B, Ho, Wo, 2))
    grid[..., 0] = rows[:, :, None]
    grid[..., 1] = cols[:, None, :]
    return grid


def apply_spatial(params: AugParams, x) -> Tensor:
    """Resample each image over its source rectangle, reflecting at borders."""
    x = _tensor(x)
    _check_input(params, x)
    if params.kind not in SPATIAL_KINDS and params.kind != "SimclrCompose":
        raise ContractError(f"apply_spatial cannot apply {params.kind}")
    rect = params.rect.astype(np.float64, copy=True)
    if params.flip is not None:
        f = params.flip
        rect[f, 1] = rect[f, 1] + rect[f, 3]
        rect[f, 3] = -rect[f, 3]
    return T.bilinear_sample(x, sampling_grid(rect, x.shape[2:]))


def apply_pixel(params: AugParams, x) -> Tensor:
    """Brightness, Colorness or InstanceNoise."""
    x = _tensor(x)
    _check_input(params, x)
    B, C = x.shape[:2]
    if params.kind == "Brightness":
        return T.clip01(x + params.alpha.reshape(B, 1, 1, 1))
    if params.kind == "Colorness":
        if not 0 <= params.channel < C:
            raise ContractError(f"Colorness channel {params.channel} out of range for {C} channels")
        delta = np.zeros((B, C, 1, 1))
        delta[:, params.channel, 0, 0] = params.alpha
        return T.clip01(x + delta)
    if params.kind == "InstanceNoise":
        if params.noise_std == 0.0:
            return x + np.zeros(x.shape)
        noise = np.random.default_rng(params.noise_seed).standard_normal(x.shape)
        return x + params.noise_std * noise
    raise ContractError(f"apply_pixel cannot apply {params.kind}")


def _permute(x: Tensor, perm: np.ndarray) -> Tensor:
    B = x.shape[0]
    pmat = np.zeros((B, B))
    pmat[np.arange(B), perm] = 1.0
    return T.reshape(T.matmul(pmat, T.reshape(x, (B, -1))), x.shape)


def patch_mask(params: AugParams) -> np.ndarray:
    """(B, 1, H, W) mask with ones inside each sampled patch."""
    B, _, H, W = params.shape
    m = np.zeros((B, 1, H, W))
    for b, (top, left, ph, pw) in enumerate(params.patch):
        m[b, 0, top:top + ph, left:left + pw] = 1.0
    return m


def apply_mix(params: AugParams, x) -> Tensor:
    """CutOut, CutMix or MixUp; masks and mixing weights are constants of the draw."""
    x = _tensor(x)
    _check_input(params, x)
    B = x.shape[0]
    if params.kind in ("CutMix", "MixUp") and B < 2:
        raise ContractError(f"{params.kind} needs a batch of at least 2 images, got {B}")
    if params.kind == "CutOut":
        return x * (1.0 - patch_mask(params))
    if params.kind == "CutMix":
        m = patch_mask(params)
        return x * (1.0 - m) + _permute(x, params.perm) * m
    if params.kind == "MixUp":
        a = params.alpha.reshape(B, 1, 1, 1)
        return x + (_permute(x, params.perm) - x) * (1.0 - a)
    raise ContractError(f"apply_mix cannot apply {params.kind}")


def _hue_matrices(delta: np.ndarray) -> np.ndarray:
    theta = 2.0 * np.pi * delta
    c, s = np.cos(theta), np.sin(theta)
    rot = np.zeros((delta.size, 3, 3))
    rot[:, 0, 0] = 1.0
    rot[:, 1, 1], rot[:, 1, 2] = c, -s
    rot[:, 2, 1], rot[:, 2, 2] = s, c
    return _YIQ2RGB[None] @ rot @ _RGB2YIQ[None]


def color_jitter(params: AugParams, x: Tensor) -> Tensor:
    """Brightness, contrast, saturation and hue, each followed by a clip.

    A perturbation whose configured strength is zero is skipped entirely.
    """
    sc = params.simclr or SimclrSpec()
    B, C = x.shape[:2]
    j = params.jitter
    if sc.brightness > 0:
        x = T.clip01(x + j[:, 0].reshape(B, 1, 1, 1))
    if sc.contrast > 0:
        m = T.mean(x, axis=(2, 3), keepdims=True)
        x = T.clip01((x - m) * j[:, 1].reshape(B, 1, 1, 1) + m)
    if C == 3 and sc.saturation > 0:
        gray = T.sum(x * _LUMA.reshape(1, 3, 1, 1), axis=1, keepdims=True)
        x = T.clip01(gray + (x - gray) * j[:, 2].reshape(B, 1, 1, 1))
    if C == 3 and sc.hue > 0:
        mats = _hue_matrices(j[:, 3])
        chans = [T.sum(x * mats[:, c, :].reshape(B, 3, 1, 1), axis=1, keepdims=True) for c in range(3)]
        x = T.clip01(T.concat(chans, axis=1))
    return x


def apply_simclr(params: AugParams, x) -> Tensor:
    return color_jitter(params, apply_spatial(params, x))


def simclr_compose(spec: SimclrSpec, rng: np.random.Generator, x) -> Tensor:
    """Random resized crop, horizontal flip and colour jitter in one call."""
    x = _tensor(x)
    params = sample_params(AugmentSpec("SimclrCompose", spec.crop_strength, simclr=spec), rng, x.shape)
    return apply_simclr(params, x)


def apply(params: AugParams, x) -> Tensor:
    """Apply any drawn augmentation to a batch."""
    kind = params.kind
    if kind == "Identity":
        _check_input(params, _tensor(x))
        return _tensor(x)
    if kind in SPATIAL_KINDS:
        return apply_spatial(params, x)
    if kind in PIXEL_KINDS:
        return apply_pixel(params, x)
    if kind in MIX_KINDS:
        return apply_mix(params, x)
    if kind == "SimclrCompose":
        return apply_simclr(params, x)
    raise ContractError(f"unknown augmentation kind {kind!r}")


def sample_chain(specs: Sequence[AugmentSpec], rng, shape) -> list[AugParams]:
    return [sample_params(s, rng, shape) for s in specs]


def apply_chain(params: Sequence[AugParams], x) -> Tensor:
    x = _tensor(x)
    for p in params:
        x = apply(p, x)
    return x


def augment_array(specs: Sequence[AugmentSpec], rng, images: np.ndarray) -> np.ndarray:
    """Augment a plain array without recording gradients."""
    return apply_chain(sample_chain(specs, rng, images.shape), Tensor(images)).data
