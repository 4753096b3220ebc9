"""Image datasets: a procedural toy distribution and small-image loaders.

Every dataset stores float64 pixels in [0, 1] with shape (N, C, H, W).
Labels in the source files are dropped.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, FormatError

CIFAR_RECORD = 3073
CIFAR_SHAPE = (3, 32, 32)
IDX_MAGIC = 0x00000803

# design values of the toy generator (see gen_toy)
TOY_PIXEL_MEAN = 0.5
TOY_BG_RANGE = (0.2, 0.8)
TOY_GRADIENT = 0.15
TOY_SIZE_RANGE = (0.15, 0.3)
TOY_CENTER_RANGE = (0.3, 0.7)
TOY_SATURATION_RANGE = (0.5, 1.0)


@dataclass
class Dataset:
    images: np.ndarray
    source: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.images.ndim != 4 or len(self.images) == 0:
            raise ContractError(f"dataset needs a non-empty (N, C, H, W) array, got {self.images.shape}")

    def __len__(self):
        return len(self.images)

    @property
    def image_shape(self) -> tuple:
        return tuple(self.images.shape[1:])


def _hue_rgb(h: np.ndarray) -> np.ndarray:
    """Fully saturated colours on the hue wheel; each channel averages 1/2 over hue."""
    k = (np.array([5.0, 3.0, 1.0]) + h[..., None] * 6.0) % 6.0
    return 1.0 - np.clip(np.minimum(k, 4.0 - k), 0.0, 1.0)


def gen_toy(n: int, dims=(3, 16, 16), seed: int = 0) -> Dataset:
    """Render ``n`` images of one anti-aliased disc or rectangle each.

    Backgrounds are a per-channel level in U(0.2, 0.8) plus a random linear
    gradient; the shape has a random hue and saturation, a size between 15%
    and 30% of the image side and a centre in the middle 40% of the frame.
    Both colour sources are symmetric about 1/2, so the expected value of
    every pixel is exactly ``TOY_PIXEL_MEAN``.
    """
    C, H, W = (int(d) for d in dims)
    if n < 1 or C < 1 or H < 2 or W < 2:
        raise ContractError(f"gen_toy needs n >= 1 and dims with C >= 1, H, W >= 2; got n={n}, dims={dims}")
    rng = np.random.default_rng(seed)
    yy = ((np.arange(H) + 0.5) / H - 0.5)[None, :, None]
    xx = ((np.arange(W) + 0.5) / W - 0.5)[None, None, :]

    level = rng.uniform(*TOY_BG_RANGE, (n, C))
    grad = rng.uniform(-TOY_GRADIENT, TOY_GRADIENT, (n, 2))
    bg = level[:, :, None, None] + (grad[:, 0, None, None] * yy + grad[:, 1, None, None] * xx)[:, None]

    hue = rng.uniform(0.0, 1.0, n)
    sat = rng.uniform(*TOY_SATURATION_RANGE, n)
    rgb = 0.5 + sat[:, None] * (_hue_rgb(hue) - 0.5)
    color = np.resize(rgb.T, (C, n)).T if C != 3 else rgb

    is_disc = rng.uniform(0.0, 1.0, n) < 0.5
    size = rng.uniform(*TOY_SIZE_RANGE, (n, 2))
    center = rng.uniform(*TOY_CENTER_RANGE, (n, 2))
    py = (np.arange(H) + 0.5)[None, :, None]
    px = (np.arange(W) + 0.5)[None, None, :]
    cy = (center[:, 0] * H)[:, None, None]
    cx = (center[:, 1] * W)[:, None, None]
    # disc radius uses the first size draw; rectangles use both as half-extents
    radius = (size[:, 0] * min(H, W))[:, None, None]
    dist = np.sqrt((py - cy) ** 2 + (px - cx) ** 2)
    disc = np.clip(radius - dist + 0.5, 0.0, 1.0)
    hy = (size[:, 0] * H)[:, None, None]
    hx = (size[:, 1] * W)[:, None, None]
    rect = np.clip(hy - np.abs(py - cy) + 0.5, 0.0, 1.0) * np.clip(hx - np.abs(px - cx) + 0.5, 0.0, 1.0)
    cover = np.where(is_disc[:, None, None], disc, rect)[:, None]

    images = bg * (1.0 - cover) + color[:, :, None, None] * cover
    images = np.clip(images, 0.0, 1.0)
    return Dataset(images, "toy", {"seed": seed, "n": n, "dims": (C, H, W)})


def _read(path) -> bytes:
    return Path(path).read_bytes()


def load_cifar10(path) -> Dataset:
    """Read the CIFAR-10 binary format: 1 label byte + 3072 channel-major pixel bytes per record."""
    raw = _read(path)
    if len(raw) == 0:
        raise FormatError("empty CIFAR-10 file", 0)
    if len(raw) % CIFAR_RECORD:
        start = (len(raw) // CIFAR_RECORD) * CIFAR_RECORD
        raise FormatError(
            f"truncated CIFAR-10 record ({len(raw) - start} of {CIFAR_RECORD} bytes)", start
        )
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    images = rec[:, 1:].reshape(-1, *CIFAR_SHAPE).astype(np.float64) / 255.0
    return Dataset(images, "cifar10", {"path": str(path)})


def write_cifar10(path, images: np.ndarray, labels=None) -> None:
    """Write uint8 images (N, 3, 32, 32) in CIFAR-10 binary layout."""
    images = np.asarray(images, dtype=np.uint8)
    if images.shape[1:] != CIFAR_SHAPE:
        raise ContractError(f"CIFAR-10 images must be (N, 3, 32, 32), got {images.shape}")
    labels = np.zeros(len(images), np.uint8) if labels is None else np.asarray(labels, np.uint8)
    rec = np.concatenate([labels[:, None], images.reshape(len(images), -1)], axis=1)
    Path(path).write_bytes(rec.tobytes())


def load_idx(path, channels: int = 3) -> Dataset:
    """Read an IDX unsigned-byte image file, replicating grey to ``channels``."""
    raw = _read(path)
    if len(raw) < 4:
        raise FormatError("file too short for an IDX header", len(raw))
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != IDX_MAGIC:
        raise FormatError(f"bad IDX magic 0x{magic:08x}, expected 0x{IDX_MAGIC:08x}", 0)
    if len(raw) < 16:
        raise FormatError("truncated IDX dimension table", len(raw))
    n, h, w = struct.unpack(">III", raw[4:16])
    payload = len(raw) - 16
    if payload != n * h * w:
        raise FormatError(f"IDX dims {n}x{h}x{w} need {n * h * w} payload bytes, found {payload}", 16)
    if n == 0 or h == 0 or w == 0:
        raise FormatError("IDX file holds no images", 4)
    grey = np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(n, 1, h, w)
    images = np.repeat(grey, channels, axis=1).astype(np.float64) / 255.0
    return Dataset(images, "idx", {"path": str(path)})


def write_idx(path, images: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise ContractError(f"IDX images must be (N, H, W), got {images.shape}")
    n, h, w = images.shape
    Path(path).write_bytes(struct.pack(">IIII", IDX_MAGIC, n, h, w) + images.tobytes())


class BatchSampler:
    """Shuffled, without-replacement batches drawn from a stream of epochs.

    Batches may straddle an epoch boundary, so every index appears exactly
    once per ``len(dataset)`` consecutive draws.
    """

    def __init__(self, dataset: Dataset, batch_size: int, rng: np.random.Generator):
        if not 1 <= batch_size <= len(dataset):
            raise ContractError(f"batch size {batch_size} must lie in [1, {len(dataset)}]")
        self.dataset = dataset
        self.batch_size = batch_size
        self.rng = rng
        self.epoch = 0
        self._order = np.empty(0, dtype=np.int64)

    def next_indices(self) -> np.ndarray:
        while len(self._order) < self.batch_size:
            self._order = np.concatenate([self._order, self.rng.permutation(len(self.dataset))])
            self.epoch += 1
        idx, self._order = self._order[:self.batch_size], self._order[self.batch_size:]
        return idx

    def next_batch(self) -> np.ndarray:
        return self.dataset.images[self.next_indices()]


def next_batch(sampler: BatchSampler) -> np.ndarray:
    return sampler.next_batch()
