"""Fréchet distance between Gaussian fits of image features.

The feature map is a frozen random two-layer network, a desk-scale stand-in
for an Inception embedding.  Distances computed with it are called
proxy-FID throughout; they are not comparable with Inception-based FID.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import augment
from .errors import ContractError, NumericalError

FEATURE_DIM = 64
FEATURE_HIDDEN = 256
COV_RIDGE = 1e-6
SYM_TOL = 1e-10
PSD_TOL = 1e-8
ZERO_FID_TOL = 1e-9  # same-set proxy-FID is zero up to this rounding


@dataclass(frozen=True)
class FrechetStats:
    mu: np.ndarray
    sigma: np.ndarray
    count: int

    @classmethod
    def from_features(cls, feats: np.ndarray, ridge: float = 0.0) -> FrechetStats:
        feats = np.asarray(feats, dtype=np.float64)
        n, d = feats.shape
        if n < 2:
            raise ContractError(f"need at least 2 samples for a covariance, got {n}")
        mu = feats.mean(axis=0)
        centered = feats - mu
        sigma = centered.T @ centered / (n - 1)
        sigma = 0.5 * (sigma + sigma.T) + ridge * np.eye(d)
        return cls(mu, sigma, n)


class FeatureExtractor:
    """Frozen random map: flattened pixels -> leaky-ReLU hidden -> d features."""

    def __init__(self, image_shape=(3, 16, 16), dim: int = FEATURE_DIM, seed: int = 0,
                 hidden: int = FEATURE_HIDDEN, slope: float = 0.2):
        rng = np.random.default_rng(seed)
        size = int(np.prod(image_shape))
        self.image_shape = tuple(image_shape)
        self.dim = dim
        self.seed = seed
        self.slope = slope
        self._w1 = rng.standard_normal((size, hidden)) / np.sqrt(size)
        self._b1 = rng.uniform(-0.5, 0.5, hidden)
        self._w2 = rng.standard_normal((hidden, dim)) / np.sqrt(hidden)
        for arr in (self._w1, self._b1, self._w2):
            arr.setflags(write=False)

    def __call__(self, images: np.ndarray) -> np.ndarray:
        return extract_features(self, images)


def extract_features(fx: FeatureExtractor, images: np.ndarray) -> np.ndarray:
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4 or tuple(images.shape[1:]) != fx.image_shape:
        raise ContractError(f"feature extractor expects (B, {fx.image_shape}), got {images.shape}")
    x = images.reshape(len(images), -1) * 2.0 - 1.0
    h = x @ fx._w1 + fx._b1
    h = np.where(h > 0, h, fx.slope * h)
    return h @ fx._w2


def _check_sym(m: np.ndarray, what: str):
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ContractError(f"{what} must be square, got {m.shape}")
    scale = max(1.0, float(np.abs(m).max()))
    if np.abs(m - m.T).max() > SYM_TOL * scale:
        raise ContractError(f"{what} is not symmetric")


def matrix_sqrt_psd(m: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues down to ``-1e-8`` (relative to the largest magnitude) are
    treated as rounding noise and clamped to zero.
    """
    m = np.asarray(m, dtype=np.float64)
    _check_sym(m, "matrix_sqrt_psd input")
    m = 0.5 * (m + m.T)
    try:
        vals, vecs = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition did not converge: {exc}") from exc
    scale = max(1.0, float(np.abs(vals).max())) if vals.size else 1.0
    if vals.size and vals.min() < -PSD_TOL * scale:
        raise ContractError(f"matrix is not positive semidefinite (eigenvalue {vals.min():.3e})")
    root = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
    return 0.5 * (root + root.T)


def frechet_distance(a: FrechetStats, b: FrechetStats) -> float:
    """Squared Fréchet distance between two Gaussians.

    Uses tr((Sa Sb)^(1/2)) = tr((Sa^(1/2) Sb Sa^(1/2))^(1/2)), which keeps the
    inner matrix symmetric.
    """
    if a.mu.shape != b.mu.shape:
        raise ContractError(f"dimension mismatch: {a.mu.shape} vs {b.mu.shape}")
    _check_sym(a.sigma, "first covariance")
    _check_sym(b.sigma, "second covariance")
    ra = matrix_sqrt_psd(a.sigma)
    inner = ra @ b.sigma @ ra
    cross = matrix_sqrt_psd(0.5 * (inner + inner.T))
    diff = a.mu - b.mu
    d2 = float(diff @ diff + np.trace(a.sigma) + np.trace(b.sigma) - 2.0 * np.trace(cross))
    if not np.isfinite(d2):
        raise NumericalError("Fréchet distance is not finite")
    scale = max(1.0, float(np.trace(a.sigma) + np.trace(b.sigma)))
    if d2 < 0:
        if d2 < -PSD_TOL * scale:
            raise NumericalError(f"Fréchet distance significantly negative ({d2:.3e})")
        d2 = 0.0
    return d2


def stats_of(fx: FeatureExtractor, images: np.ndarray, batch: int = 1024) -> FrechetStats:
    """Feature statistics of an image set, with the covariance ridge applied."""
    images = np.asarray(images)
    if len(images) < fx.dim + 1:
        raise ContractError(f"need at least {fx.dim + 1} images for {fx.dim}-d statistics, got {len(images)}")
    feats = np.concatenate([extract_features(fx, images[i:i + batch]) for i in range(0, len(images), batch)])
    return FrechetStats.from_features(feats, ridge=COV_RIDGE)


def proxy_fid(fx: FeatureExtractor, real, fake) -> float:
    """proxy-FID of two image sets (arrays or precomputed FrechetStats)."""
    a = real if isinstance(real, FrechetStats) else stats_of(fx, real)
    b = fake if isinstance(fake, FrechetStats) else stats_of(fx, fake)
    return frechet_distance(a, b)


def fid_ratio(fx: FeatureExtractor, spec, real, fake, rng: np.random.Generator, batch: int = 256) -> float:
    """proxy-FID of augmented sets divided by proxy-FID of the clean sets.

    ``spec`` is an AugmentSpec or a chain of them; each side gets its own
    independent draws.
    """
    specs = [spec] if isinstance(spec, augment.AugmentSpec) else list(spec)
    clean = proxy_fid(fx, real, fake)
    if clean <= ZERO_FID_TOL:
        raise ContractError(f"clean proxy-FID is zero ({clean:.3e}); the ratio is undefined")

    def aug(images):
        # near-equal chunks, so mixing kinds never see a lone image
        parts = np.array_split(images, max(1, -(-len(images) // batch)))
        return np.concatenate([augment.augment_array(specs, rng, p) for p in parts])

    return proxy_fid(fx, aug(np.asarray(real)), aug(np.asarray(fake))) / clean
