"""Augmentation-based discriminator regularizers.

``bcr_loss`` is balanced consistency regularization: squared logit changes
under augmentation, on real and on fake images.  ``cntr_loss`` is the
normalized-temperature cross entropy over positive pairs of a 2N batch, and
``cntr_gan_term`` wires it through the discriminator trunk and projection
head for real and fake images separately.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import augment
from . import tensor as T
from .errors import ContractError
from .tensor import Tensor


@dataclass(frozen=True)
class BcrConfig:
    lambda_bcr: float = 10.0
    fake_term: bool = True

    def validate(self):
        if not np.isfinite(self.lambda_bcr) or self.lambda_bcr < 0:
            raise ContractError(f"lambda_bcr must be finite and >= 0, got {self.lambda_bcr}")


@dataclass(frozen=True)
class CntrConfig:
    lambda_cntr: float = 0.1
    tau: float = 0.1

    def validate(self):
        if not np.isfinite(self.lambda_cntr) or self.lambda_cntr < 0:
            raise ContractError(f"lambda_cntr must be finite and >= 0, got {self.lambda_cntr}")
        if not self.tau > 0:
            raise ContractError(f"tau must be > 0, got {self.tau}")


def _sq_logit_gap(logit_fn, x, params, clean=None) -> Tensor:
    if clean is None:
        clean = logit_fn(x)
    aug = logit_fn(augment.apply_chain(params, x))
    gap = clean - aug
    return T.mean(gap * gap)


def bcr_loss(
    logit_fn: Callable[[Tensor], Tensor],
    x_real,
    x_fake,
    t1,
    t2,
    fake_term: bool = True,
    real_logits=None,
    fake_logits=None,
) -> Tensor:
    """Batch-mean squared logit gap between clean and augmented copies.

    ``logit_fn`` maps an image batch to logits (B,).  ``t1`` and ``t2`` are
    augmentation draws (an AugParams or a chain of them) for the real and
    fake batches.  Clean logits already computed by the caller may be passed
    in to avoid a second forward pass.  Gradients reach whatever ``logit_fn`` closes over; the
    image batches themselves are treated as given.
    """
    t1 = [t1] if isinstance(t1, augment.AugParams) else list(t1)
    t2 = [t2] if isinstance(t2, augment.AugParams) else list(t2)
    x_real = x_real if isinstance(x_real, Tensor) else Tensor(x_real)
    x_fake = x_fake if isinstance(x_fake, Tensor) else Tensor(x_fake)
    if x_real.shape[1:] != x_fake.shape[1:]:
        raise ContractError(f"bcr_loss: real {x_real.shape} and fake {x_fake.shape} batches differ")
    loss = _sq_logit_gap(logit_fn, x_real, t1, real_logits)
    if fake_term:
        loss = loss + _sq_logit_gap(logit_fn, x_fake, t2, fake_logits)
    return loss


def cntr_loss(embeddings, tau: float) -> Tensor:
    """Mean contrastive loss over all 2N ordered positive pairs.

    ``embeddings`` stacks N originals followed by their N augmented partners,
    so row ``i`` is paired with row ``(i + N) mod 2N``.
    """
    h = embeddings if isinstance(embeddings, Tensor) else Tensor(embeddings)
    if h.data.ndim != 2 or h.shape[0] % 2 or h.shape[0] == 0:
        raise ContractError(f"cntr_loss expects a (2N, d) batch, got {h.shape}")
    if not tau > 0:
        raise ContractError(f"tau must be > 0, got {tau}")
    if np.any((h.data * h.data).sum(axis=1) == 0.0):
        raise ContractError("cntr_loss: zero-norm embedding (cosine similarity undefined)")
    n2 = h.shape[0]
    n = n2 // 2
    if n == 1:
        # the only candidate in each denominator is the positive itself
        return T.sum(h) * 0.0
    hn = T.l2_normalize(h, axis=1)
    logits = T.matmul(hn, T.transpose(hn)) * (1.0 / tau)
    pos_mask = np.zeros((n2, n2))
    idx = np.arange(n2)
    pos_mask[idx, (idx + n) % n2] = 1.0
    off_diag = 1.0 - np.eye(n2)
    # cosine similarity is at most 1, so 1/tau bounds every logit
    shift = 1.0 / tau
    denom = T.sum(T.exp(logits - shift) * off_diag, axis=1)
    pos = T.sum(logits * pos_mask, axis=1)
    return T.mean(T.log(denom) + shift - pos)


def cntr_gan_term(embed_fn: Callable[[Tensor], Tensor], x_real, x_fake, t1, t2, t3, t4, cfg: CntrConfig) -> Tensor:
    """Unweighted contrastive term: real pair loss plus fake pair loss.

    ``embed_fn`` maps images to projected embeddings (discriminate then
    project).  Real and fake images never share a contrastive batch.
    """
    x_real = x_real if isinstance(x_real, Tensor) else Tensor(x_real)
    x_fake = x_fake if isinstance(x_fake, Tensor) else Tensor(x_fake)

    def pair(x, ta, tb):
        ta = [ta] if isinstance(ta, augment.AugParams) else ta
        tb = [tb] if isinstance(tb, augment.AugParams) else tb
        h1 = embed_fn(augment.apply_chain(ta, x))
        h2 = embed_fn(augment.apply_chain(tb, x))
        return cntr_loss(T.concat([h1, h2], axis=0), cfg.tau)

    return pair(x_real, t1, t2) + pair(x_fake, t3, t4)
