"""GAN training loop for every augmentation and regularization mode.

Modes
-----
``baseline``       clean real vs clean fake.
``aug_real_only``  augmented reals vs clean fakes; the generator never sees
                   the augmentation.
``aug_real_fake``  augmented reals vs augmented fakes; on the generator step
                   gradients flow back through the fake-side augmentation.
``bcr``            clean hinge loss plus ``lambda_bcr * L_bcr``.
``cntr``           clean hinge loss plus ``lambda_cntr * L_cntr``.
``cntr_bcr``       both regularizers.

Each random consumer (initialisation, data order, latents, augmentation
draws, evaluation) gets its own stream derived from the master seed, so a
mode that draws augmentations does not shift the latents of another.
"""

from __future__ import annotations

import hashlib
import json
import time
import zlib
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from . import augment, gan, regularizers
from . import tensor as T
from .augment import AugmentSpec
from .data import BatchSampler, Dataset
from .errors import ContractError, NumericalError, TrainingDiverged
from .evaluation import FeatureExtractor, proxy_fid, stats_of
from .gan import GanConfig, GanState
from .regularizers import BcrConfig, CntrConfig
from .tensor import Tape, Tensor

MODES = ("baseline", "aug_real_only", "aug_real_fake", "bcr", "cntr", "cntr_bcr")
AUGMENTED_MODES = frozenset({"aug_real_only", "aug_real_fake", "bcr", "cntr", "cntr_bcr"})
GRID_LATENTS = 64


@dataclass(frozen=True)
class AdamConfig:
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    beta1: float = 0.0
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "baseline"
    augment: tuple = (AugmentSpec("Identity"),)
    batch_size: int = 64
    steps: int = 2000
    d_steps: int = 1
    adam: AdamConfig = AdamConfig()
    bcr: BcrConfig = BcrConfig()
    cntr: CntrConfig = CntrConfig()
    anneal: bool = False
    seed: int = 0
    model: GanConfig = GanConfig()
    eval_interval: int = 0
    eval_samples: int = 1024
    feature_seed: int = 0
    grid_interval: int = 0

    def validate(self):
        if self.mode not in MODES:
            raise ContractError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.steps <= 0:
            raise ContractError(f"steps must be > 0, got {self.steps}")
        if self.d_steps < 1:
            raise ContractError(f"d_steps must be >= 1, got {self.d_steps}")
        if not 1 <= len(self.augment) <= 2:
            raise ContractError(f"augment chain must hold 1 or 2 entries, got {len(self.augment)}")
        for spec in self.augment:
            spec.validate()
            if spec.kind in ("CutMix", "MixUp") and self.batch_size < 2:
                raise ContractError(f"{spec.kind} needs batch_size >= 2")
        if self.batch_size < 1:
            raise ContractError(f"batch_size must be >= 1, got {self.batch_size}")
        self.bcr.validate()
        self.cntr.validate()
        needs_head = self.mode in ("cntr", "cntr_bcr")
        if needs_head != self.model.contrastive:
            raise ContractError(
                f"model.contrastive must be {needs_head} for mode {self.mode!r}"
            )

    def fingerprint(self) -> str:
        doc = json.dumps(asdict(self), sort_keys=True, default=list)
        return hashlib.sha256(doc.encode()).hexdigest()[:16]


def with_mode(cfg: TrainConfig, mode: str, **changes) -> TrainConfig:
    """Copy of ``cfg`` in ``mode``, switching the projection head on or off."""
    model = replace(cfg.model, contrastive=mode in ("cntr", "cntr_bcr"))
    return replace(cfg, mode=mode, model=model, **changes)


def stream(seed: int, label: str) -> np.random.Generator:
    """Independent generator for one consumer of randomness."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(label.encode())]))


@dataclass
class Streams:
    init: np.random.Generator
    data: np.random.Generator
    latent: np.random.Generator
    augment: np.random.Generator
    eval: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> Streams:
        return cls(*(stream(seed, name) for name in ("init", "data", "latent", "augment", "eval")))


# --- optimisation ---------------------------------------------------------------

def adam_update(param, grad, m, v, step, lr, beta1=0.0, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam step; ``step`` counts from 1.  Returns (param, m, v)."""
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** step)
    v_hat = v / (1.0 - beta2 ** step)
    return param - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


def _apply_adam(state: GanState, names, grads, lr, adam: AdamConfig, counter: str):
    t = int(state.moments.get(counter, np.zeros(1))[0]) + 1
    state.moments[counter] = np.array([float(t)])
    for name in names:
        g = grads[name]
        m = state.moments.get(f"{name}.m", np.zeros_like(g))
        v = state.moments.get(f"{name}.v", np.zeros_like(g))
        p, m, v = adam_update(state.params[name], g, m, v, t, lr, adam.beta1, adam.beta2, adam.eps)
        state.params[name] = p
        state.moments[f"{name}.m"] = m
        state.moments[f"{name}.v"] = v


@dataclass(frozen=True)
class AnnealSchedule:
    initial: float
    step: int
    total: int


def anneal_strength(schedule: AnnealSchedule) -> float:
    """Linear decay from the initial strength to 0 at ``total``."""
    if schedule.step < 0 or schedule.step > schedule.total:
        raise ContractError(f"anneal step {schedule.step} outside [0, {schedule.total}]")
    if schedule.total == 0:
        return float(schedule.initial)
    return max(0.0, schedule.initial * (1.0 - schedule.step / schedule.total))


def current_chain(cfg: TrainConfig, step: int) -> list[AugmentSpec]:
    """Augmentation chain in effect at 0-based ``step``.

    With annealing the strength falls linearly from its configured value on
    the first step to exactly 0 on the last.
    """
    if not cfg.anneal:
        return list(cfg.augment)
    sched_total = cfg.steps - 1
    return [
        s.with_strength(anneal_strength(AnnealSchedule(s.strength, step, sched_total)))
        for s in cfg.augment
    ]


# --- one step ---------------------------------------------------------------------

def _mean_item(t: Tensor) -> float:
    return float(t.data)


def _check_finite(step, losses):
    if not all(np.isfinite(v) for v in losses.values()):
        raise TrainingDiverged(step, losses)


def _d_step(state, cfg, chain, real, rng, metrics):
    m = cfg.model
    B = real.shape[0]
    z = rng.latent.standard_normal((B, m.latent_dim))
    fake = gan.generate(state, z).data
    tape = Tape()
    p = state.bind(tape, watch=("d", "l", "p"))
    shape = real.shape

    def logits(x):
        return gan.discriminate(p, x, m)[0]

    def embed(x):
        return gan.project(p, gan.discriminate(p, x, m)[1], m)

    mode = cfg.mode
    if mode == "aug_real_only":
        real_in = augment.apply_chain(augment.sample_chain(chain, rng.augment, shape), real)
        fake_in = Tensor(fake)
    elif mode == "aug_real_fake":
        real_in = augment.apply_chain(augment.sample_chain(chain, rng.augment, shape), real)
        fake_in = augment.apply_chain(augment.sample_chain(chain, rng.augment, fake.shape), fake)
    else:
        real_in, fake_in = Tensor(real), Tensor(fake)
    real_logits = logits(real_in)
    fake_logits = logits(fake_in)
    d_loss, _ = gan.hinge_losses(real_logits, fake_logits)
    total = d_loss
    losses = {"L_D": _mean_item(d_loss)}

    if mode in ("bcr", "cntr_bcr"):
        t1 = augment.sample_chain(chain, rng.augment, shape)
        t2 = augment.sample_chain(chain, rng.augment, fake.shape)
        l_bcr = regularizers.bcr_loss(
            logits, real, fake, t1, t2, fake_term=cfg.bcr.fake_term,
            real_logits=real_logits, fake_logits=fake_logits,
        )
        total = total + l_bcr * cfg.bcr.lambda_bcr
        losses["L_bcr"] = _mean_item(l_bcr)
    if mode in ("cntr", "cntr_bcr"):
        ts = [augment.sample_chain(chain, rng.augment, shape) for _ in range(2)]
        ts += [augment.sample_chain(chain, rng.augment, fake.shape) for _ in range(2)]
        l_cntr = regularizers.cntr_gan_term(embed, real, fake, *ts, cfg.cntr)
        total = total + l_cntr * cfg.cntr.lambda_cntr
        losses["L_cntr"] = _mean_item(l_cntr)

    _check_finite(state.step, losses)
    grads = tape.backward(total)
    names = [k for k in state.params if k.split(".", 1)[0] in ("d", "l", "p")]
    _apply_adam(state, names, {k: grads[p[k]] for k in names}, cfg.adam.lr_d, cfg.adam, "t.d")
    metrics.update(losses)
    return z


def _g_step(state, cfg, chain, z, rng, metrics):
    m = cfg.model
    tape = Tape()
    p = state.bind(tape, watch=("g",))
    fake = gan.generate(p, z, m)
    if cfg.mode == "aug_real_fake":
        fake = augment.apply_chain(augment.sample_chain(chain, rng.augment, fake.shape), fake)
    g_loss = gan.generator_loss(gan.discriminate(p, fake, m)[0])
    metrics["L_G"] = _mean_item(g_loss)
    _check_finite(state.step, metrics)
    grads = tape.backward(g_loss)
    names = [k for k in state.params if k.startswith("g.")]
    _apply_adam(state, names, {k: grads[p[k]] for k in names}, cfg.adam.lr_g, cfg.adam, "t.g")


def train_step(state: GanState, cfg: TrainConfig, reals, rng: Streams) -> dict:
    """Advance ``state`` by one generator iteration, updating it in place.

    ``reals`` is one real batch per discriminator step (a single array is
    accepted when ``d_steps == 1``).  Returns the step's metrics.
    """
    if isinstance(reals, np.ndarray):
        reals = [reals]
    if len(reals) != cfg.d_steps:
        raise ContractError(f"expected {cfg.d_steps} real batches, got {len(reals)}")
    if state.step >= cfg.steps:
        raise ContractError(f"state is already at step {state.step} of {cfg.steps}")
    chain = current_chain(cfg, state.step)
    metrics = {"step": state.step + 1, "aug_strength": chain[0].strength}
    z = None
    try:
        for real in reals:
            z = _d_step(state, cfg, chain, real, rng, metrics)
        _g_step(state, cfg, chain, z, rng, metrics)
    except TrainingDiverged:
        raise
    except NumericalError as exc:
        raise TrainingDiverged(state.step, {**metrics, "error": str(exc)}) from exc
    for name, arr in state.params.items():
        if not np.isfinite(arr).all():
            raise TrainingDiverged(state.step, {**metrics, "param": name})
    state.step += 1
    return metrics


# --- full run -----------------------------------------------------------------------

@dataclass
class RunRecord:
    fingerprint: str
    losses: list  # per-step metric dicts
    evals: list  # (step, proxy_fid)
    final_fid: float
    state: GanState = field(repr=False, compare=False)
    grids: dict = field(default_factory=dict, repr=False, compare=False)  # step -> (64, C, H, W)
    wall_clock: float = field(default=0.0, compare=False)


def sample_images(state: GanState, z: np.ndarray, batch: int = 512) -> np.ndarray:
    return np.concatenate([gan.generate(state, z[i:i + batch]).data for i in range(0, len(z), batch)])


def run(cfg: TrainConfig, dataset: Dataset, eval_images: np.ndarray | None = None) -> RunRecord:
    """Train for ``cfg.steps`` iterations and evaluate proxy-FID.

    proxy-FID is measured every ``eval_interval`` steps (0: final step
    only) between ``eval_samples`` generated images and ``eval_images``
    (default: a random subset of the training data).  Sample grids of 64
    fixed latents are kept every ``grid_interval`` steps and at the end.
    """
    cfg.validate()
    if tuple(dataset.image_shape) != tuple(cfg.model.image_shape):
        raise ContractError(f"dataset images {dataset.image_shape} do not match model {cfg.model.image_shape}")
    start = time.perf_counter()
    rng = Streams.from_seed(cfg.seed)
    state = gan.init_state(cfg.model, rng.init)
    sampler = BatchSampler(dataset, cfg.batch_size, rng.data)

    fx = FeatureExtractor(cfg.model.image_shape, seed=cfg.feature_seed)
    if eval_images is None:
        take = min(cfg.eval_samples, len(dataset))
        eval_images = dataset.images[rng.eval.permutation(len(dataset))[:take]]
    real_stats = stats_of(fx, eval_images)
    eval_z = rng.eval.standard_normal((cfg.eval_samples, cfg.model.latent_dim))
    grid_z = rng.eval.standard_normal((GRID_LATENTS, cfg.model.latent_dim))

    losses, evals, grids = [], [], {}
    for _ in range(cfg.steps):
        reals = [sampler.next_batch() for _ in range(cfg.d_steps)]
        metrics = train_step(state, cfg, reals, rng)
        step = metrics["step"]
        if (cfg.eval_interval and step % cfg.eval_interval == 0) or step == cfg.steps:
            metrics["proxy_fid"] = proxy_fid(fx, real_stats, sample_images(state, eval_z))
            evals.append((step, metrics["proxy_fid"]))
        if (cfg.grid_interval and step % cfg.grid_interval == 0) or step == cfg.steps:
            grids[step] = sample_images(state, grid_z)
        losses.append(metrics)
    return RunRecord(
        cfg.fingerprint(), losses, evals, evals[-1][1], state, grids,
        wall_clock=time.perf_counter() - start,
    )
