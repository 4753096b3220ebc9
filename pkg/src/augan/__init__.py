"""Differentiable augmentation and augmentation-based regularization for GANs, at desk scale."""

from . import augment, data, evaluation, gan, regularizers, tensor, trainer
from .augment import AugmentSpec, SimclrSpec
from .data import Dataset, gen_toy, load_cifar10, load_idx
from .errors import (
    AuganError, ConfigError, ContractError, FormatError, NumericalError, ShapeError, TrainingDiverged,
)
from .evaluation import FeatureExtractor, fid_ratio, frechet_distance, proxy_fid
from .regularizers import bcr_loss, cntr_loss
from .tensor import Tape, Tensor
from .trainer import TrainConfig, run, train_step

__version__ = "0.1.0"
