"""Minimal reverse-mode autodiff kernel: tensors, layers, losses, optimizer."""

from .gradcheck import GradCheckReport, grad_check
from .losses import soft_jaccard_loss, weighted_bce
from .ops import (
    BatchNormState,
    batchnorm2d,
    bilinear_upsample2x,
    concat_channels,
    conv2d,
    dropout,
    maxpool2x,
    relu,
    sigmoid,
)
from .optim import Adam
from .tensor import Tensor
from .weights_io import load_weights, save_weights

__all__ = [
    "Tensor", "Adam", "GradCheckReport", "grad_check",
    "conv2d", "batchnorm2d", "BatchNormState", "maxpool2x",
    "bilinear_upsample2x", "relu", "sigmoid", "dropout", "concat_channels",
    "weighted_bce", "soft_jaccard_loss", "save_weights", "load_weights",
]
