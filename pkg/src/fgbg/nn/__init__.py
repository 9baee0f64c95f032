"""Minimal differentiable network stack: layers, networks, SGD, checkpoints."""

from .layers import (
    Conv2d,
    Dropout,
    FullyConnected,
    MaxPool2d,
    ReLU,
    dropout_apply,
    softmax,
    softmax_xent,
)
from .network import EVAL_SCALE, LayerSpec, Network, eval_size_for, load_arch, tinynet_spec
from .optim import MomentumSGD, OptimConfig, learning_rate
from .checkpoint import checkpoint_sha256, load_checkpoint, save_checkpoint

__all__ = [
    "Conv2d",
    "Dropout",
    "FullyConnected",
    "MaxPool2d",
    "ReLU",
    "dropout_apply",
    "softmax",
    "softmax_xent",
    "LayerSpec",
    "Network",
    "EVAL_SCALE",
    "eval_size_for",
    "load_arch",
    "tinynet_spec",
    "MomentumSGD",
    "OptimConfig",
    "learning_rate",
    "checkpoint_sha256",
    "load_checkpoint",
    "save_checkpoint",
]
