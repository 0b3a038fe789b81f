"""Minimal reverse-mode differentiation core and layers."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import grad_check
from .layers import (
    ConvEncoder,
    Dense,
    LSTMCell,
    MLP,
    MultiHeadMLP,
    conv2d,
    dense_forward,
    lstm_cell,
    roi_align,
)
from .losses import cross_entropy, l1, loss_terms, smooth_l1
from .optim import AdamState, ParameterStore, adam_step, clip_grad_norm
from .tensor import Tensor, concat, einsum, softmax, stack

__all__ = [
    "AdamState",
    "CheckpointError",
    "ConvEncoder",
    "Dense",
    "LSTMCell",
    "MLP",
    "MultiHeadMLP",
    "ParameterStore",
    "Tensor",
    "adam_step",
    "clip_grad_norm",
    "concat",
    "conv2d",
    "cross_entropy",
    "dense_forward",
    "einsum",
    "grad_check",
    "l1",
    "load_checkpoint",
    "loss_terms",
    "lstm_cell",
    "roi_align",
    "save_checkpoint",
    "smooth_l1",
    "softmax",
    "stack",
]
