from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor

PROB_EPS = 1e-12


def cross_entropy(prob: Tensor, target) -> Tensor:
    """Negative log-probability of ``target`` under post-softmax ``prob``.

    ``prob`` is (M,) with an int target or (N, M) with (N,) targets; rows are summed.
    """
    idx = np.atleast_1d(np.asarray(target))
    if not np.issubdtype(idx.dtype, np.integer):
        raise ValueError(f"class index must be an integer, got {target!r}")
    width = prob.shape[-1]
    if np.any(idx < 0) or np.any(idx >= width):
        raise ValueError(f"class index {target!r} out of range for {width} classes")
    if prob.ndim == 1:
        picked = prob[int(idx[0])]
    else:
        if len(idx) != prob.shape[0]:
            raise ValueError(f"{len(idx)} targets for {prob.shape[0]} rows")
        picked = prob[np.arange(prob.shape[0]), idx]
    return -T.log(picked, eps=PROB_EPS).sum()


def l1(pred: Tensor, target) -> Tensor:
    """Sum of absolute differences."""
    target = np.asarray(target, dtype=pred.dtype)
    if target.shape != pred.shape:
        raise ValueError(f"l1 shape mismatch: {pred.shape} vs {target.shape}")
    return T.tabs(pred - target).sum()


def smooth_l1(pred: Tensor, target, beta: float = 1.0) -> Tensor:
    target = np.asarray(target, dtype=pred.dtype)
    if target.shape != pred.shape:
        raise ValueError(f"smooth_l1 shape mismatch: {pred.shape} vs {target.shape}")
    return T.smooth_l1(pred - target, beta).sum()


def loss_terms(kind: str, pred: Tensor, target) -> Tensor:
    if kind == "cross_entropy":
        return cross_entropy(pred, target)
    if kind == "l1":
        return l1(pred, target)
    if kind == "smooth_l1":
        return smooth_l1(pred, target)
    raise ValueError(f"unknown loss kind {kind!r}")
