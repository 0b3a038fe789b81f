"""Primitive reasoning network: node embedding, one attention message-passing step, readout."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import nn
from ..nn import tensor as T
from ..nn.layers import uniform_init
from ..nn.tensor import Tensor
from .config import ModelConfig


@dataclass
class FinalPrediction:
    params: np.ndarray      # normalized primitive parameters (9,)
    dist: np.ndarray        # (M_c + 1,) probabilities, index 0 = background
    source: int = -1        # index of the proposal it refines

    @property
    def label(self) -> int:
        return int(np.argmax(self.dist))

    @property
    def confidence(self) -> float:
        return float(np.max(self.dist))


@dataclass
class ReasoningOutput:
    z: Tensor               # (n, D_z) node embeddings
    y: Tensor               # (n, D_z) after message passing
    probs: Tensor           # (n, M_c + 1)
    geometry: Tensor        # (n, M_c + 1, 9), one row per class head

    def select(self, classes) -> Tensor:
        n, heads = self.geometry.shape[0], self.geometry.shape[1]
        onehot = np.zeros((n, heads, 1), dtype=self.geometry.dtype)
        onehot[np.arange(n), np.asarray(classes, dtype=int), 0] = 1.0
        return (self.geometry * onehot).sum(axis=1)


def message_pass(z: Tensor, u: Tensor, v: Tensor, w: Tensor) -> Tensor:
    """``y_i = z_i + mean_{j != i} ((U z_i) . (V z_j)) W z_j`` over a fully connected graph."""
    n = z.shape[0]
    if n == 1:
        return z
    a = (z @ u.T) @ (z @ v.T).T
    off_diag = 1.0 - np.eye(n, dtype=z.dtype)
    return z + ((a * off_diag) @ (z @ w.T)) * (1.0 / (n - 1))


class ReasoningNetwork:
    def __init__(self, store: nn.ParameterStore, cfg: ModelConfig, rng: np.random.Generator,
                 prefix: str = "reasoning"):
        self.cfg = cfg
        dh_slot, ds_slot, dp_slot = cfg.z_split
        self.g_h = nn.Dense(store, f"{prefix}.g_h", cfg.d_h, dh_slot, rng, "relu")
        self.g_s = None if cfg.agnostic else nn.Dense(store, f"{prefix}.g_s", cfg.m_c, ds_slot, rng, "relu")
        self.g_p = nn.Dense(store, f"{prefix}.g_p", 9, dp_slot, rng, "relu")
        self.u = store.add(f"{prefix}.U", uniform_init(rng, (cfg.d_z, cfg.d_z), cfg.d_z))
        self.v = store.add(f"{prefix}.V", uniform_init(rng, (cfg.d_z, cfg.d_z), cfg.d_z))
        self.w = store.add(f"{prefix}.W", uniform_init(rng, (cfg.d_z, cfg.d_z), cfg.d_z))
        self.f_s = nn.Dense(store, f"{prefix}.f_s", cfg.d_z, cfg.m_c + 1, rng, "softmax")
        self.f_p = nn.MultiHeadMLP(store, f"{prefix}.f_p", cfg.d_z, cfg.head_hidden, 9, cfg.m_c + 1, rng)

    def node_embed(self, h, s, p) -> Tensor:
        """``[g_h(h); g_s(s); g_p(p)]`` for (n, D_h), (n, M_c), (n, 9) inputs."""
        h, s, p = (x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=self.u.dtype)) for x in (h, s, p))
        n = h.shape[0]
        if self.g_s is None:
            slot = Tensor(np.ones((n, self.cfg.z_split[1]), dtype=h.dtype))
        else:
            slot = self.g_s(s)
        return T.concat([self.g_h(h), slot, self.g_p(p)], axis=1)

    def message_pass(self, z: Tensor) -> Tensor:
        return message_pass(z, self.u, self.v, self.w)

    def __call__(self, h, s, p) -> ReasoningOutput:
        z = self.node_embed(h, s, p)
        y = self.message_pass(z)
        return ReasoningOutput(z=z, y=y, probs=self.f_s(y), geometry=self.f_p(y))
