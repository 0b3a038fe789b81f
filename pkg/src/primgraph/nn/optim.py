"""Named parameter storage and the Adam optimizer."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .tensor import Tensor


class ParameterStore:
    """Ordered mapping of unique names to trainable tensors.

    Iteration order is insertion order, which the checkpoint format relies on.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=self.dtype), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self._params if n.startswith(prefix)]

    def tensors(self, prefix: str = "") -> list[Tensor]:
        return [t for n, t in self._params.items() if n.startswith(prefix)]

    def zero_grad(self, prefix: str = "") -> None:
        for t in self.tensors(prefix):
            t.zero_grad()

    def set_trainable(self, prefix: str, flag: bool) -> None:
        for t in self.tensors(prefix):
            t.requires_grad = flag
            if not flag:
                t.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        for name, value in state.items():
            if name not in self._params:
                if strict:
                    raise KeyError(f"unexpected parameter {name!r}")
                continue
            target = self._params[name]
            if target.shape != value.shape:
                raise ValueError(f"shape mismatch for {name}: {target.shape} vs {value.shape}")
            target.data = np.array(value, dtype=self.dtype)


def clip_grad_norm(tensors: list[Tensor], max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most ``max_norm``."""
    total = float(np.sqrt(sum(float(np.sum(t.grad.astype(np.float64) ** 2)) for t in tensors if t.grad is not None)))
    if total > max_norm and total > 0:
        scale = max_norm / total
        for t in tensors:
            if t.grad is not None:
                t.grad = t.grad * np.asarray(scale, dtype=t.grad.dtype)
    return total


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.95
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(store: ParameterStore, state: AdamState, names: list[str] | None = None) -> None:
    """Apply one bias-corrected Adam update to ``names`` (default: all) and clear their grads."""
    names = list(store) if names is None else names
    for name in names:
        if store[name].grad is None:
            raise ValueError(f"parameter {name!r} has no gradient")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name in names:
        p = store[name]
        g = p.grad
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        update = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data = (p.data - update).astype(p.data.dtype)
        p.grad = None
