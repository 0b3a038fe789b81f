from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor


def grad_check(f: Callable[[], Tensor], params: list[Tensor], step: float = 1e-5,
               max_coords: int = 200, seed: int = 0, atol: float = 1e-7,
               elementwise: bool = False) -> float:
    """Relative error between analytic and central-difference gradients.

    ``f`` must rebuild the graph from ``params`` on every call. At most
    ``max_coords`` coordinates are sampled across all parameters and the error
    is ``||a - n|| / max(||a||, ||n||, atol)`` over the sampled vector.
    Comparing whole vectors keeps components far below the loss scale, whose
    difference quotients are dominated by float64 round-off, from swamping
    the measurement. With ``elementwise`` the result is instead the largest
    per-coordinate ``|a - n| / max(|a|, |n|, atol)``.
    """
    for p in params:
        p.grad = None
    f().backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    coords = [(i, j) for i, p in enumerate(params) for j in range(p.data.size)]
    rng = np.random.default_rng(seed)
    if len(coords) > max_coords:
        pick = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[k] for k in sorted(pick)]

    a_vec, n_vec = [], []
    for i, j in coords:
        flat = params[i].data.reshape(-1)
        orig = flat[j]
        flat[j] = orig + step
        up = float(f().data)
        flat[j] = orig - step
        down = float(f().data)
        flat[j] = orig
        numeric = (up - down) / (2 * step)
        a_vec.append(float(analytic[i].reshape(-1)[j]))
        n_vec.append(numeric)
    for p in params:
        p.grad = None
    a_vec, n_vec = np.array(a_vec), np.array(n_vec)
    if elementwise:
        scale = np.maximum(np.maximum(np.abs(a_vec), np.abs(n_vec)), atol)
        return float(np.max(np.abs(a_vec - n_vec) / scale)) if len(a_vec) else 0.0
    scale = max(np.linalg.norm(a_vec), np.linalg.norm(n_vec), atol)
    return float(np.linalg.norm(a_vec - n_vec) / scale)
