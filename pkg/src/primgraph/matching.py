"""Greedy assignment for the reasoning loss and pairing-based NMS."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import Primitive, wrap_angle


@dataclass
class Assignment:
    pairs: list[tuple[int, int]] = field(default_factory=list)
    background: list[int] = field(default_factory=list)


def _as_params(p) -> np.ndarray:
    return p.params if isinstance(p, Primitive) else np.asarray(p, dtype=np.float64)


def primitive_l1(p, q, include_rotation: bool = False) -> float:
    """L1 distance over lengths and translations, plus wrapped angle differences when asked."""
    a, b = _as_params(p), _as_params(q)
    d = float(np.sum(np.abs(a[:6] - b[:6])))
    if include_rotation:
        d += float(np.sum(np.abs(wrap_angle(a[6:9] - b[6:9]))))
    return d


def l1_matrix(a, b) -> np.ndarray:
    """Rotation-free L1 distances between two lists of primitives (or (n, 9) arrays)."""
    pa = np.array([_as_params(p) for p in a], dtype=np.float64).reshape(-1, 9)
    pb = np.array([_as_params(p) for p in b], dtype=np.float64).reshape(-1, 9)
    return np.abs(pa[:, None, :6] - pb[None, :, :6]).sum(axis=-1)


def greedy_match(predictions: Sequence, gt_doubled: Sequence) -> Assignment:
    """Pair predictions with (doubled) ground truths by repeatedly taking the closest pair.

    Leftover predictions become background. Ties resolve to the lowest
    (prediction, ground truth) index pair.
    """
    n, m = len(predictions), len(gt_doubled)
    if n == 0:
        return Assignment()
    cost = l1_matrix(predictions, gt_doubled) if m else np.zeros((n, 0))
    pairs = []
    for _ in range(min(n, m)):
        i, j = divmod(int(np.argmin(cost)), m)
        pairs.append((i, j))
        cost[i, :] = np.inf
        cost[:, j] = np.inf
    matched = {i for i, _ in pairs}
    return Assignment(pairs=pairs, background=[i for i in range(n) if i not in matched])


def pairing_nms(finals: Sequence[tuple]) -> list[tuple]:
    """Keep the higher-confidence member of each greedily formed nearest pair.

    ``finals`` holds (primitive, label, confidence) tuples; an odd leftover is
    kept. Output preserves input order.
    """
    n = len(finals)
    if n == 0:
        return []
    cost = l1_matrix([f[0] for f in finals], [f[0] for f in finals])
    cost[np.tril_indices(n)] = np.inf
    alive = set(range(n))
    keep = []
    while len(alive) >= 2:
        i, j = divmod(int(np.argmin(cost)), n)
        ci, cj = finals[i][2], finals[j][2]
        keep.append(i if ci >= cj else j)
        for k in (i, j):
            cost[k, :] = np.inf
            cost[:, k] = np.inf
            alive.discard(k)
    keep.extend(alive)
    return [finals[k] for k in sorted(keep)]
