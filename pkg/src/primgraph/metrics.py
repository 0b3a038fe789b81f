"""Shape evaluation: corner-set Hausdorff distances, HErr, TAcc, TRec and voxel IoU."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .geometry import Primitive, VoxelGrid, corners_batch

DEFAULT_TACC_THRESHOLDS = (0.1, 0.2, 0.3)
DEFAULT_TREC_THRESHOLDS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6)


class MetricError(ValueError):
    pass


@dataclass
class ShapeSet:
    primitives: list[Primitive] = field(default_factory=list)
    labels: list[int] | None = None
    warning: str | None = None

    def __post_init__(self):
        self.primitives = list(self.primitives)
        if self.labels is not None:
            self.labels = [int(v) for v in self.labels]
            if len(self.labels) != len(self.primitives):
                raise ValueError("labels must align 1:1 with primitives")

    def __len__(self) -> int:
        return len(self.primitives)


@dataclass
class MetricReport:
    herr: float
    tacc: dict[float, float]
    trec: dict[float, float]
    iou_p: float
    iou_v: float | None = None
    sample_count: int = 0
    empty_predictions: int = 0

    def to_json(self) -> dict:
        out = asdict(self)
        out["tacc"] = {f"{k:g}": v for k, v in self.tacc.items()}
        out["trec"] = {f"{k:g}": v for k, v in self.trec.items()}
        return out


def hausdorff_vertex(a: np.ndarray, b: np.ndarray) -> float:
    """Directed distance: max over points of ``a`` of the distance to the nearest point of ``b``."""
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
    return float(d.min(axis=1).max())


def hausdorff_matrix(a: Sequence[Primitive], b: Sequence[Primitive]) -> np.ndarray:
    """(len(a), len(b)) matrix of directed corner-set distances."""
    ca, cb = corners_batch(a), corners_batch(b)
    d = np.linalg.norm(ca[:, None, :, None, :] - cb[None, :, None, :, :], axis=-1)
    return d.min(axis=3).max(axis=2)


def _prims(s) -> list[Primitive]:
    return list(s.primitives) if isinstance(s, ShapeSet) else list(s)


def set_distance(s1, s2) -> float:
    """Mean over primitives of ``s1`` of the smallest distance to any primitive of ``s2``."""
    a, b = _prims(s1), _prims(s2)
    if not a or not b:
        raise MetricError("set distance is undefined for an empty shape")
    return float(np.mean(hausdorff_matrix(a, b).min(axis=1)))


def herr(predictions: Sequence, ground_truths: Sequence) -> float:
    if len(predictions) != len(ground_truths):
        raise MetricError(f"{len(predictions)} predictions vs {len(ground_truths)} ground truths")
    if not predictions:
        raise MetricError("empty test set")
    total = 0.0
    for pred, gt in zip(predictions, ground_truths):
        total += set_distance(pred, gt) + set_distance(gt, pred)
    return total / (2 * len(predictions))


def _ratio_inputs(predictions, ground_truths, delta):
    if delta <= 0:
        raise MetricError("threshold must be positive")
    if len(predictions) != len(ground_truths):
        raise MetricError(f"{len(predictions)} predictions vs {len(ground_truths)} ground truths")
    for gt in ground_truths:
        if not _prims(gt):
            raise MetricError("ground-truth shape is empty")


def _diagonals(prims: Sequence[Primitive]) -> np.ndarray:
    return np.array([np.linalg.norm(p.lengths) for p in prims])


def tacc(predictions: Sequence, ground_truths: Sequence, delta: float) -> float:
    """Percentage of predicted primitives within ``delta`` (diagonal-normalized) of their nearest GT."""
    _ratio_inputs(predictions, ground_truths, delta)
    hits = total = 0
    for pred, gt in zip(predictions, ground_truths):
        a, b = _prims(pred), _prims(gt)
        if not a:
            continue
        h = hausdorff_matrix(a, b)
        nearest = h.argmin(axis=1)
        ratio = h[np.arange(len(a)), nearest] / _diagonals(b)[nearest]
        hits += int(np.sum(ratio < delta))
        total += len(a)
    return 100.0 * hits / total if total else 0.0


def greedy_one_to_one(cost: np.ndarray) -> list[tuple[int, int]]:
    """Repeatedly take the smallest remaining (row, col) entry; ties go to the lowest index pair."""
    cost = np.array(cost, dtype=np.float64)
    pairs = []
    for _ in range(min(cost.shape)):
        flat = int(np.argmin(cost))
        i, j = divmod(flat, cost.shape[1])
        pairs.append((i, j))
        cost[i, :] = np.inf
        cost[:, j] = np.inf
    return pairs


def trec(predictions: Sequence, ground_truths: Sequence, delta: float) -> float:
    """Percentage of GT primitives whose one-to-one greedy match is within ``delta``."""
    _ratio_inputs(predictions, ground_truths, delta)
    hits = total = 0
    for pred, gt in zip(predictions, ground_truths):
        a, b = _prims(pred), _prims(gt)
        total += len(b)
        if not a:
            continue
        h = hausdorff_matrix(a, b)
        diag = _diagonals(b)
        for i, j in greedy_one_to_one(h):
            if h[i, j] / diag[j] < delta:
                hits += 1
    return 100.0 * hits / total


def voxel_iou(a: VoxelGrid, b: VoxelGrid) -> float:
    if a.resolution != b.resolution:
        raise MetricError(f"resolution mismatch: {a.resolution} vs {b.resolution}")
    union = int(np.count_nonzero(a.occupancy | b.occupancy))
    if union == 0:
        return 100.0
    inter = int(np.count_nonzero(a.occupancy & b.occupancy))
    return 100.0 * inter / union
