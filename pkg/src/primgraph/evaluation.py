"""Dataset-level evaluation of predicted shapes."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .geometry import voxelize
from .metrics import (
    DEFAULT_TACC_THRESHOLDS,
    DEFAULT_TREC_THRESHOLDS,
    MetricError,
    MetricReport,
    ShapeSet,
    herr,
    tacc,
    trec,
    voxel_iou,
)


def evaluate_shapes(predictions: Sequence[ShapeSet], ground_truths: Sequence[ShapeSet],
                    resolution: int = 32) -> MetricReport:
    """All metrics over a test set.

    Empty predictions are left out of HErr (it is undefined for them), score 0
    in TAcc/TRec and are counted in ``empty_predictions``.
    """
    if len(predictions) != len(ground_truths):
        raise MetricError(f"{len(predictions)} predictions vs {len(ground_truths)} ground truths")
    if not predictions:
        raise MetricError("empty test set")
    nonempty = [i for i, p in enumerate(predictions) if len(p)]
    h = herr([predictions[i] for i in nonempty], [ground_truths[i] for i in nonempty]) if nonempty else float("nan")
    ious = [voxel_iou(voxelize(p.primitives, resolution), voxelize(g.primitives, resolution))
            for p, g in zip(predictions, ground_truths)]
    return MetricReport(
        herr=h,
        tacc={d: tacc(predictions, ground_truths, d) for d in DEFAULT_TACC_THRESHOLDS},
        trec={d: trec(predictions, ground_truths, d) for d in DEFAULT_TREC_THRESHOLDS},
        iou_p=float(np.mean(ious)),
        sample_count=len(predictions),
        empty_predictions=len(predictions) - len(nonempty),
    )
