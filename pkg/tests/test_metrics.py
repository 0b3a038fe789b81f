from __future__ import annotations

import numpy as np
import pytest
from conftest import random_primitive, random_shape

import oracles
from primgraph.evaluation import evaluate_shapes
from primgraph.geometry import Primitive, corners, voxelize
from primgraph.metrics import (
    MetricError,
    ShapeSet,
    hausdorff_matrix,
    hausdorff_vertex,
    herr,
    set_distance,
    tacc,
    trec,
    voxel_iou,
)

CUBE = Primitive.make((1, 1, 1))
SHIFTED = Primitive.make((1, 1, 1), (0.4, 0, 0))


def test_hausdorff_examples():
    assert hausdorff_vertex(corners(CUBE), corners(CUBE)) == 0.0
    assert hausdorff_vertex(corners(CUBE), corners(SHIFTED)) == pytest.approx(0.4, abs=1e-12)


def test_hausdorff_is_directed():
    a = corners(CUBE)
    b = np.vstack([a, corners(SHIFTED)])
    assert hausdorff_vertex(a, b) == 0.0
    assert hausdorff_vertex(b, a) == pytest.approx(0.4, abs=1e-12)


def test_hausdorff_matches_oracle(rng):
    for _ in range(100):
        a, b = random_primitive(rng), random_primitive(rng)
        expected = oracles.directed_hausdorff(oracles.corner_list(a.params), oracles.corner_list(b.params))
        assert hausdorff_vertex(corners(a), corners(b)) == pytest.approx(expected, rel=1e-12, abs=1e-15)


def test_hausdorff_zero_iff_points_covered(rng):
    p = random_primitive(rng)
    c = corners(p)
    assert hausdorff_vertex(c[::-1], c) == 0.0
    assert hausdorff_vertex(c + 1e-6, c) > 0


def test_set_distance_examples(rng):
    far = Primitive.make((1, 1, 1), (5, 5, 5))
    assert set_distance([CUBE], [CUBE]) == 0.0
    assert set_distance([CUBE], [CUBE, far]) == 0.0
    with pytest.raises(MetricError):
        set_distance([CUBE], [])
    for _ in range(5):
        s1 = [random_primitive(rng) for _ in range(3)]
        s2 = [random_primitive(rng) for _ in range(4)]
        assert set_distance(s1, s2) == pytest.approx(oracles.set_distance(s1, s2), rel=1e-12)


def test_herr_examples():
    assert herr([[CUBE]], [[CUBE]]) == 0.0
    assert herr([[CUBE]], [[SHIFTED]]) == pytest.approx(0.4, abs=1e-12)
    with pytest.raises(MetricError):
        herr([[CUBE]], [])


def test_herr_symmetric(rng):
    p = [random_shape(rng) for _ in range(5)]
    g = [random_shape(rng) for _ in range(5)]
    assert herr(p, g) == pytest.approx(herr(g, p), rel=1e-15)


def test_tacc_threshold_straddle():
    gt = Primitive.make((1, 1, 1))
    diag = np.sqrt(3)
    pred = Primitive.make((1, 1, 1), (0.15 * diag, 0, 0))
    assert tacc([[pred]], [[gt]], 0.1) == 0.0
    assert tacc([[pred]], [[gt]], 0.2) == 100.0


def test_tacc_strict_threshold():
    gt = Primitive.make((1, 1, 1))
    pred = Primitive.make((1, 1, 1), (0.25 * np.sqrt(3), 0, 0))
    ratio = hausdorff_matrix([pred], [gt])[0, 0] / np.sqrt(3)
    assert tacc([[pred]], [[gt]], ratio) == 0.0


def test_tacc_errors():
    with pytest.raises(MetricError):
        tacc([[CUBE]], [[]], 0.1)
    with pytest.raises(MetricError):
        tacc([[CUBE]], [[CUBE]], 0.0)


def test_trec_one_to_one():
    other = Primitive.make((1, 1, 1), (3, 0, 0))
    for d in (0.1, 0.5, 2.0):
        assert trec([[CUBE]], [[CUBE, other]], d) == 50.0


def test_ratio_metrics_match_oracles(rng):
    preds = [random_shape(rng, 4) for _ in range(10)]
    gts = [random_shape(rng, 4) for _ in range(10)]
    for d in (0.1, 0.3, 0.6, 1.0):
        assert tacc(preds, gts, d) == pytest.approx(oracles.tacc(preds, gts, d), rel=1e-12)
        assert trec(preds, gts, d) == pytest.approx(oracles.trec(preds, gts, d), rel=1e-12)


def test_ratio_metrics_monotone(rng):
    preds = [random_shape(rng) for _ in range(6)]
    gts = [random_shape(rng) for _ in range(6)]
    deltas = np.linspace(0.05, 2.0, 25)
    ta = [tacc(preds, gts, d) for d in deltas]
    tr = [trec(preds, gts, d) for d in deltas]
    assert all(a <= b for a, b in zip(ta, ta[1:]))
    assert all(a <= b for a, b in zip(tr, tr[1:]))


def test_voxel_iou_examples(rng):
    full = voxelize([CUBE])
    half = voxelize([Primitive.make((0.5, 1, 1), (-0.25, 0, 0))])
    other_half = voxelize([Primitive.make((0.5, 1, 1), (0.25, 0, 0))])
    assert voxel_iou(full, full) == 100.0
    assert voxel_iou(half, other_half) == 0.0
    assert voxel_iou(half, full) == 50.0
    assert voxel_iou(voxelize([]), voxelize([])) == 100.0
    with pytest.raises(MetricError):
        voxel_iou(full, voxelize([CUBE], resolution=16))
    a = voxelize([random_primitive(rng)])
    b = voxelize([random_primitive(rng)])
    assert voxel_iou(a, b) == voxel_iou(b, a)
    assert voxel_iou(a, b) == pytest.approx(oracles.iou(a.occupancy, b.occupancy), rel=1e-12)


def test_shapeset_label_alignment():
    with pytest.raises(ValueError):
        ShapeSet([CUBE], [1, 2])


def test_evaluate_shapes_perfect_and_empty(rng):
    gts = [ShapeSet(random_shape(rng)) for _ in range(3)]
    report = evaluate_shapes(gts, gts)
    assert report.herr == 0.0 and report.iou_p == 100.0
    assert all(v == 100.0 for v in report.tacc.values())
    assert all(v == 100.0 for v in report.trec.values())
    preds = [gts[0], ShapeSet([], warning="empty"), gts[2]]
    report = evaluate_shapes(preds, gts)
    assert report.empty_predictions == 1 and report.sample_count == 3
    assert report.herr == 0.0
    assert report.trec[0.1] < 100.0
    js = report.to_json()
    assert set(js["tacc"]) == {"0.1", "0.2", "0.3"}
