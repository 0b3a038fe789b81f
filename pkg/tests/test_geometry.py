from __future__ import annotations

import math

import numpy as np
import pytest
from conftest import random_primitive
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from primgraph.geometry import (
    InvalidPrimitiveError,
    Primitive,
    VoxelGrid,
    corners,
    diagonal_length,
    format_primitives,
    mirror,
    obb_to_aabb,
    obj_text,
    parse_primitives,
    read_obj_vertices,
    rotation_matrix,
    voxelize,
    wrap_angle,
    write_obj,
)

angles = st.floats(-10.0, 10.0, allow_nan=False)
lengths = st.floats(0.01, 2.0)
coords = st.floats(-1.0, 1.0)


@st.composite
def primitives(draw):
    return Primitive(np.array([draw(lengths) for _ in range(3)] + [draw(coords) for _ in range(3)]
                              + [draw(angles) for _ in range(3)]))


def test_rotation_identity_and_half_turn():
    assert np.array_equal(rotation_matrix((0, 0, 0)), np.eye(3))
    np.testing.assert_allclose(rotation_matrix((0, 0, np.pi)), np.diag([-1.0, -1.0, 1.0]), atol=1e-15)


def test_rotation_matches_elementary_product():
    r = rotation_matrix((0.3, -0.7, 1.1))
    expected = oracles.rot_z(1.1) @ oracles.rot_y(-0.7) @ oracles.rot_x(0.3)
    np.testing.assert_allclose(r, expected, atol=1e-15)
    np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-12)


def test_rotation_orthonormal_many(rng):
    for _ in range(1000):
        r = rotation_matrix(rng.uniform(-np.pi, np.pi, size=3))
        assert np.abs(r.T @ r - np.eye(3)).max() < 1e-12
        assert abs(np.linalg.det(r) - 1.0) < 1e-12


def test_rotation_rejects_non_finite():
    with pytest.raises(InvalidPrimitiveError):
        rotation_matrix((0.0, np.nan, 0.0))


def test_primitive_validation():
    with pytest.raises(InvalidPrimitiveError):
        Primitive(np.array([1, 1, 0, 0, 0, 0, 0, 0, 0.0]))
    with pytest.raises(InvalidPrimitiveError):
        Primitive(np.array([1, 1, 1, np.inf, 0, 0, 0, 0, 0.0]))
    with pytest.raises(InvalidPrimitiveError):
        Primitive(np.ones(8))


def test_angles_wrapped():
    p = Primitive.make((1, 1, 1), rotation=(3 * np.pi / 2, -np.pi, np.pi))
    np.testing.assert_allclose(p.rotation, [-np.pi / 2, np.pi, np.pi])
    assert wrap_angle(np.pi) == np.pi
    assert wrap_angle(-np.pi) == np.pi


@given(angles)
def test_wrap_angle_range_and_equivalence(theta):
    w = float(wrap_angle(theta))
    assert -np.pi < w <= np.pi
    assert abs(math.sin(w) - math.sin(theta)) < 1e-9 and abs(math.cos(w) - math.cos(theta)) < 1e-9


def test_unit_cube_corners_and_translation():
    cube = Primitive.make((1, 1, 1))
    expected = np.array([[sx, sy, sz] for sx in (-.5, .5) for sy in (-.5, .5) for sz in (-.5, .5)])
    np.testing.assert_array_equal(corners(cube), expected)
    moved = cube.translated((1, 2, 3))
    np.testing.assert_array_equal(corners(moved), expected + np.array([1, 2, 3]))


def test_corner_rotation_example():
    p = Primitive.make((2, 1, 1), rotation=(0, 0, np.pi / 2))
    # sign pattern +++ is the last corner, local (1, 0.5, 0.5)
    np.testing.assert_allclose(corners(p)[7], [-0.5, 1.0, 0.5], atol=1e-12)


@settings(max_examples=200)
@given(primitives())
def test_corners_match_oracle_and_centroid(p):
    c = corners(p)
    np.testing.assert_allclose(c, np.array(oracles.corner_list(p.params)), atol=1e-12)
    np.testing.assert_allclose(c.mean(axis=0), p.translation, atol=1e-9)


@given(primitives(), st.tuples(coords, coords, coords))
def test_corners_translation_equivariant(p, d):
    # equal up to floating-point reassociation of t + d
    np.testing.assert_allclose(corners(p.translated(d)), corners(p) + np.array(d), rtol=0, atol=1e-12)


def test_mirror_examples():
    p = Primitive.make((1, 1, 1), (0.3, 0, 0))
    assert mirror(p) == Primitive.make((1, 1, 1), (-0.3, 0, 0))
    q = Primitive.make((1, 1, 1))
    assert mirror(q) == q
    r = Primitive.make((0.2, 0.3, 0.1), (0.2, 0.1, 0), (0.1, 0.2, 0.3))
    np.testing.assert_allclose(mirror(r).params, [0.2, 0.3, 0.1, -0.2, 0.1, 0, 0.1, -0.2, -0.3])


@given(primitives())
def test_mirror_involution_and_reflects_corners(p):
    np.testing.assert_allclose(mirror(mirror(p)).params, p.params, atol=1e-12)
    reflected = corners(p) * np.array([-1.0, 1.0, 1.0])
    mc = corners(mirror(p))
    # same point set, possibly in a different order
    for point in reflected:
        assert np.min(np.linalg.norm(mc - point, axis=1)) < 1e-9


def test_mirror_voxel_flip(rng):
    for _ in range(20):
        p = random_primitive(rng)
        assert np.array_equal(voxelize([mirror(p)]).occupancy, voxelize([p]).flip_x().occupancy)
    example = Primitive.make((0.3, 0.2, 0.4), (0.2, 0.1, 0), (0.1, 0.2, 0.3))
    assert np.array_equal(voxelize([mirror(example)]).occupancy, voxelize([example]).flip_x().occupancy)


def test_voxelize_full_and_half():
    assert voxelize([Primitive.make((1, 1, 1))]).count() == 32768
    half = Primitive.make((0.5, 1, 1), (-0.25, 0, 0))
    assert voxelize([half]).count() == 16384


def test_voxelize_matches_oracle(rng):
    for _ in range(20):
        p = random_primitive(rng)
        assert np.array_equal(voxelize([p]).occupancy, oracles.voxel_occupancy([p]))


def test_voxelize_union_and_empty(rng):
    prims = [random_primitive(rng) for _ in range(3)]
    assert np.array_equal(voxelize(prims).occupancy, oracles.voxel_occupancy(prims))
    empty = voxelize([])
    assert empty.count() == 0 and empty.warning


def test_voxel_text_round_trip(rng):
    grid = voxelize([random_primitive(rng)], resolution=8)
    text = grid.to_text()
    assert text.startswith("vox 8\n")
    assert np.array_equal(VoxelGrid.from_text(text).occupancy, grid.occupancy)
    with pytest.raises(ValueError):
        VoxelGrid.from_text("vox 2\n0101")


def test_obb_to_aabb_examples():
    p = Primitive.make((1, 2, 3), (0.1, 0.2, 0.3))
    assert obb_to_aabb(p) == p
    q = obb_to_aabb(Primitive.make((2, 1, 1), (0.5, 0, 0), (0, 0, np.pi / 2)))
    np.testing.assert_allclose(q.lengths, [1, 2, 1], atol=1e-12)
    np.testing.assert_allclose(q.translation, [0.5, 0, 0], atol=1e-12)
    s = obb_to_aabb(Primitive.make((1, 1, 1), rotation=(0, 0, np.pi / 4)))
    np.testing.assert_allclose(s.lengths, [math.sqrt(2), math.sqrt(2), 1], atol=1e-12)


@given(primitives())
def test_obb_to_aabb_contains_corners(p):
    box = obb_to_aabb(p)
    lo, hi = box.translation - box.lengths / 2, box.translation + box.lengths / 2
    c = corners(p)
    assert np.all(c >= lo - 1e-9) and np.all(c <= hi + 1e-9)
    assert np.all(box.rotation == 0)


@given(angles, angles, angles)
def test_diagonal_rotation_invariant(a, b, c):
    assert diagonal_length(Primitive.make((2, 3, 6), rotation=(a, b, c))) == 7.0
    assert diagonal_length(Primitive.make((1, 1, 1))) == pytest.approx(math.sqrt(3))


def test_primitive_text_round_trip(rng):
    prims = [random_primitive(rng) for _ in range(4)]
    text = format_primitives(prims, [1, 2, 3, 4])
    back, labels = parse_primitives(text)
    assert labels == [1, 2, 3, 4]
    assert all(a == b for a, b in zip(prims, back))
    with pytest.raises(ValueError):
        parse_primitives("1 2 3")


def test_obj_export(tmp_path, rng):
    p = random_primitive(rng)
    text = obj_text([p], [3], {3: "back"})
    assert sum(line.startswith("v ") for line in text.splitlines()) == 8
    assert sum(line.startswith("f ") for line in text.splitlines()) == 12
    assert "g part0_back" in text
    path = tmp_path / "shape.obj"
    write_obj(path, [p], [3])
    np.testing.assert_allclose(read_obj_vertices(path), corners(p), atol=1e-6)
    assert obj_text([]).startswith("#")
