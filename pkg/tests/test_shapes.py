import math

import numpy as np
import pytest
from scipy.spatial import cKDTree
from hypothesis import given
from hypothesis import strategies as st

from shape_pde.shapes import (Ball, Box, Cusp2D, HalfSpace, Polygon2D, ShapeError, Union, signed_distance_bruteforce)

L_SHAPE = Polygon2D(((0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)))
TRIANGLE = Polygon2D(((0, 0), (3, 0), (0, 4)))

coord = st.floats(-1.5, 1.5, allow_nan=False)


# construction ---------------------------------------------------------------------

@pytest.mark.parametrize("make", [
    lambda: Ball((0, 0), 0.0),
    lambda: Ball((0, 0), -1.0),
    lambda: Box((0, 0), (1, 0)),
    lambda: Box((0, 0), (1,)),
    lambda: Polygon2D(((0, 0), (0, 1), (1, 0))),           # clockwise
    lambda: Polygon2D(((0, 0), (1, 1), (1, 0), (0, 1))),   # self-intersecting
    lambda: HalfSpace((0, 0)),
    lambda: Cusp2D(0.0),
])
def test_invalid_shapes_raise(make):
    with pytest.raises(ShapeError):
        make()


def test_union_requires_disjoint_closures():
    with pytest.raises(ShapeError):
        Union((Ball((0, 0), 1), Ball((1.5, 0), 1)))
    with pytest.raises(ShapeError):
        Union((Ball((0, 0), 1), Ball((0, 0, 0), 1)))


# membership -----------------------------------------------------------------------

def test_ball_membership_examples():
    b = Ball((0, 0), 1)
    assert b.contains((0.5, 0))
    assert not b.contains((2, 0))
    assert not b.contains((1, 0))  # the boundary is not in the open set


def test_cusp_membership_matches_definition():
    c = Cusp2D(1.0, 1.0)
    assert c.contains((0.5, 0.2))
    assert not c.contains((0.5, 0.25))  # on the curve x2 = x1^2
    assert not c.contains((0.5, 0.3))
    assert not c.contains((-0.5, 0.1))
    np.testing.assert_array_equal(c.apex, [0.0, 0.0])


@given(coord, coord)
def test_cusp_membership_property(x1, x2):
    c = Cusp2D(1.0, 1.0)
    expect = 0 < x1 < 1 and 0 < x2 < x1 ** 2
    assert bool(c.contains((x1, x2))) == expect


# exact distances ------------------------------------------------------------------

def test_distance_examples():
    assert Ball((0, 0), 1).signed_distance((0.5, 0)) == pytest.approx(-0.5)
    box = Box((0, 0, 0), (1.0, 2.0, 3.0))
    assert box.signed_distance((0.5, 1.0, 1.5)) == pytest.approx(-0.5)
    assert HalfSpace((0, 2), 1.0).signed_distance((5, 3)) == pytest.approx(2.0)
    assert L_SHAPE.signed_distance((1.5, 1.5)) == pytest.approx(0.5)
    assert L_SHAPE.signed_distance((2.5, 2.5)) == pytest.approx(math.hypot(1.5, 0.5))


@pytest.mark.parametrize("shape", [Ball((0.1, -0.2), 0.8), Box((-0.7, -0.4), (0.6, 0.9)), L_SHAPE, TRIANGLE,
                                   Union((Ball((-1, 0), 0.4), Box((0.2, -0.3), (1.0, 0.5))))])
def test_exact_distance_matches_bruteforce(shape, rng):
    m = 20_000
    pitch = float(shape.sample_boundary(m).weights.max())
    x = rng.uniform(-2, 3, size=(400, 2))
    exact = shape.signed_distance(x)
    brute = signed_distance_bruteforce(shape, x, m)
    assert np.max(np.abs(exact - brute)) <= 2 * pitch


def test_exact_distance_matches_bruteforce_3d_lattice():
    """Ball and box in 3-D on a 33^3 probe lattice against dense boundary sampling."""
    ax = np.linspace(-1.5, 1.5, 33)
    x = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3)
    for shape in (Ball((0, 0, 0), 1.0), Box((-0.5, -0.6, -0.7), (0.8, 0.6, 0.4))):
        m = 60_000
        s = shape.sample_boundary(m)
        pitch = math.sqrt(float(s.weights.max()))
        brute = cKDTree(s.points).query(x)[0]
        brute = np.where(shape.contains(x), -brute, brute)
        assert np.max(np.abs(shape.signed_distance(x) - brute)) <= 2 * pitch


@given(st.floats(0.1, 3.0), st.floats(-2, 2), st.floats(-2, 2))
def test_ball_distance_is_one_lipschitz(r, x, y):
    b = Ball((0.0, 0.0), r)
    d0 = b.signed_distance((x, y))
    d1 = b.signed_distance((x + 1e-3, y))
    assert abs(d1 - d0) <= 1e-3 * (1 + 1e-9)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_box_sign_agrees_with_membership(x, y):
    box = Box((-1, -0.5), (1, 0.5))
    d = box.signed_distance((x, y))
    if box.contains((x, y)):
        assert d < 0
    else:
        assert d >= 0


# boundary sampling ----------------------------------------------------------------

def test_sample_weights_sum_to_measure():
    assert Ball((0, 0), 1).sample_boundary(4).weights.sum() == pytest.approx(2 * math.pi)
    assert Box((0, 0), (1, 1)).sample_boundary(400).weights.sum() == pytest.approx(4)
    assert TRIANGLE.sample_boundary(120).weights.sum() == pytest.approx(12)
    assert Ball((0, 0, 0), 2).sample_boundary(2000).weights.sum() == pytest.approx(16 * math.pi, rel=1e-9)
    assert Box((0, 0, 0), (1, 2, 3)).sample_boundary(3000).weights.sum() == pytest.approx(22)


def test_triangle_samples_carry_edge_normals():
    s = TRIANGLE.sample_boundary(120)
    hyp = np.array([4.0, 3.0]) / 5.0
    for p, n, _ in s:
        if abs(p[1]) < 1e-12:
            np.testing.assert_allclose(n, [0, -1], atol=1e-12)
        elif abs(p[0]) < 1e-12:
            np.testing.assert_allclose(n, [-1, 0], atol=1e-12)
        else:
            np.testing.assert_allclose(n, hyp, atol=1e-12)


@pytest.mark.parametrize("shape", [Ball((0.3, 0.1), 0.7), Ball((0, 0, 0), 1.0), L_SHAPE, Box((0, 0), (1, 2))])
def test_samples_lie_on_boundary_with_outward_normals(shape):
    s = shape.sample_boundary(256)
    assert np.max(np.abs(shape.signed_distance(s.points))) < 1e-12
    eps = 1e-6
    assert not np.any(shape.contains(s.points + eps * s.normals))
    assert np.all(shape.contains(s.points - eps * s.normals))
    np.testing.assert_allclose(np.linalg.norm(s.normals, axis=1), 1.0, atol=1e-12)


def test_ball_normal_matches_distance_gradient(rng):
    b = Ball((0.2, -0.1), 0.9)
    s = b.sample_boundary(64)
    step = 1e-5
    grads = np.stack([(b.signed_distance(s.points + step * e) - b.signed_distance(s.points - step * e)) / (2 * step)
                      for e in np.eye(2)], axis=-1)
    grads /= np.linalg.norm(grads, axis=1, keepdims=True)
    cos = np.clip(np.sum(grads * s.normals, axis=1), -1, 1)
    assert np.degrees(np.arccos(cos)).max() <= 1e-4


def test_halfspace_sampling_raises():
    with pytest.raises(ShapeError):
        HalfSpace((0, 1)).sample_boundary(10)


# corners ---------------------------------------------------------------------------

def test_square_has_four_right_corners():
    cs = Box((0, 0), (1, 1)).corners()
    assert len(cs) == 4
    for c in cs:
        assert c.inner_angle == pytest.approx(math.pi / 2)
        expect = np.sign(c.point - 0.5) / math.sqrt(2)
        np.testing.assert_allclose(c.direction, expect, atol=1e-12)


def test_collinear_vertex_is_not_a_corner():
    p = Polygon2D(((0, 0), (1, 0), (2, 0), (2, 1), (0, 1)))
    pts = [tuple(c.point) for c in p.corners()]
    assert (1.0, 0.0) not in pts
    assert len(pts) == 4


def test_l_shape_reflex_corner():
    reflex = [c for c in L_SHAPE.corners() if c.inner_angle > math.pi]
    assert len(reflex) == 1
    assert reflex[0].inner_angle == pytest.approx(1.5 * math.pi)
    np.testing.assert_allclose(reflex[0].point, [1, 1])
