import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kolmo.errors import DegenerateSample, NonPositiveRadius, ZeroPoint
from kolmo.gramian import propagator
from kolmo.group import (
    CylinderParams,
    CylinderShape,
    compose,
    cylinder_contains,
    cylinder_corners,
    distance,
    holder_seminorm,
    inverse,
    left_translate_inverse,
    norm_additive,
    norm_implicit,
    quasi_symmetry_constant,
    quasi_triangle_constant,
    unit_shape_contains,
)
from kolmo.operator import dilate, dilation_exponents
from kolmo.point import GroupPoint

from .conftest import chain3, k2, wide

coord = st.floats(-3.0, 3.0)


def point(N, c=coord):
    return st.tuples(st.lists(c, min_size=N, max_size=N), c).map(lambda p: GroupPoint(p[0], p[1]))


def close(a, b, tol=1e-10):
    np.testing.assert_allclose(a.as_array(), b.as_array(), rtol=tol, atol=tol)


@settings(max_examples=50)
@given(point(3), point(3), point(3))
def test_compose_associative(a, b, c):
    spec = wide()
    close(compose(compose(a, b, spec), c, spec), compose(a, compose(b, c, spec), spec), 1e-9)


@settings(max_examples=50)
@given(point(3))
def test_inverse_and_identity(z):
    spec = wide()
    e = GroupPoint.origin(3)
    close(compose(z, inverse(z, spec), spec), e)
    close(compose(inverse(z, spec), z, spec), e)
    close(compose(e, z, spec), z)


def test_k2_law_by_hand(K2):
    # E(t) = [[1, 0], [-t, 1]]
    z = GroupPoint([1.0, 2.0], 0.5)
    w = GroupPoint([-1.0, 0.5], 2.0)
    assert compose(z, w, K2) == GroupPoint([0.0, 0.5 + 2.0 - 2.0 * 1.0], 2.5)


def test_left_translation_vectorized(W3, rng):
    c = GroupPoint(rng.standard_normal(3), 0.3)
    X = rng.standard_normal((5, 3))
    T = rng.uniform(-1, 1, 5)
    Xr, Tr = left_translate_inverse(c, X, T, W3)
    for i in range(5):
        close(GroupPoint(Xr[i], Tr[i]), compose(inverse(c, W3), GroupPoint(X[i], T[i]), W3))


def test_translation_preserves_integral_curves(W3):
    # the flow of Y from z is z o (0, -s) = (E(-s) x, t - s)
    z = GroupPoint([0.2, -0.4, 1.0], 0.0)
    for s in (0.1, 1.0):
        close(compose(z, GroupPoint(np.zeros(3), -s), W3), GroupPoint(propagator(W3.B, -s) @ z.x, -s))


@settings(max_examples=50)
@given(point(3), st.floats(0.05, 20.0))
def test_norms_homogeneous(z, r):
    g = dilation_exponents(chain3())
    if not np.any(z.as_array()):
        return
    zr = dilate(z, r, g)
    assert norm_additive(zr, g) == pytest.approx(r * norm_additive(z, g), rel=1e-10)
    assert norm_implicit(zr, g) == pytest.approx(r * norm_implicit(z, g), rel=1e-9)


@settings(max_examples=50)
@given(point(2, coord.filter(lambda v: v == 0.0 or abs(v) > 1e-12)))
def test_implicit_norm_solves_its_equation(z):
    g = dilation_exponents(k2())
    if not np.any(z.as_array()):
        return
    u = dilate(z, 1.0 / norm_implicit(z, g), g)
    assert np.sum(u.x**2) + u.t**2 == pytest.approx(1.0, rel=1e-9)


def test_implicit_norm_values(K2):
    g = dilation_exponents(K2)
    assert norm_implicit(GroupPoint([0.0, 8.0], 0.0), g) == pytest.approx(2.0)
    assert norm_implicit(GroupPoint([0.0, 0.0], -9.0), g) == pytest.approx(3.0)
    with pytest.raises(ZeroPoint):
        norm_implicit(GroupPoint.origin(2), g)


def test_norm_equivalence_constant(rng):
    g = dilation_exponents(chain3())
    ratios = []
    for _ in range(500):
        z = GroupPoint(rng.standard_normal(3) * 10.0 ** rng.uniform(-3, 3, 3), rng.standard_normal())
        ratios.append(norm_additive(z, g) / norm_implicit(z, g))
    # every term of the additive norm is at most r, and the largest is at least r / sqrt(4)
    assert max(ratios) <= 4.0 + 1e-9 and min(ratios) >= 0.5 - 1e-9


def test_quasi_distance_constants(K2, rng):
    g = dilation_exponents(K2)
    pts = [GroupPoint(rng.standard_normal(2), rng.standard_normal()) for _ in range(25)]
    assert 1.0 <= quasi_triangle_constant(pts, K2, g) < 10.0
    assert 1.0 <= quasi_symmetry_constant(pts, K2, g) < 10.0
    # roundoff of order eps in x2 is seen through the cube root
    assert distance(pts[0], pts[0], K2, g) < 1e-4


def test_cylinder_membership(K2):
    g = dilation_exponents(K2)
    p = CylinderParams()
    c = GroupPoint([0.5, -0.2], 1.0)
    assert cylinder_contains(c, c, 1.0, CylinderShape.FULL, K2, g, p)
    assert not cylinder_contains(c, c, 1.0, CylinderShape.UNIT, K2, g, p)  # open at the top
    # points of the Y flow land on the time slice
    s = (p.beta + p.gamma) / 2
    below = compose(c, GroupPoint(np.zeros(2), -s), K2)
    for shape in (CylinderShape.SLICE, CylinderShape.MINUS, CylinderShape.UNIT, CylinderShape.FULL):
        assert cylinder_contains(below, c, 1.0, shape, K2, g, p)
    assert not cylinder_contains(below, c, 1.0, CylinderShape.PLUS, K2, g, p)
    with pytest.raises(NonPositiveRadius):
        cylinder_contains(c, c, 0.0, CylinderShape.UNIT, K2, g, p)


@settings(max_examples=30)
@given(st.floats(0.1, 5.0))
def test_cylinder_scaling(r):
    spec = k2()
    g = dilation_exponents(spec)
    u = GroupPoint([0.3, -0.1], -0.6)
    z = dilate(u, r, g)
    assert cylinder_contains(z, GroupPoint.origin(2), r, CylinderShape.MINUS, spec, g)


def test_unit_shapes_nested(rng):
    g = dilation_exponents(k2())
    X = rng.uniform(-1.2, 1.2, (4000, 2))
    T = rng.uniform(-1.2, 1.2, 4000)
    full = unit_shape_contains(X, T, CylinderShape.FULL, g)
    unit = unit_shape_contains(X, T, CylinderShape.UNIT, g)
    plus = unit_shape_contains(X, T, CylinderShape.PLUS, g)
    minus = unit_shape_contains(X, T, CylinderShape.MINUS, g)
    assert np.all(full[unit]) and np.all(unit[plus]) and np.all(unit[minus])
    assert not np.any(plus & minus)


def test_corners_lie_on_boundary(K2):
    g = dilation_exponents(K2)
    c = GroupPoint([0.1, 0.2], 0.0)
    corners = cylinder_corners(c, 0.5, K2, g)
    assert corners.shape == (8, 3)
    for row in corners:
        z = GroupPoint(row[:2] * 0.999 + 0.001 * c.x, row[2])
        shrunk = compose(inverse(c, K2), z, K2)
        assert np.all(np.abs(shrunk.x) / g.spatial(0.5) <= 1.0 + 1e-9)


def test_holder_seminorm(K2):
    g = dilation_exponents(K2)
    pts = [GroupPoint([0.0, 0.0], 0.0), GroupPoint([1.0, 0.0], 0.0), GroupPoint([0.0, 1.0], 0.0)]
    samples = [(p, p.x[0]) for p in pts]
    assert holder_seminorm(samples, 1.0, K2, g) == pytest.approx(1.0)
    with pytest.raises(DegenerateSample):
        holder_seminorm(samples[:1], 0.5, K2, g)
    with pytest.raises(DegenerateSample):
        holder_seminorm(samples + [samples[0]], 0.5, K2, g)


def test_param_validation():
    with pytest.raises(ValueError):
        CylinderParams(alpha=0.6, beta=0.5)
    with pytest.raises(ValueError):
        CylinderParams(delta=1.0)


def test_three_strata_slice(K3):
    g = dilation_exponents(K3)
    c = GroupPoint([0.0, 0.0, 0.0], 0.0)
    z = compose(c, GroupPoint(np.zeros(3), CylinderParams().slice_time * 4.0), K3)
    assert cylinder_contains(z, c, 2.0, CylinderShape.SLICE, K3, g)
