import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from kolmo.conditions import random_valid_spec
from kolmo.control import (
    Bounded,
    ControlGrid,
    Domain,
    L2Budget,
    Unbounded,
    attainable_contains,
    attainable_grid,
    attainable_sample,
    cumulative_energy,
    forward_endpoint,
    integrate_admissible,
    min_energy_curve,
    min_energy_piecewise,
    optimal_cost,
    parse_control_class,
    reach_min_energy,
    reference_hausdorff,
    unit_box,
)
from kolmo.errors import BadTimeOrder, EmptyControl, NotControllable, PointOutsideDomain, TargetNotAttainable
from kolmo.operator import make_operator
from kolmo.point import GroupPoint

from .conftest import k2


def test_zero_control_follows_drift_field(W3):
    z0 = GroupPoint([0.3, -0.2, 0.5], 1.0)
    curve = integrate_admissible(W3, z0, ControlGrid.zero(1.5, 2, steps=3))
    for s in (0.0, 0.2, 0.77, 1.5):
        p = curve.point_at(s)
        np.testing.assert_allclose(p.x, scipy.linalg.expm(s * W3.B) @ z0.x, rtol=1e-12, atol=1e-14)
        assert p.t == pytest.approx(1.0 - s)


def test_variation_of_constants_against_ode_solver(W3, rng):
    omega = rng.standard_normal((7, 2))
    ctl = ControlGrid(1.4, omega)
    z0 = GroupPoint([0.1, 0.4, -0.3], 0.0)
    curve = integrate_admissible(W3, z0, ctl)
    G = W3.sigma / np.sqrt(2.0)
    x = z0.x
    for i in range(ctl.steps):
        sol = solve_ivp(lambda s, y: W3.B @ y + G @ omega[i], (0, ctl.h), x, method="DOP853", rtol=1e-13, atol=1e-14)
        x = sol.y[:, -1]
        np.testing.assert_allclose(curve.points[i + 1, :3], x, rtol=1e-10, atol=1e-10)
    assert curve.end.t == pytest.approx(-1.4)


def test_dense_sampling_rows(K2):
    curve = integrate_admissible(K2, GroupPoint([0.0, 0.0], 0.0), ControlGrid(1.0, np.ones((4, 1))))
    D = curve.dense(per_cell=3)
    assert D.shape == (13, 4)
    np.testing.assert_allclose(D[:, 0], np.linspace(0, 1, 13))
    np.testing.assert_allclose(D[-1, 1:], curve.points[-1])


def test_control_energy_bookkeeping():
    ctl = ControlGrid(2.0, np.array([[1.0], [2.0], [0.0], [3.0]]))
    assert ctl.energy == pytest.approx(0.5 * (1 + 4 + 0 + 9))
    assert cumulative_energy(ctl, 0.75) == pytest.approx(0.5 + 0.25 * 4)
    assert ctl.window_energy(0.5, 2.0) == pytest.approx(0.5 * (4 + 0 + 9))
    with pytest.raises(EmptyControl):
        ControlGrid(1.0, np.zeros((0, 1)))
    with pytest.raises(EmptyControl):
        integrate_admissible(k2(), GroupPoint([0, 0], 0), ControlGrid(1.0, np.zeros((2, 3))))


def test_k2_reference_cost(K2):
    # C(1)^{-1} = [[4, 6], [6, 12]] and the cost is d^T (2C)^{-1} d with d = (0, 1)
    assert optimal_cost(K2, [0.0, 0.0], [0.0, 1.0], 1.0) == pytest.approx(6.0, rel=1e-13)
    assert optimal_cost(K2, [0.0, 0.0], [0.0, 1.0], 1.0, convention="C") == pytest.approx(12.0, rel=1e-13)
    ctl = reach_min_energy(K2, [0.0, 0.0], 0.0, [0.0, 1.0], 1.0)
    assert ctl.energy == pytest.approx(6.0, rel=1e-8)
    np.testing.assert_allclose(forward_endpoint(K2, [0.0, 0.0], ctl), [0.0, 1.0], atol=1e-10)


def test_free_flow_costs_nothing(W3):
    x0 = np.array([0.3, 0.1, -0.4])
    x1 = scipy.linalg.expm(-0.8 * W3.B) @ x0
    assert optimal_cost(W3, x0, x1, 0.8) == pytest.approx(0.0, abs=1e-20)
    ctl = reach_min_energy(W3, x0, 0.0, x1, 0.8, steps=16)
    assert np.max(np.abs(ctl.omega)) < 1e-10


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 10.0))
def test_cost_is_quadratic(lam):
    spec = k2()
    d = np.array([0.4, -0.3])
    assert optimal_cost(spec, np.zeros(2), lam * d, 0.6) == pytest.approx(lam**2 * optimal_cost(spec, np.zeros(2), d, 0.6),
                                                                          rel=1e-11)


def test_cost_invariant_under_orthogonal_change(W3, rng):
    P, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    rot = make_operator(P @ W3.A @ P.T, P @ W3.B @ P.T, P @ W3.sigma)
    x0, x1 = rng.standard_normal(3), rng.standard_normal(3)
    assert optimal_cost(rot, P @ x0, P @ x1, 0.9) == pytest.approx(optimal_cost(W3, x0, x1, 0.9), rel=1e-10)


def test_discrete_energy_converges_from_above(K2):
    exact = 6.0
    gaps = []
    for n in (8, 16, 32, 64):
        _, e = min_energy_piecewise(-K2.B, K2.sigma, [0.0, 0.0], [0.0, 1.0], 1.0, steps=n)
        assert e >= exact - 1e-12
        gaps.append(e - exact)
    ratios = np.array(gaps[:-1]) / np.array(gaps[1:])
    np.testing.assert_allclose(ratios, 4.0, rtol=0.05)


def test_random_instances_energy_identity():
    rng = np.random.default_rng(11)
    for _ in range(10):
        spec = random_valid_spec(rng, max_N=4)
        x0, x1 = rng.standard_normal(spec.N), rng.standard_normal(spec.N)
        tau = rng.uniform(0.3, 2.0)
        ctl = reach_min_energy(spec, x0, 0.0, x1, tau)
        assert ctl.energy == pytest.approx(optimal_cost(spec, x0, x1, tau), rel=1e-8)


def test_least_energy_curve(W3):
    z0 = GroupPoint([0.2, -0.1, 0.3], 0.5)
    z = GroupPoint([-0.4, 0.2, 0.1], -0.3)
    curve = min_energy_curve(W3, z0, z)
    np.testing.assert_allclose(curve.end.x, z.x, atol=1e-10)
    assert curve.end.t == pytest.approx(z.t)
    # the curve runs backwards in time, so the roles of the endpoints swap
    assert curve.control.energy == pytest.approx(optimal_cost(W3, z.x, z0.x, 0.8, convention="C"), rel=1e-8)


def test_reach_errors(K2):
    with pytest.raises(BadTimeOrder):
        reach_min_energy(K2, [0, 0], 1.0, [0, 1], 0.5)
    with pytest.raises(BadTimeOrder):
        min_energy_curve(K2, GroupPoint([0, 0], 0.0), GroupPoint([0, 1], 0.5))
    flat = make_operator(np.diag([1.0, 0.0]), np.zeros((2, 2)))
    with pytest.raises(NotControllable):
        optimal_cost(flat, [0, 0], [0, 1], 1.0)


def test_domain_geometry():
    d = Domain([[-1, -1, -1], [0.5, -1, -1]], [[0, 1, 0], [2, 1, 0]])
    assert d.dim == 3
    pts = np.array([[-0.5, 0, -0.5], [0.25, 0, -0.5], [1.0, 0.0, -0.5], [0.0, 0.0, -0.5]])
    assert d.contains_arrays(pts).tolist() == [True, False, True, False]
    assert d.closure_contains_arrays(pts).tolist() == [True, False, True, True]
    np.testing.assert_allclose(d.boundary_distance(pts), [0.5, 0.0, 0.5, 0.0])
    with pytest.raises(ValueError):
        Domain([0, 0], [1, 0])
    assert unit_box(2).contains(GroupPoint([0.0, 0.0], -0.5))


def test_parse_control_class():
    assert parse_control_class("bounded:2") == Bounded(2.0)
    assert parse_control_class("l2:0.5") == L2Budget(0.5)
    assert parse_control_class("unbounded") == Unbounded()
    with pytest.raises(ValueError):
        parse_control_class("huge")


@pytest.fixture(scope="module")
def k2_grid():
    return attainable_grid(k2(), GroupPoint([0.0, 0.0], 0.0), unit_box(2), Bounded(1.0), resolution=24)


def test_grid_contains_start_and_drift_flow(k2_grid):
    assert k2_grid.contains(GroupPoint([0.0, 0.0], 0.0))
    # omega = 0 from the origin stays at the origin
    for t in (-0.1, -0.5, -0.9):
        assert k2_grid.contains(GroupPoint([0.0, 0.0], t))
    with pytest.raises(PointOutsideDomain):
        k2_grid.contains(GroupPoint([0.0, 0.0], 0.5))


def test_grid_respects_speed_limit(k2_grid):
    # |x1| <= s under |omega| <= 1, since x1' = omega; one cell of slack for the grid
    pts = k2_grid.occupied_points()
    s = -pts[:, 2]
    assert np.all(np.abs(pts[:, 0]) <= s + 2 * k2_grid.width[0] + 1e-12)
    assert not k2_grid.contains(GroupPoint([0.9, 0.0], -0.1))


def test_grid_contains_sampled_endpoints(k2_grid):
    pts = attainable_sample(k2(), GroupPoint([0.0, 0.0], 0.0), unit_box(2), Bounded(1.0), 200, seed=3)
    assert len(pts) == 200
    hits = [k2_grid.contains(GroupPoint(p[:2], p[2])) for p in pts if unit_box(2).contains(GroupPoint(p[:2], p[2]))]
    assert np.mean(hits) == 1.0


def test_witness_curve(k2_grid):
    target = GroupPoint([0.3, 0.0], -0.5)
    curve = k2_grid.witness(target)
    assert np.all(np.abs(curve.control.omega) <= 1.0 + 1e-12)
    assert k2_grid.cell_of(curve.end.x) == k2_grid.cell_of(target.x)
    dense = curve.dense(4)[1:, 1:]
    assert np.all(unit_box(2).contains_arrays(dense))
    with pytest.raises(TargetNotAttainable):
        k2_grid.witness(GroupPoint([0.9, 0.0], -0.1))


def test_grid_shrinks_with_domain(K2):
    z0 = GroupPoint([0.0, 0.0], 0.0)
    full = attainable_grid(K2, z0, unit_box(2), Bounded(1.0), resolution=16)
    # same bounding box with the slab x1 > 0.25 removed below t = -0.5
    cut = Domain([[-1, -1, -0.5], [-1, -1, -1]], [[1, 1, 0], [0.25, 1, -0.5]])
    part = attainable_grid(K2, z0, cut, Bounded(1.0), resolution=16)
    assert len(part.occupied_points()) < len(full.occupied_points())
    pts = part.occupied_points()
    assert not np.any((pts[:, 0] > 0.25 + part.width[0]) & (pts[:, 2] < -0.5 - part.dt))


def test_richer_class_reaches_more(K2):
    z0 = GroupPoint([0.0, 0.0], 0.0)
    small = attainable_grid(K2, z0, unit_box(2), Bounded(0.5), resolution=16)
    big = attainable_grid(K2, z0, unit_box(2), Unbounded(), resolution=16)
    assert len(big.occupied_points()) > len(small.occupied_points())
    assert big.contains(GroupPoint([0.9, 0.0], -0.1))


def test_nothing_above_the_start(K2):
    z0 = GroupPoint([0.0, 0.0], -0.5)
    assert not attainable_contains(K2, z0, GroupPoint([0.0, 0.0], -0.2), unit_box(2), Bounded(1.0), resolution=8)
    with pytest.raises(PointOutsideDomain):
        attainable_grid(K2, GroupPoint([0.0, 0.0], 0.5), unit_box(2), Bounded(1.0), resolution=8)


def test_l2_budget_energy(K2):
    g = attainable_grid(K2, GroupPoint([0.0, 0.0], 0.0), unit_box(2), L2Budget(0.5), resolution=12)
    for l in range(1, g.n_layers):
        assert np.all(g.layers[l].energy <= 0.5 + 1e-12)


def test_concatenated_curves(W3, rng):
    # admissible curves compose: following one control and then another equals the joint control
    a = rng.standard_normal((3, 2))
    b = rng.standard_normal((3, 2))
    z0 = GroupPoint([0.1, 0.2, 0.3], 0.0)
    first = integrate_admissible(W3, z0, ControlGrid(0.6, a))
    second = integrate_admissible(W3, first.end, ControlGrid(0.6, b))
    joint = integrate_admissible(W3, z0, ControlGrid(1.2, np.vstack([a, b])))
    np.testing.assert_allclose(joint.end.as_array(), second.end.as_array(), rtol=1e-12, atol=1e-14)


def test_reference_hausdorff():
    A = np.array([[0.0, 0.0], [1.0, 0.0]])
    B = np.array([[0.0, 0.0], [1.0, 0.5]])
    assert reference_hausdorff(A, B) == pytest.approx(0.5)
    assert reference_hausdorff(A, B, scale=np.array([1.0, 0.5])) == pytest.approx(1.0)
    assert reference_hausdorff(A, np.zeros((0, 2))) == np.inf
