"""Harnack chains along admissible curves.

A chain splits an admissible curve ``gamma`` on ``[0, T]`` at ``s_j = j delta0``.
Each link ``[s_j, s_{j+1}]`` with lag ``Delta`` uses the radius
``r = sqrt(2 Delta / (beta + gamma))``, which puts ``gamma(s_{j+1})`` on the
time slice of ``K-_r(gamma(s_j))``.  When the window energy is at most ``h``
the spatial offset is small enough for the slice, hence for ``Q-_r``, and
one Harnack step costs a factor ``c``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .control import (
    AdmissibleCurve,
    AttainableGrid,
    Bounded,
    Domain,
    attainable_grid,
    cumulative_energy,
    min_energy_curve,
)
from .errors import (
    BadTimeOrder,
    ChainInvalid,
    CurveExitsDomain,
    EnergyWindowUnsatisfiable,
    KolmoError,
    NotControllable,
    PointOnBoundary,
    TargetNotAttainable,
)
from .gramian import gramian, propagators
from .group import CylinderParams, CylinderShape, cylinder_contains, unit_shape_contains
from .operator import OperatorSpec, dilation_exponents, replace_B
from .point import GroupPoint, as_point

TUBE_RTOL = 1e-6
TUBE_MARGIN = 1e-3
MAX_LINKS = 20000


@dataclass(frozen=True)
class HarnackParams:
    """Harnack constant ``c``, window energy ``h`` and cylinder shape parameters.

    ``h=None`` selects :func:`default_energy_threshold`.  ``literal_delta``
    bounds the step by ``beta r0`` instead of ``beta r0^2``.
    """

    c: float = math.e
    h: float | None = None
    alpha: float = 0.25
    beta: float = 0.5
    gamma: float = 0.75
    delta: float = 0.5
    r_cap: float = 1.0
    literal_delta: bool = False

    def __post_init__(self):
        CylinderParams(self.alpha, self.beta, self.gamma, self.delta)
        if not self.c >= 1:
            raise ValueError("the Harnack constant must be at least 1")
        if self.h is not None and not self.h > 0:
            raise ValueError("the energy threshold must be positive")
        if not self.r_cap > 0:
            raise ValueError("r_cap must be positive")

    @property
    def cylinder(self) -> CylinderParams:
        return CylinderParams(self.alpha, self.beta, self.gamma, self.delta)

    def step_cap(self, r0: float) -> float:
        return self.beta * (r0 if self.literal_delta else r0 * r0)


def link_radius(lag: float, params: HarnackParams) -> float:
    """``sqrt(2 lag / (beta + gamma))``."""
    return math.sqrt(2.0 * lag / (params.beta + params.gamma))


_THRESHOLD_CACHE: dict = {}


def default_energy_threshold(spec: OperatorSpec, params: HarnackParams, n_grid: int = 400,
                             safety: float = 0.9) -> float:
    """Largest window energy that keeps every link inside its slice, times ``safety``.

    For a window of lag ``Delta`` the spatial offset ``w`` of the endpoint
    obeys ``w_j^2 <= W_jj(Delta) * energy`` with
    ``W(Delta) = int_0^Delta e^{vB} A e^{vB^T} dv`` (Cauchy-Schwarz), and the
    slice needs ``|w_j| < (delta r)^{q_j}``.  The threshold is the minimum of
    ``(delta r)^{2 q_j} / W_jj(Delta)`` over a log grid of lags up to
    ``beta r_cap^2``.
    """
    key = (spec.A.tobytes(), spec.B.tobytes(), spec.m, params, n_grid, safety)
    if key in _THRESHOLD_CACHE:
        return _THRESHOLD_CACHE[key]
    group = dilation_exponents(spec)
    q = np.asarray(group.q, dtype=float)
    back = replace_B(spec, -spec.B)
    top = params.step_cap(params.r_cap)
    best = np.inf
    for lag in np.geomspace(top * 1e-8, top, n_grid):
        W = gramian(back, float(lag)).C
        r = link_radius(lag, params)
        best = min(best, float(np.min((params.delta * r) ** (2 * q) / np.diag(W))))
    if len(_THRESHOLD_CACHE) > 64:
        _THRESHOLD_CACHE.clear()
    _THRESHOLD_CACHE[key] = safety * best
    return safety * best


N_EDGE = 17


@functools.lru_cache(maxsize=16)
def _sign_patterns(N: int) -> np.ndarray:
    """Corners and face centers of ``[-1, 1]^N``."""
    pats = np.array(np.meshgrid(*[[-1.0, 0.0, 1.0]] * N, indexing="ij")).reshape(N, -1).T
    return pats[np.any(pats != 0, axis=1)]


def _full_cylinder_inside(spec, group, domain, Z, R, n_edge=N_EDGE):
    """Sampled test of ``Qtilde_{R_i}(Z_i) subset domain`` for each row.

    The spatial box of the cylinder at unit time ``v`` is centered at
    ``E(R^2 v) x``; the ``n_edge`` centers are generated by repeated
    application of one step matrix per point.
    """
    N = spec.N
    pats = _sign_patterns(N)
    P = len(Z)
    q = np.asarray(group.q, dtype=float)
    grow = 1.0 + TUBE_MARGIN
    span = R**2 * grow
    step = 2.0 / (n_edge - 1)
    # overflowing centers are non-finite and fail the containment test below
    with np.errstate(over="ignore", invalid="ignore"):
        first = np.einsum("kij,kj->ki", propagators(spec.B, -span), Z[:, :N])
        Estep = propagators(spec.B, span * step)
        centers = np.empty((P, n_edge, N))
        centers[:, 0] = first
        for k in range(1, n_edge):
            centers[:, k] = np.einsum("kij,kj->ki", Estep, centers[:, k - 1])
        half = (R[:, None] ** q[None, :]) * grow
        pts = centers[:, :, None, :] + pats[None, None, :, :] * half[:, None, None, :]
    taus = span[:, None] * np.linspace(-1.0, 1.0, n_edge)[None, :]
    tt = np.broadcast_to((Z[:, N][:, None] + taus)[:, :, None], pts.shape[:3])
    flat = np.concatenate([pts.reshape(-1, N), tt.reshape(-1, 1)], axis=1)
    ok = domain.contains_arrays(flat).reshape(P, -1)
    return np.all(ok, axis=1)


def tube_radii(spec: OperatorSpec, points, domain: Domain, rtol: float = TUBE_RTOL, r_max: float = 1e6) -> np.ndarray:
    """Vectorized :func:`tube_radius` for rows ``(x, t)``."""
    Z = np.atleast_2d(np.asarray(points, dtype=float))
    if not np.all(domain.contains_arrays(Z)):
        raise PointOnBoundary("tube radius needs points in the open domain")
    group = dilation_exponents(spec)
    lo_b, hi_b = domain.bounds
    # Qtilde_r contains a ball of sup radius min(r^q_max, r^2) in scaled units
    d = domain.boundary_distance(Z)
    lo = np.minimum(d, d ** (1.0 / max(max(group.q), 2))) * 0.5
    lo = np.maximum(lo, 1e-300)
    while not np.all(ok := _full_cylinder_inside(spec, group, domain, Z, lo)):
        lo = np.where(ok, lo, lo * 0.5)
    # Qtilde_r spans 2 r^2 in time, which bounds r by the domain's time extent
    span = min(float(np.max(hi_b - lo_b)), math.sqrt(0.5 * (hi_b[-1] - lo_b[-1])) * 1.01)
    hi = np.full(len(Z), span)
    hi = np.minimum(np.maximum(hi, 2 * lo), r_max)
    inside = _full_cylinder_inside(spec, group, domain, Z, hi)
    while np.any(inside & (hi < r_max)):
        lo = np.where(inside, hi, lo)
        hi = np.where(inside, np.minimum(hi * 2, r_max), hi)
        inside = _full_cylinder_inside(spec, group, domain, Z, hi) & (hi < r_max)
    active = ~inside
    while np.any(active & (hi - lo > rtol * lo)):
        mid = 0.5 * (lo + hi)
        ok = _full_cylinder_inside(spec, group, domain, Z, mid)
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
    return lo


def tube_radius(spec: OperatorSpec, curve: AdmissibleCurve, domain: Domain, s: float) -> float:
    """``sup { r : Qtilde_r(gamma(s)) subset domain }`` from below.

    Bisection to relative ``1e-6`` on a sampled containment test (corners
    and face centers of the spatial box at 17 times across the cylinder),
    applied to a box enlarged by ``0.1%``; the lower bracket is returned.

    Raises
    ------
    PointOnBoundary
        If ``gamma(s)`` is not in the open domain.
    """
    z = curve.point_at(s)
    return float(tube_radii(spec, z.as_array()[None, :], domain)[0])


def max_window_energy(curve: AdmissibleCurve, width: float) -> float:
    """``max_a int_a^{a+width} |omega|^2`` over ``[0, T]``; exact for piecewise-constant controls."""
    c = curve.control
    if width >= c.T:
        return c.energy
    nodes = np.arange(c.steps + 1) * c.h
    starts = np.concatenate([nodes, nodes - width])
    starts = np.clip(starts, 0.0, c.T - width)
    return float(np.max(cumulative_energy(c, starts + width) - cumulative_energy(c, starts)))


def select_delta0(curve: AdmissibleCurve, cap: float, h: float) -> float:
    """Largest ``delta <= cap`` whose sliding-window energy is at most ``h``.

    Window energy grows linearly in ``delta`` inside a control cell, so a
    positive step always exists; very small steps are caught by the link
    limit of :func:`build_chain`.

    Raises
    ------
    EnergyWindowUnsatisfiable
        If the step would fall below ``1e-8 cap``.
    """
    if max_window_energy(curve, cap) <= h:
        return cap
    lo, hi = 0.0, cap
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if max_window_energy(curve, mid) <= h:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * cap:
            break
    if lo < 1e-8 * cap:
        raise EnergyWindowUnsatisfiable(f"window energy bound {h} forces a vanishing step {lo:.3e}")
    return lo


def chain_length(T: float, delta0: float) -> int:
    """``ceil(T / delta0)`` robust to roundoff in exact multiples."""
    k = math.ceil(T / delta0)
    if k > 1 and (k - 1) * delta0 >= T * (1 - 1e-14):
        k -= 1
    return max(k, 1)


@dataclass(frozen=True)
class HarnackChain:
    """Chain points ``gamma(s_j)``, link radii and the bound ``c^k``.

    ``points`` has ``k + 1`` entries: ``s_j = j delta0`` for ``j < k`` and
    the terminal ``s_k = T``.  ``radii[j]`` is the link radius from point
    ``j`` to point ``j + 1``.  The terminal neighbourhood is
    ``Q-_{radii[-1]}(points[-2])``.
    """

    points: tuple
    s: np.ndarray
    radii: np.ndarray
    tube: np.ndarray
    k: int
    c: float
    h: float
    delta0: float
    r0: float
    T: float
    window_energy: np.ndarray
    params: HarnackParams = field(repr=False)

    @property
    def bound(self) -> float:
        return float(self.c**self.k)

    @property
    def log_bound(self) -> float:
        return self.k * math.log(self.c)

    @property
    def terminal_neighborhood(self) -> dict:
        if self.k == 0:
            return {"center": self.points[0].as_array().tolist(), "radius": 0.0, "shape": "Q-"}
        return {"center": self.points[-2].as_array().tolist(), "radius": float(self.radii[-1]), "shape": "Q-"}

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "bound": self.bound,
            "log_bound": self.log_bound,
            "c": self.c,
            "h": self.h,
            "delta0": self.delta0,
            "r0": self.r0,
            "T": self.T,
            "s": self.s.tolist(),
            "points": [p.as_array().tolist() for p in self.points],
            "radii": self.radii.tolist(),
            "terminal_neighborhood": self.terminal_neighborhood,
        }


@dataclass(frozen=True)
class ChainAudit:
    links: int
    membership_ok: int
    slice_ok: int
    containment_ok: int
    energy_ok: int
    k_formula_ok: bool

    @property
    def valid(self) -> bool:
        n = self.links
        return self.k_formula_ok and self.membership_ok == self.slice_ok == self.containment_ok == self.energy_ok == n


def audit_chain(spec: OperatorSpec, chain: HarnackChain, domain: Domain | None = None) -> ChainAudit:
    """Recheck every link of ``chain`` from scratch.

    Membership in ``Q-``, the slice ``K-`` whenever the window energy is at
    most ``h``, domain containment of ``Q_r`` through the tube radius and
    ``k = ceil(T / delta0)``.
    """
    group = dilation_exponents(spec)
    cp = chain.params.cylinder
    mem = sl = cont = en = 0
    for j in range(chain.k):
        a, b, r = chain.points[j], chain.points[j + 1], float(chain.radii[j])
        mem += cylinder_contains(b, a, r, CylinderShape.MINUS, spec, group, cp)
        if chain.window_energy[j] <= chain.h:
            en += 1
            sl += cylinder_contains(b, a, r, CylinderShape.SLICE, spec, group, cp)
        if domain is None:
            cont += r <= chain.tube[j]
        else:
            cont += bool(r <= tube_radii(spec, a.as_array()[None, :], domain)[0])
    k_ok = chain.k == (0 if chain.T == 0 else chain_length(chain.T, chain.delta0))
    return ChainAudit(chain.k, mem, sl, cont, en, k_ok)


def _unit_offsets(spec, group, Z0, Z1, radii):
    """``D(1/r_j)(Z0_j^{-1} o Z1_j)`` for stacked link endpoints."""
    N = spec.N
    lag = Z1[:, N] - Z0[:, N]
    X = Z1[:, :N] - np.einsum("kij,kj->ki", propagators(spec.B, lag), Z0[:, :N])
    q = np.asarray(group.q, dtype=float)
    return X / radii[:, None] ** q[None, :], lag / radii**2


def _check_inside(curve: AdmissibleCurve, domain: Domain, per_cell: int = 8):
    pts = curve.dense(per_cell)[:, 1:]
    if not np.all(domain.contains_arrays(pts)):
        raise CurveExitsDomain("the curve leaves the open domain")
    return pts


def build_chain(spec: OperatorSpec, curve: AdmissibleCurve, domain: Domain, params: HarnackParams = HarnackParams(),
                per_cell: int = 2, max_links: int = MAX_LINKS) -> HarnackChain:
    """Harnack chain along ``curve`` inside ``domain``.

    ``r0`` is the smallest tube radius over ``per_cell`` samples per control
    cell, capped by ``r_cap``; ``delta0`` is the largest step up to
    ``beta r0^2`` whose sliding-window energy stays below ``h``.  Every link
    is audited before the chain is returned.

    Raises
    ------
    CurveExitsDomain
        If a sampled curve point is not in the open domain.
    EnergyWindowUnsatisfiable
        See :func:`select_delta0`.
    ChainInvalid
        If a link fails its audit or the chain would exceed ``max_links``.
    """
    pts = _check_inside(curve, domain, per_cell)
    group = dilation_exponents(spec)
    h = default_energy_threshold(spec, params) if params.h is None else params.h
    tubes = tube_radii(spec, pts, domain)
    r0 = float(min(np.min(tubes), params.r_cap))
    T = curve.T
    delta0 = select_delta0(curve, params.step_cap(r0), h)
    k = chain_length(T, delta0)
    if k > max_links:
        raise ChainInvalid(f"chain would need {k} links (limit {max_links})")
    s = np.append(np.arange(k) * delta0, T)
    points = tuple(curve.point_at(sj) for sj in s)
    lags = np.array([points[j].t - points[j + 1].t for j in range(k)])
    radii = np.array([link_radius(d, params) for d in lags])
    Z = np.array([p.as_array() for p in points[:-1]])
    tube_at = tube_radii(spec, Z, domain)
    wins = cumulative_energy(curve.control, s[1:]) - cumulative_energy(curve.control, s[:-1])
    wins = np.atleast_1d(wins)
    bad = np.nonzero(~(radii <= tube_at))[0]
    if bad.size:
        raise ChainInvalid(f"link {bad[0]}: cylinder of radius {radii[bad[0]]:.3e} leaves the domain")
    P1 = np.array([p.as_array() for p in points[1:]])
    Xu, Tu = _unit_offsets(spec, group, Z, P1, radii)
    cp = params.cylinder
    bad = np.nonzero(~unit_shape_contains(Xu, Tu, CylinderShape.MINUS, group, cp))[0]
    if bad.size:
        raise ChainInvalid(f"link {bad[0]}: successor outside Q-")
    on = unit_shape_contains(Xu, Tu, CylinderShape.SLICE, group, cp)
    bad = np.nonzero((wins <= h) & ~on)[0]
    if bad.size:
        raise ChainInvalid(f"link {bad[0]}: successor off the K- slice")
    return HarnackChain(points, s, radii, tube_at, k, float(params.c), float(h), float(delta0), r0, float(T), wins,
                        params)


def empty_chain(z0, params: HarnackParams) -> HarnackChain:
    z0 = as_point(z0)
    h = float("nan") if params.h is None else params.h
    return HarnackChain((z0,), np.zeros(1), np.zeros(0), np.zeros(0), 0, float(params.c), h, float("nan"),
                        float("nan"), 0.0, np.zeros(0), params)


def chain_to(spec: OperatorSpec, z0, z, domain: Domain, params: HarnackParams = HarnackParams(),
             grid: AttainableGrid | None = None, steps: int = 64) -> HarnackChain:
    """Chain from ``z0`` to ``z`` along the least-energy curve, else along the grid witness.

    Raises
    ------
    TargetNotAttainable
        If no connecting curve inside ``domain`` is found.
    """
    z0, z = as_point(z0), as_point(z)
    if z == z0:
        return empty_chain(z0, params)
    if not z.t < z0.t:
        raise TargetNotAttainable("targets must lie strictly below z0 in time")
    errors = []
    try:
        curve = min_energy_curve(spec, z0, z, steps=steps)
        return build_chain(spec, curve, domain, params)
    except (BadTimeOrder, NotControllable, CurveExitsDomain, EnergyWindowUnsatisfiable, ChainInvalid) as e:
        errors.append(str(e))
    if grid is not None:
        try:
            return build_chain(spec, grid.witness(z), domain, params)
        except KolmoError as e:
            errors.append(str(e))
    raise TargetNotAttainable(f"no Harnack chain to {z}: " + "; ".join(errors))


def harnack_bound(spec: OperatorSpec, z0, targets, domain: Domain, params: HarnackParams = HarnackParams(),
                  grid: AttainableGrid | None = None) -> list[tuple[GroupPoint, float]]:
    """``[(target, c^k)]``; the set constant is the maximum of the bounds.

    Raises
    ------
    TargetNotAttainable
        If some target cannot be joined to ``z0`` by a valid chain.
    """
    return [(as_point(z), chain_to(spec, z0, z, domain, params, grid).bound) for z in targets]


@dataclass
class MaxPrincipleReport:
    """Attainable cells with their Harnack bounds (``None`` when no chain was found)."""

    z0: GroupPoint
    resolution: int
    cells: list
    width: np.ndarray
    dt: float

    @property
    def certified(self) -> np.ndarray:
        rows = [c["point"] for c in self.cells if c["bound"] is not None]
        return np.array(rows).reshape(-1, len(self.z0.x) + 1)

    @property
    def set_constant(self) -> float:
        b = [c["bound"] for c in self.cells if c["bound"] is not None]
        return max(b) if b else 1.0

    def to_dict(self) -> dict:
        return {
            "z0": self.z0.as_array().tolist(),
            "resolution": self.resolution,
            "width": self.width.tolist(),
            "dt": self.dt,
            "set_constant": self.set_constant,
            "cells": self.cells,
        }


def strong_max_report(spec: OperatorSpec, z0, domain: Domain, params: HarnackParams = HarnackParams(),
                      resolution: int = 8, control_class=Bounded(1.0)) -> MaxPrincipleReport:
    """Attainable cells at ``resolution`` with a Harnack bound for each representative.

    A nonnegative solution vanishing at ``z0`` vanishes on every certified
    cell representative.

    Raises
    ------
    PointOnBoundary
        If ``z0`` is not in the open domain.
    """
    z0 = as_point(z0)
    if not domain.contains(z0):
        raise PointOnBoundary(f"{z0} must be inside the open domain")
    grid = attainable_grid(spec, z0, domain, control_class, resolution)
    cells = []
    for l in range(1, grid.n_layers):
        t = grid.layer_time(l)
        layer = grid.layers[l]
        idx = np.floor((layer.X - grid.lo) / grid.width).astype(int)
        seen = {}
        for i, key in enumerate(map(tuple, idx)):
            if key not in seen or layer.energy[i] < layer.energy[seen[key]]:
                seen[key] = i
        for key, i in sorted(seen.items()):
            z = GroupPoint(layer.X[i], t)
            try:
                ch = build_chain(spec, grid.witness(z), domain, params)
                bound, k = ch.bound, ch.k
            except KolmoError:
                bound, k = None, None
            cells.append({"cell": list(key), "layer": l, "point": z.as_array().tolist(), "k": k, "bound": bound})
    return MaxPrincipleReport(z0, resolution, cells, grid.width, grid.dt)


__all__ = [
    "ChainAudit", "HarnackChain", "HarnackParams", "MaxPrincipleReport", "audit_chain", "build_chain", "chain_length",
    "chain_to", "default_energy_threshold", "harnack_bound", "link_radius", "max_window_energy", "select_delta0",
    "strong_max_report", "tube_radii", "tube_radius",
]

