"""Minimum-energy control, admissible curves and attainable sets.

An admissible curve solves ``gamma' = sum_k omega_k X_k + Y`` with
``X_k = sigma_k . D / sqrt 2`` and ``Y = <Bx, D> - d_t``, that is

    x'(s) = B x(s) + sigma omega(s) / sqrt 2,     t(s) = t_start - s.

Controls are piecewise constant on uniform grids and every cell is
propagated exactly through one exponential of ``[[M, G], [0, 0]]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .conditions import kalman_rank
from .errors import (
    BadTimeOrder,
    EmptyControl,
    NotControllable,
    PointOutsideDomain,
    TargetNotAttainable,
)
from .gramian import gramian, matrix_exponential
from .operator import OperatorSpec
from .point import GroupPoint, as_point

SQRT2 = math.sqrt(2.0)


# --- control grids and curves ------------------------------------------------


@dataclass(frozen=True)
class ControlGrid:
    """Piecewise-constant control on ``steps`` equal cells of ``[0, T]``."""

    T: float
    omega: np.ndarray
    energy: float = field(init=False)

    def __post_init__(self):
        om = np.array(self.omega, dtype=float)
        if om.ndim == 1:
            om = om.reshape(-1, 1)
        if om.shape[0] == 0:
            raise EmptyControl("control grid has no cells")
        if not self.T > 0:
            raise EmptyControl(f"control horizon must be positive, got {self.T}")
        om.setflags(write=False)
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "energy", float(np.sum(om * om) * self.h))

    @property
    def steps(self) -> int:
        return self.omega.shape[0]

    @property
    def h(self) -> float:
        return self.T / self.steps

    @classmethod
    def zero(cls, T: float, m: int, steps: int = 1) -> "ControlGrid":
        return cls(T, np.zeros((steps, m)))

    def window_energy(self, a: float, b: float) -> float:
        """``int_a^b |omega|^2`` for ``0 <= a <= b <= T``."""
        return cumulative_energy(self, b) - cumulative_energy(self, a)


def cumulative_energy(control: ControlGrid, s) -> np.ndarray | float:
    """``I(s) = int_0^s |omega|^2``, piecewise linear in ``s``."""
    h = control.h
    per = np.sum(control.omega**2, axis=1) * h
    cum = np.concatenate([[0.0], np.cumsum(per)])
    s_arr = np.clip(np.asarray(s, dtype=float), 0.0, control.T)
    i = np.minimum((s_arr / h).astype(int), control.steps - 1)
    out = cum[i] + (s_arr - i * h) * per[i] / h
    return float(out) if np.ndim(out) == 0 else out


def _cell_maps(M, G, h: float):
    """``(exp(hM), int_0^h exp(uM) du G)`` from one block exponential."""
    n, m = G.shape
    H = np.zeros((n + m, n + m))
    H[:n, :n] = M
    H[:n, n:] = G
    F = matrix_exponential(h * H)
    return F[:n, :n], F[:n, n:]


def _propagate(M, G, x0, omega, h):
    """Nodes ``x(i h)`` of ``x' = M x + G omega`` under a piecewise-constant control."""
    Phi, Psi = _cell_maps(M, G, h)
    X = np.empty((omega.shape[0] + 1, len(x0)))
    X[0] = x0
    for i, w in enumerate(omega):
        X[i + 1] = Phi @ X[i] + Psi @ w
    return X


def _curve_sigma(spec: OperatorSpec, sigma=None) -> np.ndarray:
    s = spec.sigma if sigma is None else np.asarray(sigma, dtype=float)
    return s.reshape(spec.N, -1)


@dataclass(frozen=True)
class AdmissibleCurve:
    """An admissible curve from ``start`` with its sampled trajectory.

    ``points[i] = gamma(i h)`` as rows ``(x, t)``.
    """

    spec: OperatorSpec
    start: GroupPoint
    control: ControlGrid
    points: np.ndarray
    sigma: np.ndarray

    @property
    def T(self) -> float:
        return self.control.T

    @property
    def end(self) -> GroupPoint:
        return GroupPoint.from_array(self.points[-1])

    def point_at(self, s: float) -> GroupPoint:
        """Exact ``gamma(s)`` for ``0 <= s <= T``."""
        c = self.control
        s = min(max(float(s), 0.0), c.T)
        i = min(int(s / c.h), c.steps - 1)
        tau = s - i * c.h
        x = self.points[i, :-1]
        if tau > 0:
            Phi, Psi = _cell_maps(self.spec.B, self.sigma / SQRT2, tau)
            x = Phi @ x + Psi @ c.omega[i]
        return GroupPoint(x, self.start.t - s)

    def dense(self, per_cell: int = 4) -> np.ndarray:
        """Trajectory sampled ``per_cell`` times per control cell, rows ``(s, x, t)``."""
        c = self.control
        rows = []
        for i in range(c.steps):
            for k in range(per_cell):
                s = (i + k / per_cell) * c.h
                rows.append(np.concatenate([[s], self.point_at(s).as_array()]))
        rows.append(np.concatenate([[c.T], self.points[-1]]))
        return np.array(rows)


def integrate_admissible(spec: OperatorSpec, start, control: ControlGrid, sigma=None) -> AdmissibleCurve:
    """Integrate ``x' = B x + sigma omega / sqrt 2``, ``t' = -1`` cell by cell.

    ``sigma`` defaults to ``spec.sigma``; its columns define the fields ``X_k``.
    """
    start = as_point(start)
    sig = _curve_sigma(spec, sigma)
    if control.omega.shape[1] != sig.shape[1]:
        raise EmptyControl(f"control has {control.omega.shape[1]} components, sigma has {sig.shape[1]} columns")
    X = _propagate(spec.B, sig / SQRT2, start.x, control.omega, control.h)
    t = start.t - control.h * np.arange(control.steps + 1)
    t[-1] = start.t - control.T
    pts = np.column_stack([X, t])
    pts.setflags(write=False)
    sig = np.array(sig)
    sig.setflags(write=False)
    return AdmissibleCurve(spec, start, control, pts, sig)


# --- minimum energy ----------------------------------------------------------


def _reverse_maps(Phi, Psi, steps):
    """Stack ``P_i = Phi^{steps-1-i} Psi`` for ``i = 0..steps-1`` by doubling."""
    arr = Psi[None, :, :]
    power = Phi
    while arr.shape[0] < steps:
        arr = np.concatenate([arr, np.einsum("ij,kjl->kil", power, arr)], axis=0)
        power = power @ power
    return arr[:steps][::-1]


def _min_energy_fixed(M, G, x0, x1, T, steps):
    h = T / steps
    Phi, Psi = _cell_maps(M, G, h)
    P = _reverse_maps(Phi, Psi, steps)
    ET = matrix_exponential(T * M)
    d = x1 - ET @ x0
    S = np.einsum("kil,kjl->ij", P, P)
    S = 0.5 * (S + S.T)
    lam = scipy.linalg.solve(S, d, assume_a="pos")
    omega = np.einsum("kil,i->kl", P, lam)
    return omega, float(h * d @ lam)


def min_energy_piecewise(M, G, x0, x1, T: float, steps: int | None = None, rtol: float = 1e-9,
                         max_steps: int = 1 << 20):
    """Least-energy piecewise-constant control steering ``x' = Mx + G omega`` from ``x0`` to ``x1``.

    On a fixed grid the optimum is exact: ``omega_i = P_i^T S^{-1} d`` with
    ``P_i`` the cell-to-endpoint maps, ``S = sum_i P_i P_i^T`` and
    ``d = x1 - exp(TM) x0``; its energy ``h d^T S^{-1} d`` decreases to the
    continuous optimum at rate ``h^2``.  Without ``steps`` the grid is doubled
    from 64 cells until the Richardson estimate of the remaining gap falls
    below ``rtol`` relative.
    """
    M = np.asarray(M, dtype=float)
    G = np.asarray(G, dtype=float).reshape(M.shape[0], -1)
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    if steps is not None:
        return _min_energy_fixed(M, G, x0, x1, T, int(steps))
    n = 64
    om, e = _min_energy_fixed(M, G, x0, x1, T, n)
    while n < max_steps:
        n *= 2
        om2, e2 = _min_energy_fixed(M, G, x0, x1, T, n)
        gap = abs(e - e2) / 3.0
        om, e = om2, e2
        if gap <= rtol * abs(e2) or e2 <= 1e-300:
            break
    return om, e


def _require_controllable(spec: OperatorSpec, sigma):
    if not kalman_rank(sigma, spec.B)[1]:
        raise NotControllable("Kalman rank condition fails")


def reach_min_energy(spec: OperatorSpec, x0, t0: float, x1, t1: float, steps: int | None = None) -> ControlGrid:
    """Minimum-energy control of ``x' = -B x + sigma omega`` from ``(x0, t0)`` to ``(x1, t1)``.

    Raises
    ------
    BadTimeOrder
        Unless ``t0 < t1``.
    NotControllable
        If the Kalman condition fails.
    """
    if not t0 < t1:
        raise BadTimeOrder(f"need t0 < t1, got {t0} and {t1}")
    _require_controllable(spec, spec.sigma)
    omega, _ = min_energy_piecewise(-spec.B, spec.sigma, x0, x1, t1 - t0, steps)
    return ControlGrid(t1 - t0, omega)


def forward_endpoint(spec: OperatorSpec, x0, control: ControlGrid) -> np.ndarray:
    """Endpoint of ``x' = -B x + sigma omega`` under ``control``."""
    return _propagate(-spec.B, spec.sigma, np.asarray(x0, dtype=float), control.omega, control.h)[-1]


def optimal_cost(spec: OperatorSpec, x0, x1, tau: float, convention: str = "2C") -> float:
    """``<G^{-1} d, d>`` with ``d = x1 - E(tau) x0``.

    ``convention="2C"`` (default) uses the controllability Gramian
    ``G = 2 C(tau)`` of ``x' = -B x + sigma omega``, which equals the least
    energy ``int |omega|^2``.  ``convention="C"`` uses ``G = C(tau)``; this
    is also the least energy of an admissible curve spanning a time lag ``tau``.
    """
    if not tau > 0:
        raise BadTimeOrder(f"need tau > 0, got {tau}")
    _require_controllable(spec, spec.sigma)
    b = gramian(spec, tau)
    d = np.asarray(x1, dtype=float) - b.E @ np.asarray(x0, dtype=float)
    q = float(b.quad(d))
    if convention == "2C":
        return 0.5 * q
    if convention == "C":
        return q
    raise ValueError("convention must be '2C' or 'C'")


def min_energy_curve(spec: OperatorSpec, z0, z, steps: int | None = None, sigma=None) -> AdmissibleCurve:
    """Least-energy admissible curve from ``z0`` down to ``z`` (requires ``t < t0``)."""
    z0, z = as_point(z0), as_point(z)
    T = z0.t - z.t
    if not T > 0:
        raise BadTimeOrder("the target must lie strictly below the start in time")
    sig = _curve_sigma(spec, sigma)
    _require_controllable(spec, sig)
    omega, _ = min_energy_piecewise(spec.B, sig / SQRT2, z0.x, z.x, T, steps)
    return integrate_admissible(spec, z0, ControlGrid(T, omega), sig)


# --- domains and control classes ---------------------------------------------


@dataclass(frozen=True)
class Domain:
    """Union of open axis-aligned boxes in ``(x, t)``; rows of ``lo``/``hi`` are boxes."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_2d(np.array(self.lo, dtype=float))
        hi = np.atleast_2d(np.array(self.hi, dtype=float))
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ValueError("each box needs lo < hi componentwise")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.shape[1]

    @property
    def bounds(self):
        return self.lo.min(axis=0), self.hi.max(axis=0)

    def contains_arrays(self, P) -> np.ndarray:
        P = np.atleast_2d(np.asarray(P, dtype=float))
        inside = np.zeros(P.shape[0], bool)
        for lo, hi in zip(self.lo, self.hi):
            inside |= np.all((P > lo) & (P < hi), axis=1)
        return inside

    def closure_contains_arrays(self, P) -> np.ndarray:
        P = np.atleast_2d(np.asarray(P, dtype=float))
        inside = np.zeros(P.shape[0], bool)
        for lo, hi in zip(self.lo, self.hi):
            inside |= np.all((P >= lo) & (P <= hi), axis=1)
        return inside

    def contains(self, z) -> bool:
        return bool(self.contains_arrays(as_point(z).as_array())[0])

    def closure_contains(self, z) -> bool:
        return bool(self.closure_contains_arrays(as_point(z).as_array())[0])

    def boundary_distance(self, P) -> np.ndarray:
        """Sup-norm distance to the complement (zero outside)."""
        P = np.atleast_2d(np.asarray(P, dtype=float))
        best = np.zeros(P.shape[0])
        for lo, hi in zip(self.lo, self.hi):
            d = np.minimum(P - lo, hi - P).min(axis=1)
            best = np.maximum(best, np.clip(d, 0.0, None))
        return best

    def to_dict(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}


def unit_box(N: int) -> Domain:
    """``]-1, 1[^N x ]-1, 0[``."""
    return Domain(np.append(-np.ones(N), -1.0), np.append(np.ones(N), 0.0))


@dataclass(frozen=True)
class L2Budget:
    """``int |omega|^2 <= h``."""

    h: float


@dataclass(frozen=True)
class Bounded:
    """``|omega(s)| <= M`` (Euclidean norm) for every ``s``."""

    M: float


@dataclass(frozen=True)
class Unbounded:
    """Integrable controls without bound; diffusive coordinates may jump instantly."""


def parse_control_class(text: str):
    """``"bounded:1"``, ``"l2:0.5"`` or ``"unbounded"``."""
    kind, _, val = text.partition(":")
    kind = kind.strip().lower()
    if kind in ("bounded", "linf"):
        return Bounded(float(val or 1.0))
    if kind in ("l2", "l2budget", "budget"):
        return L2Budget(float(val or 1.0))
    if kind == "unbounded":
        return Unbounded()
    raise ValueError(f"unknown control class {text!r}")


def _control_set(m: int, cls, dt: float) -> np.ndarray:
    """Finite control alphabet used for one grid step."""
    if isinstance(cls, Bounded):
        mags = [cls.M, cls.M / 2]
    elif isinstance(cls, L2Budget):
        top = math.sqrt(cls.h / dt)
        mags = [top, top / 2, top / 4, top / 8]
    else:
        mags = []
    rows = [np.zeros(m)]
    for k in range(m):
        for a in mags:
            for sgn in (1.0, -1.0):
                e = np.zeros(m)
                e[k] = sgn * a
                rows.append(e)
    return np.array(rows)


# --- attainable sets ---------------------------------------------------------


@dataclass
class _Layer:
    X: np.ndarray
    parent: np.ndarray
    control: np.ndarray
    energy: np.ndarray
    jump: np.ndarray
    occ: np.ndarray


@dataclass
class AttainableGrid:
    """Layered reachability over a uniform space-time grid.

    Layer ``l`` holds truly reachable representative points at time
    ``t0 - l dt``; ``occ[l]`` marks spatial cells containing one of them.
    """

    spec: OperatorSpec
    z0: GroupPoint
    domain: Domain
    cls: object
    resolution: int
    lo: np.ndarray
    width: np.ndarray
    dt: float
    layers: list
    sigma: np.ndarray

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def layer_time(self, l: int) -> float:
        return self.z0.t - l * self.dt

    def cell_of(self, x) -> tuple:
        idx = np.floor((np.asarray(x, dtype=float) - self.lo) / self.width).astype(int)
        return tuple(np.clip(idx, 0, self.resolution - 1))

    def contains(self, z, dilate: int = 1) -> bool:
        """Whether the cell of ``z`` is occupied in a layer adjacent to its time.

        ``dilate`` widens the spatial test by that many neighbouring cells;
        the default of one cell absorbs the finite control alphabet.

        Raises
        ------
        PointOutsideDomain
            If ``z`` is outside the domain closure.
        """
        z = as_point(z)
        if not self.domain.closure_contains(z):
            raise PointOutsideDomain(f"{z} lies outside the domain")
        if z == self.z0:
            return True
        lam = (self.z0.t - z.t) / self.dt
        if lam < -1e-12:
            return False
        ls = {int(np.floor(lam + 1e-9)), int(np.ceil(lam - 1e-9))}
        cell = np.array(self.cell_of(z.x))
        for l in ls:
            if l <= 0:
                # layer 0 holds only z0; the first step covers (0, dt]
                l = 1 if lam > 0 else 0
            if l >= self.n_layers:
                continue
            occ = self.layers[l].occ
            if dilate == 0:
                if occ[tuple(cell)]:
                    return True
                continue
            sl = tuple(slice(max(c - dilate, 0), c + dilate + 1) for c in cell)
            if np.any(occ[sl]):
                return True
        return False

    def occupied_points(self) -> np.ndarray:
        """Rows ``(x_center, t)`` of every occupied cell in every layer."""
        rows = []
        for l, layer in enumerate(self.layers):
            idx = np.argwhere(layer.occ)
            if idx.size:
                centers = self.lo + (idx + 0.5) * self.width
                rows.append(np.column_stack([centers, np.full(len(idx), self.layer_time(l))]))
        if not rows:
            return np.zeros((0, self.spec.N + 1))
        return np.concatenate(rows)

    def representatives(self, l: int) -> np.ndarray:
        return self.layers[l].X

    def witness(self, z) -> AdmissibleCurve:
        """Grid curve from ``z0`` to the representative in ``z``'s cell.

        Raises
        ------
        TargetNotAttainable
            If the cell is unoccupied or its path uses an instantaneous jump.
        """
        z = as_point(z)
        lam = (self.z0.t - z.t) / self.dt
        l = int(round(lam))
        if l < 1 or l >= self.n_layers:
            raise TargetNotAttainable("target time outside the grid layers")
        layer = self.layers[l]
        cells = np.floor((layer.X - self.lo) / self.width).astype(int)
        want = np.array(self.cell_of(z.x))
        hit = np.nonzero(np.all(cells == want, axis=1))[0]
        if hit.size == 0:
            raise TargetNotAttainable(f"cell of {z} is not reached")
        i = int(hit[np.argmin(layer.energy[hit])])
        controls = []
        for k in range(l, 0, -1):
            L = self.layers[k]
            if L.jump[i]:
                raise TargetNotAttainable("witness path contains an instantaneous jump")
            controls.append(L.control[i])
            i = int(L.parent[i])
        omega = np.array(controls[::-1])
        return integrate_admissible(self.spec, self.z0, ControlGrid(l * self.dt, omega), self.sigma)

    def to_dict(self) -> dict:
        return {
            "z0": self.z0.as_array().tolist(),
            "resolution": self.resolution,
            "lo": self.lo.tolist(),
            "width": self.width.tolist(),
            "dt": self.dt,
            "layers": [
                {"t": self.layer_time(l), "cells": np.argwhere(L.occ).tolist()} for l, L in enumerate(self.layers)
            ],
        }


def _dedupe(keys: np.ndarray, score: np.ndarray) -> np.ndarray:
    """Indices of the lowest-score row for each distinct key row."""
    order = np.lexsort((score,) + tuple(keys.T[::-1]))
    k = keys[order]
    first = np.ones(len(order), bool)
    first[1:] = np.any(k[1:] != k[:-1], axis=1)
    return order[first]


def attainable_grid(spec: OperatorSpec, z0, domain: Domain, cls, resolution: int = 64, sigma=None,
                    check_points: int = 4) -> AttainableGrid:
    """Propagate reachable representatives layer by layer.

    Space uses ``resolution`` equal cells per axis of the domain's bounding
    box and time uses layers ``dt = (t0 - t_min) / resolution`` apart when
    ``z0`` sits at the top of the box.  Each representative is advanced by
    ``dt`` under every control of a finite alphabet; steps leaving the open
    domain at any of ``check_points`` interior instants are dropped.  One
    representative per half-width sub-cell survives, the one of least energy.
    Under :class:`Unbounded` the diffusive coordinates may also jump to any
    sub-cell value before a step.
    """
    z0 = as_point(z0)
    if not domain.closure_contains(z0):
        raise PointOutsideDomain(f"{z0} lies outside the domain")
    N = spec.N
    sig = _curve_sigma(spec, sigma)
    m = sig.shape[1]
    lo_b, hi_b = domain.bounds
    lo, hi = lo_b[:N], hi_b[:N]
    width = (hi - lo) / resolution
    span_t = z0.t - lo_b[N]
    dt = (hi_b[N] - lo_b[N]) / resolution
    n_layers = int(np.floor(span_t / dt + 1e-9)) + 1
    U = _control_set(m, cls, dt)
    G = sig / SQRT2
    Phi, Psi = _cell_maps(spec.B, G, dt)
    sub = [_cell_maps(spec.B, G, dt * (k + 1) / (check_points + 1)) for k in range(check_points)]
    budget = cls.h if isinstance(cls, L2Budget) else np.inf
    m0 = spec.m[0] if spec.m is not None else N
    diff_vals = lo[:m0, None] + (np.arange(2 * resolution) + 0.5)[None, :] * (width[:m0, None] / 2)

    occ0 = np.zeros((resolution,) * N, bool)
    layers = [_Layer(z0.x[None, :].copy(), np.array([-1]), np.zeros((1, m)), np.zeros(1), np.zeros(1, bool), occ0)]
    cell0 = np.clip(np.floor((z0.x - lo) / width).astype(int), 0, resolution - 1)
    occ0[tuple(cell0)] = True

    for l in range(1, n_layers):
        prev = layers[-1]
        Xp, Ep = prev.X, prev.energy
        par = np.arange(len(Xp))
        jump = np.zeros(len(Xp), bool)
        if isinstance(cls, Unbounded):
            keys = np.floor((Xp[:, m0:] - lo[m0:]) / (width[m0:] / 2)).astype(int)
            keep = _dedupe(keys, Ep) if N > m0 else np.array([0])
            grids = np.stack(np.meshgrid(*diff_vals, indexing="ij"), axis=-1).reshape(-1, m0)
            Xj = np.repeat(Xp[keep], len(grids), axis=0)
            Xj[:, :m0] = np.tile(grids, (len(keep), 1))
            Xp = np.concatenate([Xp, Xj])
            Ep = np.concatenate([Ep, np.zeros(len(Xj))])
            par = np.concatenate([par, np.repeat(keep, len(grids))])
            jump = np.concatenate([jump, np.ones(len(Xj), bool)])
        t_new = z0.t - l * dt
        # candidates: every representative under every control
        cand = (Xp @ Phi.T)[:, None, :] + (U @ Psi.T)[None, :, :]
        cand = cand.reshape(-1, N)
        cpar = np.repeat(par, len(U))
        cjump = np.repeat(jump, len(U))
        cctl = np.tile(U, (len(Xp), 1))
        cE = np.repeat(Ep, len(U)) + np.sum(cctl**2, axis=1) * dt
        ok = cE <= budget * (1 + 1e-12)
        ok &= domain.contains_arrays(np.column_stack([cand, np.full(len(cand), t_new)]))
        Xrep = np.repeat(Xp, len(U), axis=0)
        for k, (Ph, Ps) in enumerate(sub):
            tk = z0.t - (l - 1) * dt - dt * (k + 1) / (check_points + 1)
            mid = Xrep @ Ph.T + cctl @ Ps.T
            ok &= domain.contains_arrays(np.column_stack([mid, np.full(len(mid), tk)]))
        if not np.any(ok):
            break
        cand, cpar, cjump, cctl, cE = cand[ok], cpar[ok], cjump[ok], cctl[ok], cE[ok]
        keys = np.floor((cand - lo) / (width / 2)).astype(int)
        keep = _dedupe(keys, cE)
        Xn = cand[keep]
        occ = np.zeros((resolution,) * N, bool)
        cells = np.clip(np.floor((Xn - lo) / width).astype(int), 0, resolution - 1)
        occ[tuple(cells.T)] = True
        layers.append(_Layer(Xn, cpar[keep], cctl[keep], cE[keep], cjump[keep], occ))
    return AttainableGrid(spec, z0, domain, cls, resolution, lo, width, dt, layers, sig)


_GRID_CACHE: dict = {}


def _cached_grid(spec, z0, domain, cls, resolution):
    key = (spec.A.tobytes(), spec.B.tobytes(), spec.sigma.tobytes(), as_point(z0).as_array().tobytes(),
           domain.lo.tobytes(), domain.hi.tobytes(), repr(cls), resolution)
    g = _GRID_CACHE.get(key)
    if g is None:
        if len(_GRID_CACHE) > 16:
            _GRID_CACHE.clear()
        g = attainable_grid(spec, z0, domain, cls, resolution)
        _GRID_CACHE[key] = g
    return g


def attainable_contains(spec: OperatorSpec, z0, z, domain: Domain, cls, resolution: int = 64) -> bool:
    """Grid membership of ``z`` in the attainable set of ``z0`` within ``domain``.

    Raises
    ------
    PointOutsideDomain
        If ``z`` or ``z0`` is outside the domain closure.
    """
    if not domain.closure_contains(z):
        raise PointOutsideDomain(f"{as_point(z)} lies outside the domain")
    return _cached_grid(spec, z0, domain, cls, resolution).contains(z)


def _random_control(rng, cls, steps: int, m: int, T: float) -> np.ndarray:
    if isinstance(cls, Bounded):
        d = rng.standard_normal((steps, m))
        d /= np.maximum(np.linalg.norm(d, axis=1, keepdims=True), 1e-300)
        return d * (cls.M * rng.random((steps, 1)) ** (1.0 / m))
    om = rng.standard_normal((steps, m))
    if isinstance(cls, L2Budget):
        e = np.sum(om**2) * T / steps
        return om * np.sqrt(cls.h * rng.random() / e)
    return om * np.exp(rng.uniform(-1.0, 3.0))


def attainable_sample(spec: OperatorSpec, z0, domain: Domain, cls, n: int, seed: int, steps: int = 16,
                      check_per_cell: int = 4, max_tries: int | None = None, sigma=None) -> np.ndarray:
    """Endpoints of random admissible curves that stay inside ``domain``.

    Each curve has a horizon uniform on ``(0, t0 - t_min)`` and a random
    piecewise-constant control from ``cls`` on ``steps`` cells; curves that
    leave the open domain at any checked instant are rejected.  Curve ``i``
    draws from child ``i`` of ``SeedSequence(seed)``.  Returns rows ``(x, t)``.
    """
    z0 = as_point(z0)
    if not domain.closure_contains(z0):
        raise PointOutsideDomain(f"{z0} lies outside the domain")
    sig = _curve_sigma(spec, sigma)
    m = sig.shape[1]
    span = z0.t - domain.bounds[0][-1]
    max_tries = 50 * n if max_tries is None else max_tries
    kids = np.random.SeedSequence(seed).spawn(max_tries)
    out = []
    for ss in kids:
        if len(out) >= n:
            break
        rng = np.random.Generator(np.random.Philox(ss))
        T = span * (1.0 - rng.random())
        ctl = ControlGrid(T, _random_control(rng, cls, steps, m, T))
        curve = integrate_admissible(spec, z0, ctl, sig)
        pts = curve.dense(check_per_cell)[1:, 1:]
        if np.all(domain.contains_arrays(pts)):
            out.append(curve.points[-1])
    return np.array(out).reshape(-1, spec.N + 1)


def reference_hausdorff(A: np.ndarray, B: np.ndarray, scale=None) -> float:
    """Hausdorff distance between two point sets, optionally after dividing columns by ``scale``."""
    from scipy.spatial import cKDTree

    if len(A) == 0 or len(B) == 0:
        return np.inf
    if scale is not None:
        A = A / scale
        B = B / scale
    da, _ = cKDTree(B).query(A)
    db, _ = cKDTree(A).query(B)
    return float(max(da.max(), db.max()))


def grid_cell_centers(grid: AttainableGrid, predicate) -> np.ndarray:
    """Cell centers ``(x, t)`` on every layer below ``z0`` where ``predicate(X, t)`` holds."""
    N = grid.spec.N
    idx = np.stack(np.meshgrid(*[np.arange(grid.resolution)] * N, indexing="ij"), axis=-1).reshape(-1, N)
    centers = grid.lo + (idx + 0.5) * grid.width
    n_all = int(np.floor((grid.z0.t - grid.domain.bounds[0][-1]) / grid.dt + 1e-9)) + 1
    rows = []
    for l in range(1, n_all):
        t = grid.layer_time(l)
        keep = predicate(centers, t)
        rows.append(np.column_stack([centers[keep], np.full(int(keep.sum()), t)]))
    if not rows:
        return np.zeros((0, N + 1))
    return np.concatenate(rows)


__all__ = [
    "AdmissibleCurve", "AttainableGrid", "Bounded", "ControlGrid", "Domain", "L2Budget", "Unbounded",
    "attainable_contains", "attainable_grid", "attainable_sample", "cumulative_energy", "forward_endpoint", "grid_cell_centers",
    "integrate_admissible", "min_energy_curve", "min_energy_piecewise", "optimal_cost", "parse_control_class",
    "reach_min_energy", "reference_hausdorff", "unit_box",
]
