"""Group law, homogeneous norms, quasi-distance and cylinders.

Points compose as ``(x, t) o (xi, tau) = (xi + E(tau) x, t + tau)`` with
``E(t) = exp(-tB)``; the identity is the origin and
``(x, t)^{-1} = (-E(-t) x, -t)``.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import DegenerateSample, NonPositiveRadius, ZeroPoint
from .gramian import propagator
from .operator import DilationGroup, OperatorSpec, dilate_arrays
from .point import GroupPoint, as_point


def compose(z, w, spec: OperatorSpec) -> GroupPoint:
    """``z o w``."""
    z, w = as_point(z), as_point(w)
    return GroupPoint(w.x + propagator(spec.B, w.t) @ z.x, z.t + w.t)


def inverse(z, spec: OperatorSpec) -> GroupPoint:
    z = as_point(z)
    return GroupPoint(-propagator(spec.B, -z.t) @ z.x, -z.t)


def left_translate_inverse(center, X, T, spec: OperatorSpec):
    """Spatial/time parts of ``center^{-1} o (X_i, T_i)`` for stacked points.

    ``X`` has shape ``(n, N)`` and ``T`` shape ``(n,)``; equals
    ``(X_i - E(T_i - t0) x0, T_i - t0)``.
    """
    c = as_point(center)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    T = np.atleast_1d(np.asarray(T, dtype=float))
    dT = T - c.t
    out = np.empty_like(X)
    uniq, idx = np.unique(dT, return_inverse=True)
    for k, d in enumerate(uniq):
        sel = idx == k
        out[sel] = X[sel] - propagator(spec.B, d) @ c.x
    return out, dT


def norm_additive(z, group: DilationGroup) -> float:
    """``|t|^{1/2} + sum_j |x_j|^{1/q_j}``; homogeneous of degree one."""
    z = as_point(z)
    q = np.asarray(group.q, dtype=float)
    return float(np.sqrt(abs(z.t)) + np.sum(np.abs(z.x) ** (1.0 / q)))


def norm_additive_arrays(X, T, group: DilationGroup) -> np.ndarray:
    q = np.asarray(group.q, dtype=float)
    return np.sqrt(np.abs(T)) + np.sum(np.abs(X) ** (1.0 / q), axis=-1)


def norm_implicit(z, group: DilationGroup, rtol: float = 1e-12) -> float:
    """Positive root ``r`` of ``sum_j x_j^2 / r^{2 q_j} + t^2 / r^4 = 1``.

    The left side is strictly decreasing in ``r``.  Each term equals
    ``(rho_j / r)^{2 q_j}`` with ``rho_j = |x_j|^{1/q_j}``, so the root lies in
    ``[max rho, sqrt(n) max rho]`` where ``n`` counts nonzero terms.

    Raises
    ------
    ZeroPoint
        If ``z`` is the origin.
    """
    z = as_point(z)
    q = np.asarray(group.q, dtype=float)
    rho = np.append(np.abs(z.x) ** (1.0 / q), np.sqrt(abs(z.t)))
    expo = np.append(2.0 * q, 4.0)
    nz = rho > 0
    if not np.any(nz):
        raise ZeroPoint("the implicit norm is defined away from the origin")
    rho, expo = rho[nz], expo[nz]
    lo = float(np.max(rho))
    if rho.size == 1:
        return lo
    hi = lo * np.sqrt(rho.size)

    def f(logr):
        return float(np.sum(np.exp(expo * (np.log(rho) - logr)))) - 1.0

    return float(np.exp(brentq(f, np.log(lo), np.log(hi), xtol=rtol * 0.1, rtol=4 * np.finfo(float).eps)))


def distance(z, w, spec: OperatorSpec, group: DilationGroup) -> float:
    """Quasi-distance ``d(z, w) = || z^{-1} o w ||``."""
    return norm_additive(compose(inverse(z, spec), w, spec), group)


class CylinderShape(enum.Enum):
    UNIT = "Q"
    PLUS = "Q+"
    MINUS = "Q-"
    FULL = "Qtilde"
    SLICE = "K-"


@dataclass(frozen=True)
class CylinderParams:
    """``0 < alpha < beta < gamma < 1`` and ``0 < delta < 1``."""

    alpha: float = 0.25
    beta: float = 0.5
    gamma: float = 0.75
    delta: float = 0.5

    def __post_init__(self):
        if not (0 < self.alpha < self.beta < self.gamma < 1):
            raise ValueError("need 0 < alpha < beta < gamma < 1")
        if not (0 < self.delta < 1):
            raise ValueError("need 0 < delta < 1")

    @property
    def slice_time(self) -> float:
        return -(self.beta + self.gamma) / 2.0


SLICE_TOL = 1e-9


def unit_shape_contains(X, T, shape: CylinderShape, group: DilationGroup, params: CylinderParams = CylinderParams()):
    """Membership of unit-scale points ``(X_i, T_i)`` in the reference shape."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    T = np.atleast_1d(np.asarray(T, dtype=float))
    if shape in (CylinderShape.UNIT, CylinderShape.FULL):
        spatial = np.all(np.abs(X) < 1.0, axis=1)
    else:
        spatial = np.all(np.abs(X) < group.spatial(params.delta), axis=1)
    if shape is CylinderShape.UNIT:
        tm = (T > -1.0) & (T < 0.0)
    elif shape is CylinderShape.FULL:
        tm = np.abs(T) < 1.0
    elif shape is CylinderShape.PLUS:
        tm = (T > -params.alpha) & (T < 0.0)
    elif shape is CylinderShape.MINUS:
        tm = (T > -params.gamma) & (T < -params.beta)
    else:
        tm = np.abs(T - params.slice_time) <= SLICE_TOL
    return spatial & tm


def cylinder_contains(z, center, r: float, shape: CylinderShape, spec: OperatorSpec, group: DilationGroup,
                      params: CylinderParams = CylinderParams()) -> bool:
    """Whether ``z`` lies in ``center o D(r) S`` for the reference shape ``S``.

    The slice ``K-`` uses the time tolerance ``1e-9 r^2``.
    """
    if not r > 0:
        raise NonPositiveRadius(f"radius must be positive, got {r}")
    z = as_point(z)
    X, T = left_translate_inverse(center, z.x[None, :], np.array([z.t]), spec)
    Xu, Tu = dilate_arrays(X, T, 1.0 / r, group)
    return bool(unit_shape_contains(Xu, Tu, shape, group, params)[0])


def cylinder_corners(center, r: float, spec: OperatorSpec, group: DilationGroup, shape: CylinderShape = CylinderShape.FULL,
                     params: CylinderParams = CylinderParams()) -> np.ndarray:
    """Vertices ``center o D(r)(v)`` of the closed reference box, as rows ``(x, t)``."""
    c = as_point(center)
    N = group.N
    half = np.ones(N) if shape in (CylinderShape.UNIT, CylinderShape.FULL) else group.spatial(params.delta)
    tlo, thi = {
        CylinderShape.UNIT: (-1.0, 0.0),
        CylinderShape.FULL: (-1.0, 1.0),
        CylinderShape.PLUS: (-params.alpha, 0.0),
        CylinderShape.MINUS: (-params.gamma, -params.beta),
        CylinderShape.SLICE: (params.slice_time, params.slice_time),
    }[shape]
    rows = []
    for signs in itertools.product((-1.0, 1.0), repeat=N):
        for tu in (tlo, thi):
            xu = np.asarray(signs) * half
            xs, ts = dilate_arrays(xu, tu, r, group)
            p = compose(c, GroupPoint(xs, float(ts)), spec)
            rows.append(p.as_array())
    return np.array(rows)


def holder_seminorm(samples, alpha: float, spec: OperatorSpec, group: DilationGroup) -> float:
    """``max |f(z) - f(w)| / d(z, w)^alpha`` over all ordered sample pairs.

    Both orders are used since ``d`` is only quasi-symmetric.

    Raises
    ------
    DegenerateSample
        Fewer than two samples, a repeated point, or ``alpha`` outside (0, 1].
    """
    if not 0 < alpha <= 1:
        raise DegenerateSample("alpha must lie in (0, 1]")
    pts = [as_point(z) for z, _ in samples]
    vals = np.array([float(v) for _, v in samples])
    if len(pts) < 2:
        raise DegenerateSample("need at least two samples")
    best = 0.0
    for i, j in itertools.permutations(range(len(pts)), 2):
        d = distance(pts[i], pts[j], spec, group)
        if d == 0.0:
            raise DegenerateSample("repeated sample point")
        best = max(best, abs(vals[i] - vals[j]) / d**alpha)
    return best


def quasi_triangle_constant(points, spec: OperatorSpec, group: DilationGroup) -> float:
    """Empirical ``C`` with ``d(z, w) <= C (d(z, v) + d(v, w))`` over all triples."""
    pts = [as_point(p) for p in points]
    n = len(pts)
    D = np.zeros((n, n))
    for i in range(n):
        inv = inverse(pts[i], spec)
        for j in range(n):
            if i != j:
                D[i, j] = norm_additive(compose(inv, pts[j], spec), group)
    best = 0.0
    for i in range(n):
        for j in range(n):
            if i == j or D[i, j] == 0:
                continue
            denom = D[i, :] + D[:, j]
            mask = np.ones(n, bool)
            mask[[i, j]] = False
            if np.any(mask):
                best = max(best, float(np.max(D[i, j] / denom[mask])))
    return max(best, 1.0)


def quasi_symmetry_constant(points, spec: OperatorSpec, group: DilationGroup) -> float:
    """Empirical ``C`` with ``d(w, z) <= C d(z, w)`` over all pairs."""
    pts = [as_point(p) for p in points]
    best = 1.0
    for a, b in itertools.combinations(pts, 2):
        d1, d2 = distance(a, b, spec, group), distance(b, a, spec, group)
        if min(d1, d2) > 0:
            best = max(best, d1 / d2, d2 / d1)
    return best
