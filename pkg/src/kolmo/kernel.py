"""Gaussian fundamental solutions and their verification routines.

``gamma(spec, z, zeta)`` is the fundamental solution with living point
``z = (x, t)`` and pole ``zeta = (xi, tau)``:

    Gamma = (4 pi)^{-N/2} det C(s)^{-1/2} exp(-<C(s)^{-1} w, w> / 4 - s tr B),

with ``s = t - tau`` and ``w = x - E(s) xi``; it vanishes for ``s <= 0``.  As a
function of ``(x, t)`` it solves ``Tr(A D^2 u) + <Bx, Du> - u_t = 0``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.special import gammaln

from .errors import BadTimeOrder, KolmoError, NonPositiveRadius, NonPositiveTime, PoleEvaluation, PoleInsideDomain
from .gramian import gramian
from .operator import OperatorSpec, dilation_exponents, replace_A
from .point import GroupPoint, as_point

LOG_4PI = np.log(4.0 * np.pi)


@dataclass(frozen=True)
class KernelValue:
    value: float
    logValue: float


def _is_homogeneous(spec: OperatorSpec) -> bool:
    if spec.m is None:
        return False
    m0 = spec.m[0]
    outside = spec.A.copy()
    outside[:m0, :m0] = 0.0
    return not np.any(outside) and spec.is_dilation_invariant()


class _Evaluator:
    """Batched access to ``E(s)``, ``C(s)^{-1}`` and ``log det C(s)``.

    Dilation-invariant operators use ``E(s) = D0(sqrt s) E(1) D0(1/sqrt s)``
    and ``C(s) = D0(sqrt s) C(1) D0(sqrt s)``, which vectorizes over ``s``.
    Other operators fall back to one cached Gramian per distinct ``s``.
    """

    def __init__(self, spec: OperatorSpec):
        self.spec = spec
        self.N = spec.N
        self.trB = spec.trace_B
        self.homogeneous = _is_homogeneous(spec)
        if self.homogeneous:
            self.group = dilation_exponents(spec)
            self.q = np.asarray(self.group.q, dtype=float)
            self.b1 = gramian(spec, 1.0)
            self.Cinv1 = self.b1.Cinv

    def _scale(self, S):
        return np.exp(0.5 * np.log(S)[:, None] * self.q[None, :])

    def whiten(self, W, S):
        """Return ``quad = <C(s)^{-1} w, w>`` and ``log det C(s)`` per row."""
        if self.homogeneous:
            V = W / self._scale(S)
            quad = np.einsum("ij,jk,ik->i", V, self.Cinv1, V)
            return quad, self.b1.logDetC + self.group.Q * np.log(S)
        quad = np.empty(len(S))
        logdet = np.empty(len(S))
        for s, sel in _groups(S):
            b = gramian(self.spec, s)
            quad[sel] = b.quad(W[sel])
            logdet[sel] = b.logDetC
        return quad, logdet

    def apply_E(self, S, X):
        """Rows ``E(s_i) X_i``."""
        if self.homogeneous:
            sc = self._scale(S)
            return ((X / sc) @ self.b1.E.T) * sc
        out = np.empty_like(X)
        for s, sel in _groups(S):
            out[sel] = X[sel] @ gramian(self.spec, s, require_positive=False).E.T
        return out

    def solve(self, S, W):
        """Rows ``C(s_i)^{-1} w_i``."""
        if self.homogeneous:
            sc = self._scale(S)
            return ((W / sc) @ self.Cinv1) / sc
        out = np.empty_like(W)
        for s, sel in _groups(S):
            out[sel] = gramian(self.spec, s).solve(W[sel])
        return out

    def apply_Et(self, S, Y):
        """Rows ``E(s_i)^T Y_i``."""
        if self.homogeneous:
            sc = self._scale(S)
            return ((Y * sc) @ self.b1.E) / sc
        out = np.empty_like(Y)
        for s, sel in _groups(S):
            out[sel] = Y[sel] @ gramian(self.spec, s, require_positive=False).E
        return out

    def log_gamma(self, W, S):
        """``log Gamma(w_i, s_i)``; ``-inf`` where ``s_i <= 0``."""
        W = np.atleast_2d(np.asarray(W, dtype=float))
        S = np.atleast_1d(np.asarray(S, dtype=float))
        out = np.full(len(S), -np.inf)
        pos = S > 0
        if np.any(pos):
            quad, logdet = self.whiten(W[pos], S[pos])
            out[pos] = -0.5 * self.N * LOG_4PI - 0.5 * logdet - 0.25 * quad - S[pos] * self.trB
        return out

    def log_diagonal(self, S):
        """``log Gamma(0, s)``: the on-diagonal profile."""
        S = np.atleast_1d(np.asarray(S, dtype=float))
        return self.log_gamma(np.zeros((len(S), self.N)), S)


def _groups(S):
    uniq, idx = np.unique(S, return_inverse=True)
    for k, s in enumerate(uniq):
        yield float(s), idx == k


_EVALUATORS: dict = {}


def evaluator(spec: OperatorSpec) -> _Evaluator:
    key = (spec.A.tobytes(), spec.B.tobytes(), spec.m)
    ev = _EVALUATORS.get(key)
    if ev is None:
        ev = _Evaluator(spec)
        if len(_EVALUATORS) > 256:
            _EVALUATORS.clear()
        _EVALUATORS[key] = ev
    return ev


def log_gamma_points(spec: OperatorSpec, X, T, xi, tau) -> np.ndarray:
    """``log Gamma(x_i, t_i; xi, tau)`` for stacked living points."""
    ev = evaluator(spec)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    S = np.atleast_1d(np.asarray(T, dtype=float)) - float(tau)
    xi = np.asarray(xi, dtype=float)
    W = np.zeros_like(X)
    pos = S > 0
    W[pos] = X[pos] - ev.apply_E(S[pos], np.broadcast_to(xi, X[pos].shape).copy())
    return ev.log_gamma(W, S)


def log_gamma_poles(spec: OperatorSpec, x, t, XI, TAU) -> np.ndarray:
    """``log Gamma(x, t; xi_i, tau_i)`` for stacked poles."""
    ev = evaluator(spec)
    XI = np.atleast_2d(np.asarray(XI, dtype=float))
    S = float(t) - np.atleast_1d(np.asarray(TAU, dtype=float))
    W = np.zeros_like(XI)
    pos = S > 0
    W[pos] = np.asarray(x, dtype=float) - ev.apply_E(S[pos], XI[pos])
    return ev.log_gamma(W, S)


def gamma(spec: OperatorSpec, z, zeta=None) -> KernelValue:
    """``Gamma(z; zeta)``; the pole defaults to the origin.

    Raises
    ------
    GramianSingular
        If ``C(t - tau)`` is not positive definite.
    """
    z = as_point(z)
    zeta = GroupPoint.origin(z.N) if zeta is None else as_point(zeta)
    s = z.t - zeta.t
    if s <= 0:
        return KernelValue(0.0, -np.inf)
    b = gramian(spec, s)
    w = z.x - b.E @ zeta.x
    lg = float(-0.5 * spec.N * LOG_4PI - 0.5 * b.logDetC - 0.25 * b.quad(w) - s * spec.trace_B)
    return KernelValue(float(np.exp(lg)), lg)


def gamma0(spec: OperatorSpec, z, zeta=None) -> KernelValue:
    """Fundamental solution of the principal part (starred blocks of ``B`` zeroed)."""
    return gamma(spec.principal_part(), z, zeta)


def grad_x_gamma(spec: OperatorSpec, z, zeta=None) -> np.ndarray:
    """Gradient of ``Gamma(x, t; xi, tau)`` in the living variable ``x``: ``-Gamma C^{-1} w / 2``."""
    z = as_point(z)
    zeta = GroupPoint.origin(z.N) if zeta is None else as_point(zeta)
    s = z.t - zeta.t
    if s <= 0:
        raise NonPositiveTime("the gradient is taken where t > tau")
    b = gramian(spec, s)
    w = z.x - b.E @ zeta.x
    return -0.5 * gamma(spec, z, zeta).value * b.solve(w)


def grad_pole_log_gamma(spec: OperatorSpec, z0, X, T) -> np.ndarray:
    """Rows ``D_xi log Gamma(z0; (xi_i, tau_i))``, the gradient in the pole variable.

    With ``w = x0 - E(s) xi`` this equals ``E(s)^T C(s)^{-1} w / 2``.
    """
    z0 = as_point(z0)
    ev = evaluator(spec)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    S = z0.t - np.atleast_1d(np.asarray(T, dtype=float))
    if np.any(S <= 0):
        raise PoleEvaluation("pole gradient needs points strictly below z0 in time")
    W = z0.x - ev.apply_E(S, X)
    return 0.5 * ev.apply_Et(S, ev.solve(S, W))


def mean_value_kernel_arrays(spec: OperatorSpec, z0, X, T) -> np.ndarray:
    G = grad_pole_log_gamma(spec, z0, X, T)
    return np.einsum("ij,jk,ik->i", G, spec.A, G)


def mean_value_kernel(spec: OperatorSpec, z0, z) -> float:
    """``M(z0; z) = <A D log Gamma, D log Gamma>`` with ``D`` the gradient in ``z``'s space variable.

    Raises
    ------
    PoleEvaluation
        When ``Gamma(z0; z) = 0`` (``z`` not strictly below ``z0`` in time).
    """
    z = as_point(z)
    return float(mean_value_kernel_arrays(spec, z0, z.x[None, :], np.array([z.t]))[0])


# --- super-level sets --------------------------------------------------------


def superlevel_contains_arrays(spec: OperatorSpec, z0, X, T, r: float) -> np.ndarray:
    if not r > 0:
        raise NonPositiveRadius(f"r must be positive, got {r}")
    z0 = as_point(z0)
    return log_gamma_poles(spec, z0.x, z0.t, X, T) > -np.log(r)


def superlevel_contains(spec: OperatorSpec, z, z0, r: float) -> bool:
    """Whether ``Gamma(z0; z) > 1/r``."""
    z = as_point(z)
    return bool(superlevel_contains_arrays(spec, z0, z.x[None, :], np.array([z.t]), r)[0])


def superlevel_time_extent(spec: OperatorSpec, r: float, s_cap: float = 1e6) -> float:
    """Largest lag ``s`` with on-diagonal value ``Gamma(0, s) > 1/r``; ``0`` if none.

    The on-diagonal profile blows up as ``s -> 0``.  A geometric scan locates
    the last crossing of the level ``1/r``, refined by bisection.
    """
    if not r > 0:
        raise NonPositiveRadius(f"r must be positive, got {r}")
    ev = evaluator(spec)
    level = -np.log(r)
    S = np.geomspace(1e-12, s_cap, 1201)
    above = ev.log_diagonal(S) > level
    if not np.any(above):
        return 0.0
    k = int(np.nonzero(above)[0][-1])
    if k == len(S) - 1:
        return float(s_cap)
    lo, hi = S[k], S[k + 1]
    for _ in range(200):
        mid = np.sqrt(lo * hi)
        if ev.log_diagonal([mid])[0] > level:
            lo = mid
        else:
            hi = mid
        if hi / lo - 1 < 1e-14:
            break
    return float(lo)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in ``(x, t)`` coordinates: ``lo <= z <= hi`` row-wise."""

    lo: np.ndarray
    hi: np.ndarray

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    @property
    def empty(self) -> bool:
        return bool(np.any(self.hi <= self.lo))


def superlevel_box(spec: OperatorSpec, z0, r: float, n_times: int = 512, inflate: float = 0.1) -> Box:
    """Bounding box of ``Omega_r(z0)``.

    For lag ``s`` the slice is the ellipsoid
    ``x = E(-s)(x0 - w)`` with ``<C(s)^{-1} w, w> < rho(s)^2``,
    ``rho^2 = 4 log(r Gamma(0, s))``; its half-width along ``x_i`` is
    ``rho sqrt((E(-s) C(s) E(-s)^T)_ii)``.  Slices are sampled on a grid of
    lags and the resulting box is inflated by ``inflate`` relative to its
    size on every side.
    """
    z0 = as_point(z0)
    s_max = superlevel_time_extent(spec, r)
    N = spec.N
    if s_max == 0.0:
        c = z0.as_array()
        return Box(c, c.copy())
    ev = evaluator(spec)
    S = s_max * (np.arange(1, n_times + 1) / n_times)
    rho2 = 4.0 * (np.log(r) + ev.log_diagonal(S))
    rho = np.sqrt(np.clip(rho2, 0.0, None))
    lo = np.full(N, np.inf)
    hi = np.full(N, -np.inf)
    for s, rh in zip(S, rho):
        b = gramian(spec, s)
        Einv = np.linalg.inv(b.E)
        center = Einv @ z0.x
        half = rh * np.sqrt(np.clip(np.diag(Einv @ b.C @ Einv.T), 0.0, None))
        lo = np.minimum(lo, center - half)
        hi = np.maximum(hi, center + half)
    lo = np.minimum(lo, z0.x)
    hi = np.maximum(hi, z0.x)
    pad = inflate * (hi - lo)
    tlo, thi = z0.t - s_max * (1 + inflate), z0.t
    return Box(np.append(lo - pad, tlo), np.append(hi + pad, thi))


def harnack_levelset_contains(spec: OperatorSpec, z, z0, r: float, eps: float) -> bool:
    """Membership in ``Omega_r(z0) intersected with {t <= t0 - eps r^(2/Q)}``."""
    if not eps > 0:
        raise NonPositiveRadius(f"eps must be positive, got {eps}")
    z, z0 = as_point(z), as_point(z0)
    Q = dilation_exponents(spec).Q
    if z.t > z0.t - eps * r ** (2.0 / Q):
        return False
    return superlevel_contains(spec, z, z0, r)


# --- mean-value formula ------------------------------------------------------


class ConstantSolution:
    """``u = c``."""

    pole = None

    def __init__(self, c: float = 1.0):
        self.c = float(c)

    def __call__(self, spec, X, T):
        return np.full(len(T), self.c)


class KernelSolution:
    """``u = Gamma(.; zeta)``, a solution away from its pole ``zeta``."""

    def __init__(self, zeta):
        self.pole = as_point(zeta)

    def __call__(self, spec, X, T):
        return np.exp(log_gamma_points(spec, X, T, self.pole.x, self.pole.t))


@dataclass(frozen=True)
class MeanValueResult:
    estimate: float
    exact: float
    rel_error: float
    std_error: float
    samples: int
    accepted: int


def _chunk_sizes(n: int, chunk: int):
    full, rest = divmod(n, chunk)
    return [chunk] * full + ([rest] if rest else [])


def _slice_draw(spec, ev, z0, r, s_max, n, rng):
    """Lags uniform on ``(0, s_max]`` and points uniform in the exact slice of ``Omega_r(z0)``.

    Returns the points and the slice volume at each lag.
    """
    N = spec.N
    S = s_max * (1.0 - rng.random(n))
    rho = np.sqrt(np.clip(4.0 * (np.log(r) + ev.log_diagonal(S)), 0.0, None))
    d = rng.standard_normal((n, N))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    U = d * (rng.random(n) ** (1.0 / N) * rho)[:, None]
    L1 = np.linalg.cholesky(ev.b1.C)
    W = (U @ L1.T) * ev._scale(S)
    # x = E(-s)(x0 - w) = E(s)^{-1}(x0 - w); E(-s) = D0(sqrt s) E(-1) D0(1/sqrt s)
    sc = ev._scale(S)
    Einv1 = np.linalg.inv(ev.b1.E)
    X = (((z0.x - W) / sc) @ Einv1.T) * sc
    log_ball = 0.5 * N * np.log(np.pi) - gammaln(0.5 * N + 1.0)
    logV = log_ball + N * np.log(np.where(rho > 0, rho, 1e-300)) + 0.5 * (ev.b1.logDetC + ev.group.Q * np.log(S))
    logV += S * ev.trB
    V = np.where(rho > 0, np.exp(logV), 0.0)
    return X, z0.t - S, V


def mean_value_verify(spec: OperatorSpec, z0, r: float, u=None, samples: int = 1_000_000, seed: int = 0,
                      chunk: int = 100_000, threads: int = 1, method: str = "slice") -> MeanValueResult:
    """Monte Carlo check of ``u(z0) = (1/r) int_{Omega_r(z0)} M(z0; z) u(z) dz``.

    ``method="slice"`` draws the lag ``s`` uniformly on the time extent of
    ``Omega_r(z0)`` and ``x`` uniformly in the ellipsoidal slice at that lag,
    weighting by the slice volume.  ``method="box"`` draws uniformly in
    :func:`superlevel_box` and rejects points outside ``Omega_r(z0)``; it is
    unbiased too but has a much larger variance.  Chunk ``i`` uses the
    ``i``-th child of ``SeedSequence(seed)``, so results do not depend on
    ``threads``.

    Raises
    ------
    KolmoError
        If ``B`` has nonzero starred blocks (the formula needs ``B = B_0``).
    PoleInsideDomain
        If ``u`` is a kernel solution whose pole lies in the closure of ``Omega_r(z0)``.
    """
    if not _is_homogeneous(spec):
        raise KolmoError("the mean-value formula needs a dilation-invariant operator (B = B_0)")
    if method not in ("slice", "box"):
        raise ValueError("method must be 'slice' or 'box'")
    if not r > 0:
        raise NonPositiveRadius(f"r must be positive, got {r}")
    u = ConstantSolution(1.0) if u is None else u
    z0 = as_point(z0)
    if u.pole is not None:
        p = u.pole
        if p == z0:
            raise PoleInsideDomain("the pole of u coincides with z0")
        if p.t < z0.t and log_gamma_poles(spec, z0.x, z0.t, p.x[None, :], [p.t])[0] >= -np.log(r):
            raise PoleInsideDomain("the pole of u lies in the closure of the super-level set")
    ev = evaluator(spec)
    N = spec.N
    s_max = superlevel_time_extent(spec, r)
    box = superlevel_box(spec, z0, r) if method == "box" else None
    sizes = _chunk_sizes(int(samples), int(chunk))
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))

    def work(args):
        n, ss = args
        rng = np.random.Generator(np.random.Philox(ss))
        if method == "slice":
            X, T, V = _slice_draw(spec, ev, z0, r, s_max, n, rng)
            weight = V * s_max
            inside = V > 0
        else:
            Z = box.lo + (box.hi - box.lo) * rng.random((n, N + 1))
            X, T = Z[:, :N], Z[:, N]
            inside = (T < z0.t) & superlevel_contains_arrays(spec, z0, X, T, r)
            weight = np.full(n, box.volume)
        vals = np.zeros(n)
        if np.any(inside):
            Xi, Ti = X[inside], T[inside]
            vals[inside] = weight[inside] * mean_value_kernel_arrays(spec, z0, Xi, Ti) * u(spec, Xi, Ti)
        return float(vals.sum()), float((vals**2).sum()), int(inside.sum())

    if s_max == 0.0:
        parts = [(0.0, 0.0, 0)]
    elif threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, zip(sizes, seeds)))
    else:
        parts = [work(a) for a in zip(sizes, seeds)]
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    acc = sum(p[2] for p in parts)
    n = int(samples)
    mean = s1 / n
    var = max(s2 / n - mean**2, 0.0)
    est = mean / r
    se = float(np.sqrt(var / n) / r)
    exact = float(u(spec, z0.x[None, :], np.array([z0.t]))[0]) if u.pole is not None else u.c
    return MeanValueResult(est, exact, abs(est - exact) / abs(exact), se, n, acc)


# --- quadrature checks -------------------------------------------------------


def _hermite_grid(N: int, n_nodes: int, max_points: float = 1e6):
    n = int(min(n_nodes, max(2, np.floor(max_points ** (1.0 / N) + 1e-9))))
    y, w = hermgauss(n)
    Y = np.stack(np.meshgrid(*([y] * N), indexing="ij"), axis=-1).reshape(-1, N)
    logW = np.sum(np.log(np.stack(np.meshgrid(*([w] * N), indexing="ij"), axis=-1).reshape(-1, N)), axis=1)
    return Y, logW


def normalization_check(spec: OperatorSpec, t: float, n_nodes: int = 64, x=None, over: str = "xi") -> float:
    """Integral of ``Gamma(x, t; xi, 0)`` over ``xi`` (expected 1) or over ``x``.

    Gauss-Hermite on the whitened variable ``y``: for ``over="xi"`` the nodes
    are mapped through ``xi = E(-t)(x - 2 L y)`` with ``C(t) = L L^T``; for
    ``over="x"`` through ``x = E(t) xi + 2 L y``.  The kernel itself is
    evaluated at every node; the integral over ``x`` equals ``exp(-t tr B)``.
    """
    t = float(t)
    if not t > 0:
        raise NonPositiveTime(f"time must be positive, got {t}")
    N = spec.N
    b = gramian(spec, t)
    L = b.Ls * b.scale[:, None]
    x = np.zeros(N) if x is None else np.asarray(x, dtype=float)
    Y, logW = _hermite_grid(N, n_nodes)
    logdetL = 0.5 * b.logDetC
    if over == "xi":
        Einv = np.linalg.inv(b.E)
        XI = (x - 2.0 * Y @ L.T) @ Einv.T
        lg = log_gamma_poles(spec, x, t, XI, np.zeros(len(XI)))
        logJ = N * np.log(2.0) + logdetL + np.log(abs(np.linalg.det(Einv)))
    elif over == "x":
        X = b.E @ x + 2.0 * Y @ L.T
        lg = log_gamma_points(spec, X, np.full(len(X), t), x, 0.0)
        logJ = N * np.log(2.0) + logdetL
    else:
        raise ValueError("over must be 'xi' or 'x'")
    return float(np.sum(np.exp(logW + lg + np.sum(Y * Y, axis=1) + logJ)))


def chapman_check(spec: OperatorSpec, z, zeta, s: float, n_nodes: int = 64) -> float:
    """Relative error of ``Gamma(z; zeta) = int Gamma(x, t; y, s) Gamma(y, s; xi, tau) dy``.

    The narrower of the two factors (in ``y``) is used as the Gauss-Hermite
    weight after whitening; the other factor is evaluated at the nodes.

    Raises
    ------
    BadTimeOrder
        Unless ``tau < s < t``.
    """
    z, zeta = as_point(z), as_point(zeta)
    if not (zeta.t < s < z.t):
        raise BadTimeOrder(f"need tau < s < t, got tau={zeta.t}, s={s}, t={z.t}")
    N = spec.N
    lhs = gamma(spec, z, zeta).logValue
    b1 = gramian(spec, z.t - s)  # factor Gamma(x, t; y, s)
    b2 = gramian(spec, s - zeta.t)  # factor Gamma(y, s; xi, tau)
    E1inv = np.linalg.inv(b1.E)
    # covariance in y of each factor: E1^{-1} C1 E1^{-T} and C2
    logdet1 = b1.logDetC + 2 * np.log(abs(np.linalg.det(E1inv)))
    Y, logW = _hermite_grid(N, n_nodes)
    yy = np.sum(Y * Y, axis=1)
    if logdet1 < b2.logDetC:
        L1 = b1.Ls * b1.scale[:, None]
        P = (z.x - 2.0 * Y @ L1.T) @ E1inv.T
        other = log_gamma_points(spec, P, np.full(len(P), s), zeta.x, zeta.t)
        first = log_gamma_poles(spec, z.x, z.t, P, np.full(len(P), s))
        logJ = N * np.log(2.0) + 0.5 * b1.logDetC + np.log(abs(np.linalg.det(E1inv)))
    else:
        L2 = b2.Ls * b2.scale[:, None]
        P = b2.E @ zeta.x + 2.0 * Y @ L2.T
        first = log_gamma_points(spec, P, np.full(len(P), s), zeta.x, zeta.t)
        other = log_gamma_poles(spec, z.x, z.t, P, np.full(len(P), s))
        logJ = N * np.log(2.0) + 0.5 * b2.logDetC
    terms = logW + yy + logJ + first + other
    m = np.max(terms)
    log_rhs = m + np.log(np.sum(np.exp(terms - m)))
    return float(abs(np.expm1(log_rhs - lhs)))


# --- comparison bounds -------------------------------------------------------


@dataclass(frozen=True)
class ComparisonReport:
    levels: tuple
    eps: tuple
    eps_per_level: tuple
    non_increasing: bool
    c_plus: float
    c_minus: float
    lam: float
    c_plus_bound: float
    c_minus_bound: float


def _sample_level_set(ev0: _Evaluator, K: float, n: int, rng, boundary_frac: float = 0.25, n_lags: int = 512):
    """Points ``(x, t)`` with ``Gamma_0(x, t; 0, 0) >= K`` (lag ``t`` uniform)."""
    spec0 = ev0.spec
    s_K = superlevel_time_extent(spec0, 1.0 / K)
    if s_K == 0.0:
        return np.zeros((0, spec0.N)), np.zeros(0)
    N = spec0.N
    # lags on a fixed grid so non-homogeneous operators need few Gramians
    T = s_K * rng.integers(1, n_lags + 1, n) / n_lags
    rho = np.sqrt(np.clip(4.0 * (ev0.log_diagonal(T) - np.log(K)), 0.0, None))
    d = rng.standard_normal((n, N))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    rad = rng.random(n) ** (1.0 / N)
    nb = int(boundary_frac * n)
    rad[:nb] = 1.0 - 1e-12
    V = d * (rad * rho)[:, None]  # whitened: <C^{-1} x, x> = |V|^2
    L1 = np.linalg.cholesky(ev0.b1.C)
    X = (V @ L1.T) * ev0._scale(T)
    return X, T


def comparison_bounds_check(spec: OperatorSpec, levels=(1.0, 10.0, 100.0, 1000.0), samples: int = 20000,
                            seed: int = 0, t_window: float = 1.0, n_lags: int = 256) -> ComparisonReport:
    """Empirical ``eps(K)`` for ``(1 - eps) Gamma_0 <= Gamma <= (1 + eps) Gamma_0`` on ``{Gamma_0 >= K}``.

    Level sets are nested, so samples drawn for all levels are pooled and
    ``eps(K)`` is the maximum of ``|Gamma / Gamma_0 - 1|`` over pooled samples
    with ``Gamma_0 >= K``; ``eps_per_level`` keeps the per-level maxima.

    The second part compares ``Gamma`` with ``Gamma^{+-}``, built from the
    diffusion ``lambda^{+-1} I`` on the leading block, over lags in
    ``(0, t_window]``; ``c_plus = max Gamma / Gamma^+`` and
    ``c_minus = min Gamma / Gamma^-``.  The Gramian ordering gives
    ``c_plus <= lambda^N`` and ``c_minus >= lambda^{-N}``.
    """
    levels = tuple(float(k) for k in levels)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    spec0 = spec.principal_part()
    ev0 = evaluator(spec0)
    pooled_X, pooled_T, per_level = [], [], []
    for K in levels:
        X, T = _sample_level_set(ev0, K, samples, rng, n_lags=n_lags)
        pooled_X.append(X)
        pooled_T.append(T)
    X = np.concatenate(pooled_X)
    T = np.concatenate(pooled_T)
    lg0 = log_gamma_points(spec0, X, T, np.zeros(spec.N), 0.0)
    lg = log_gamma_points(spec, X, T, np.zeros(spec.N), 0.0)
    dev = np.abs(np.expm1(lg - lg0))
    eps = []
    for K in levels:
        sel = lg0 >= np.log(K)
        eps.append(float(np.max(dev[sel])) if np.any(sel) else 0.0)
    start = 0
    for Xk in pooled_X:
        n = len(Xk)
        per_level.append(float(np.max(dev[start:start + n])) if n else 0.0)
        start += n
    non_inc = all(eps[i + 1] <= eps[i] for i in range(len(eps) - 1))

    lam = spec.lam if spec.lam is not None else 1.0
    N, m0 = spec.N, (spec.m[0] if spec.m is not None else spec.N)
    Ap = np.zeros((N, N))
    Ap[:m0, :m0] = lam * np.eye(m0)
    Am = np.zeros((N, N))
    Am[:m0, :m0] = np.eye(m0) / lam
    sp_plus = replace_A(spec, Ap)
    sp_minus = replace_A(spec, Am)
    n2 = samples
    S = t_window * rng.integers(1, n_lags + 1, n2) / n_lags
    # points spread up to three standard deviations of the widest kernel
    Z = rng.standard_normal((n2, N)) * (1.0 + 2.0 * rng.random((n2, 1)))
    Xs = np.empty((n2, N))
    for s, sel in _groups(S):
        b = gramian(sp_plus, s)
        Xs[sel] = np.sqrt(2.0) * Z[sel] @ (b.Ls * b.scale[:, None]).T
    lg = log_gamma_points(spec, Xs, S, np.zeros(N), 0.0)
    lgp = log_gamma_points(sp_plus, Xs, S, np.zeros(N), 0.0)
    lgm = log_gamma_points(sp_minus, Xs, S, np.zeros(N), 0.0)
    c_plus = float(np.exp(np.max(lg - lgp)))
    c_minus = float(np.exp(np.min(lg - lgm)))
    return ComparisonReport(levels, tuple(eps), tuple(per_level), non_inc, c_plus, c_minus, float(lam),
                            float(lam**N), float(lam ** (-N)))
