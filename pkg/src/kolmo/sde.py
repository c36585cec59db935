"""Simulation of the linear SDE ``dX = -B X dt + sigma dW``.

The law of ``X_t`` given ``X_0 = x0`` is Gaussian with mean ``E(t) x0`` and
covariance ``2 C(t)``.  Its density is ``exp(t tr B) Gamma(x, t; x0, 0)``.

Random streams come from ``numpy.random.Philox`` seeded by
``SeedSequence(seed)``; chunk ``i`` of a batch uses child ``i`` of
``SeedSequence(seed).spawn(k)``, so a batch is identical for any thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import BadSampleCount, BadStep, NonPositiveTime
from .gramian import gramian
from .operator import OperatorSpec

CHUNK = 250_000


@dataclass(frozen=True)
class SampleBatch:
    t: float
    x0: np.ndarray
    points: np.ndarray
    method: str
    seed: int
    dt: float | None = None

    @property
    def n(self) -> int:
        return self.points.shape[0]


def covariance_factor(C2: np.ndarray) -> np.ndarray:
    """Symmetric square root of a covariance via eigen-decomposition.

    Eigenvalues above ``-1e-12 trace`` are clamped to zero; anything more
    negative is rejected.
    """
    w, V = np.linalg.eigh(0.5 * (C2 + C2.T))
    tr = max(float(np.trace(C2)), 0.0)
    if w[0] < -1e-12 * max(tr, 1e-300):
        raise ValueError(f"covariance has a negative eigenvalue {w[0]:.3e}")
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def _streams(seed: int, n: int, chunk: int):
    sizes = [chunk] * (n // chunk) + ([n % chunk] if n % chunk else [])
    kids = np.random.SeedSequence(seed).spawn(len(sizes))
    return [(k, np.random.Generator(np.random.Philox(ss))) for k, ss in zip(sizes, kids)]


def _run(streams, fn, threads):
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda a: fn(*a), streams))
    else:
        parts = [fn(*a) for a in streams]
    return np.concatenate(parts, axis=0)


def _check(t, n):
    if not t > 0:
        raise NonPositiveTime(f"time must be positive, got {t}")
    if int(n) < 2:
        raise BadSampleCount(f"need at least two samples, got {n}")


def sample_exact(spec: OperatorSpec, x0, t: float, n: int, seed: int, threads: int = 1,
                 chunk: int = CHUNK) -> SampleBatch:
    """Draw ``X_t`` exactly: ``E(t) x0 + (2 C(t))^{1/2} Z``."""
    _check(t, n)
    x0 = np.asarray(x0, dtype=float)
    b = gramian(spec, t, require_positive=False)
    mean = b.E @ x0
    F = covariance_factor(2.0 * b.C)

    def draw(k, rng):
        return mean + rng.standard_normal((k, spec.N)) @ F.T

    pts = _run(_streams(seed, int(n), chunk), draw, threads)
    return SampleBatch(float(t), x0, pts, "exact", int(seed))


def euler_maruyama(spec: OperatorSpec, x0, t: float, dt: float, n: int, seed: int, threads: int = 1,
                   chunk: int = CHUNK) -> SampleBatch:
    """Explicit Euler-Maruyama ``X <- X - B X dt + sigma sqrt(dt) xi``.

    The number of steps is ``round(t / dt)``; ``dt`` must divide ``t`` up to
    rounding.
    """
    _check(t, n)
    if not (0 < dt <= t):
        raise BadStep(f"need 0 < dt <= t, got dt={dt}")
    steps = int(round(t / dt))
    if abs(steps * dt - t) > 1e-9 * t:
        raise BadStep(f"dt={dt} does not divide t={t}")
    x0 = np.asarray(x0, dtype=float)
    M = (np.eye(spec.N) - dt * spec.B).T
    S = np.sqrt(dt) * spec.sigma.T
    m = spec.sigma.shape[1]

    def draw(k, rng):
        X = np.tile(x0, (k, 1))
        for _ in range(steps):
            X = X @ M + rng.standard_normal((k, m)) @ S
        return X

    pts = _run(_streams(seed, int(n), chunk), draw, threads)
    return SampleBatch(float(t), x0, pts, "em", int(seed), float(dt))


def euler_maruyama_coupled(spec: OperatorSpec, x0, t: float, levels, n: int, seed: int,
                           threads: int = 1, chunk: int = CHUNK) -> list[SampleBatch]:
    """Euler-Maruyama at steps ``t / levels[i]`` driven by one Brownian path.

    ``levels`` are step counts, each dividing the largest.  Coarse
    increments are sums of fine ones, so differences between the returned
    batches reflect discretization rather than sampling noise.
    """
    _check(t, n)
    levels = sorted(int(k) for k in levels)
    fine = levels[-1]
    if any(k < 1 or fine % k for k in levels):
        raise BadStep(f"step counts {levels} must divide {fine}")
    x0 = np.asarray(x0, dtype=float)
    m = spec.sigma.shape[1]
    h = t / fine

    def draw(k, rng):
        Xs = {L: np.tile(x0, (k, 1)) for L in levels}
        Ms = {L: (np.eye(spec.N) - (t / L) * spec.B).T for L in levels}
        acc = {L: np.zeros((k, m)) for L in levels}
        for i in range(fine):
            dW = np.sqrt(h) * rng.standard_normal((k, m))
            for L in levels:
                acc[L] += dW
                if (i + 1) % (fine // L) == 0:
                    Xs[L] = Xs[L] @ Ms[L] + acc[L] @ spec.sigma.T
                    acc[L][:] = 0.0
        return np.concatenate([Xs[L] for L in levels], axis=1)

    pts = _run(_streams(seed, int(n), chunk), draw, threads)
    N = spec.N
    return [SampleBatch(float(t), x0, pts[:, i * N:(i + 1) * N], "em", int(seed), t / L)
            for i, L in enumerate(levels)]


def em_covariance(spec: OperatorSpec, t: float, dt: float) -> np.ndarray:
    """Exact covariance of the Euler-Maruyama chain: ``P <- M P M^T + 2 A dt``."""
    steps = int(round(t / dt))
    M = np.eye(spec.N) - dt * spec.B
    P = np.zeros((spec.N, spec.N))
    for _ in range(steps):
        P = M @ P @ M.T + 2.0 * spec.A * dt
    return P


@dataclass(frozen=True)
class MomentReport:
    mean_err: float
    mean_tol: float
    cov_err: float
    cov_rel_err: float
    cov_z: np.ndarray
    skewness: np.ndarray
    kurtosis: np.ndarray
    normality_stat: float


def moment_check(batch: SampleBatch, spec: OperatorSpec) -> MomentReport:
    """Compare a batch with mean ``E(t) x0`` and covariance ``2 C(t)``.

    ``cov_z`` holds entrywise errors in units of their standard errors,
    ``sqrt((S_ii S_jj + S_ij^2) / n)`` for Gaussian data.  The normality
    statistic is the largest of ``|skew| / sqrt(6/n)`` and
    ``|kurt - 3| / sqrt(24/n)`` over the coordinates of the sample whitened
    with ``2 C(t)``.
    """
    b = gramian(spec, batch.t, require_positive=False)
    mean = b.E @ batch.x0
    S = 2.0 * b.C
    X = batch.points
    n = X.shape[0]
    emp_mean = X.mean(axis=0)
    d = np.diag(S)
    mean_err = float(np.max(np.abs(emp_mean - mean)))
    mean_tol = float(4.0 * np.sqrt(np.max(d) / n))
    Y = X - mean
    emp_cov = Y.T @ Y / n
    se = np.sqrt((np.outer(d, d) + S**2) / n)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, np.abs(emp_cov - S) / se, np.where(emp_cov == S, 0.0, np.inf))
    cov_err = float(np.max(np.abs(emp_cov - S)))
    cov_rel = cov_err / max(float(np.max(np.abs(S))), 1e-300)
    w, V = np.linalg.eigh(S)
    keep = w > 1e-12 * max(w[-1], 1e-300)
    Wt = (Y @ V[:, keep]) / np.sqrt(w[keep])
    skew = np.mean(Wt**3, axis=0)
    kurt = np.mean(Wt**4, axis=0)
    stat = float(max(np.max(np.abs(skew)) / np.sqrt(6.0 / n), np.max(np.abs(kurt - 3.0)) / np.sqrt(24.0 / n))) if keep.any() else 0.0
    return MomentReport(mean_err, mean_tol, cov_err, cov_rel, z, skew, kurt, stat)
