"""Hypoellipticity conditions and the pointwise boundary classifier.

Four basis-free tests that must agree on every operator:

* ``c1`` Lie algebra generated by the constant fields ``X_k`` and ``Y`` has full rank;
* ``c2`` ``Ker A`` contains no nontrivial subspace invariant under the drift;
* ``c3`` the Gramian ``C(t)`` is positive definite;
* ``c4`` the Kalman matrix ``[sigma, B sigma, ..., B^{N-1} sigma]`` has rank ``N``.

``c5`` records whether the matrices pass the block-form validation.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DimensionMismatch, KolmoError, NonPositiveTime, ZeroNormal
from .gramian import POSITIVITY_TOL, gramian
from .operator import RANK_RTOL, OperatorSpec, numerical_rank, validate_operator
from .point import as_point

FICHERA_TOL = 1e-10


def _check_dims(sigma, B):
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim == 1:
        sigma = sigma.reshape(-1, 1)
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1] or sigma.shape[0] != B.shape[0]:
        raise DimensionMismatch(f"incompatible shapes sigma {sigma.shape} and B {B.shape}")
    return sigma, B


def kalman_rank(sigma, B) -> tuple[int, bool]:
    """Rank of ``[sigma | B sigma | ... | B^{N-1} sigma]`` and whether it equals ``N``."""
    sigma, B = _check_dims(sigma, B)
    N = B.shape[0]
    blocks = [sigma]
    for _ in range(N - 1):
        blocks.append(B @ blocks[-1])
    r = numerical_rank(np.hstack(blocks))
    return r, r == N


def hormander_bracket_rank(sigma, B) -> tuple[bool, int]:
    """Dimension of the Lie algebra generated by ``X_k`` and ``Y`` at any point.

    ``X_k = sum_j sigma_jk d_j / sqrt 2`` and ``Y = <Bx, D> - d_t``.  For
    constant ``v``, ``[v.D, Y] = (Bv).D``, so the brackets
    ``[...[X_k, Y], ..., Y]`` are the constant fields with coefficients
    ``B^i sigma_k``; commutators among constant fields vanish.  The span is
    grown one bracket generation at a time until it stops increasing; ``Y``
    adds the time direction.
    """
    sigma, B = _check_dims(sigma, B)
    N = B.shape[0]
    span = np.zeros((N, 0))
    layer = sigma / np.sqrt(2.0)
    rank = 0
    while True:
        cand = np.hstack([span, layer])
        new_rank = numerical_rank(cand) if cand.size else 0
        if new_rank == rank:
            break
        span, rank = cand, new_rank
        # next bracket generation: [layer, Y]
        layer = B @ layer
        if rank == N:
            break
    dim = rank + 1
    return dim == N + 1, dim


def _orth(M, rtol=RANK_RTOL):
    M = np.asarray(M, dtype=float)
    if M.size == 0 or M.shape[1] == 0:
        return np.zeros((M.shape[0], 0))
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros((M.shape[0], 0))
    return U[:, s > rtol * s[0]]


def _null(M, scale: float):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = M.shape[1]
    if M.size == 0:
        return np.eye(n)
    _, s, Vt = np.linalg.svd(M)
    rank = int(np.sum(s > RANK_RTOL * max(scale, 1e-300)))
    return Vt[rank:].T


def invariant_subspace_check(A, B) -> bool:
    """True when ``Ker A`` contains no nonzero subspace invariant under ``B^T``.

    With the drift ``x -> Bx`` the backward dynamics act on test directions
    through ``B^T``, so ``Ker A`` is intersected with its preimage under
    ``B^T`` until the dimension stabilizes:
    ``V_{k+1} = V_k cap (B^T)^{-1} V_k``.  This agrees with the Kalman test.
    """
    A = np.asarray(A, dtype=float)
    Bt = np.asarray(B, dtype=float).T
    N = A.shape[0]
    ev, U = np.linalg.eigh(0.5 * (A + A.T))
    scale = max(float(np.max(np.abs(ev))), 0.0)
    V = U[:, np.abs(ev) <= RANK_RTOL * scale] if scale > 0 else np.eye(N)
    bscale = max(1.0, float(np.linalg.norm(Bt, 2)))
    for _ in range(N + 1):
        if V.shape[1] == 0:
            return True
        # x in span(V) with Bt x in span(V): x = V c, (I - P) Bt V c = 0
        P = V @ V.T
        R = (np.eye(N) - P) @ Bt @ V
        C = _null(R, bscale)
        Vn = _orth(V @ C) if C.shape[1] else np.zeros((N, 0))
        if Vn.shape[1] == V.shape[1]:
            return False
        V = Vn
    return V.shape[1] == 0


def gramian_positivity(spec: OperatorSpec, t: float = 1.0, tol: float = POSITIVITY_TOL) -> tuple[bool, float]:
    """``(minEig(C(t)) > tol * trace(C(t)) / N, minEig(C(t)))``."""
    if not t > 0:
        raise NonPositiveTime(f"time must be positive, got {t}")
    b = gramian(spec, t, require_positive=False)
    C = b.C
    mn = float(np.linalg.eigvalsh(C)[0])
    return bool(mn > tol * float(np.trace(C)) / spec.N), mn


@dataclass(frozen=True)
class ConditionReport:
    c1: bool
    c2: bool
    c3: bool
    c3_min_eig: float
    c4: bool
    kalman_rank: int
    c5: bool
    generated_dimension: int
    consistent: bool

    @property
    def hypoelliptic(self) -> bool:
        return self.c1 and self.c2 and self.c3 and self.c4

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hypoelliptic"] = self.hypoelliptic
        return d


def check_all(spec: OperatorSpec, t: float = 1.0) -> ConditionReport:
    """Run all conditions; ``consistent`` flags agreement of ``c1`` to ``c4``."""
    c1, dim = hormander_bracket_rank(spec.sigma, spec.B)
    c2 = invariant_subspace_check(spec.A, spec.B)
    c3, mn = gramian_positivity(spec, t)
    rank, c4 = kalman_rank(spec.sigma, spec.B)
    c5 = False
    if spec.m is not None:
        try:
            validate_operator(spec.A, spec.B, spec.sigma, spec.m, spec.lam)
            c5 = True
        except KolmoError:
            c5 = False
    consistent = c1 == c2 == c3 == c4
    return ConditionReport(c1, c2, c3, mn, c4, rank, c5, dim, consistent)


class BoundaryVerdict(enum.Enum):
    BARRIER = "Barrier"
    NON_REGULAR = "NonRegular"
    UNDETERMINED = "Undetermined"


def fichera_classify(spec: OperatorSpec, z0, nu, tol: float = FICHERA_TOL) -> BoundaryVerdict:
    """Classify a boundary point with outer normal ``nu = (nu_x, nu_t)``.

    ``<A nu_x, nu_x> > tol`` gives a barrier; otherwise the sign of
    ``<Y(z0), nu>`` with ``Y(z0) = (B x0, -1)`` decides, and the band
    ``|<Y, nu>| <= tol`` is left undetermined.

    Raises
    ------
    ZeroNormal
        If ``nu`` vanishes.
    """
    z0 = as_point(z0)
    nu = np.asarray(nu, dtype=float).reshape(-1)
    if nu.shape[0] != spec.N + 1:
        raise DimensionMismatch(f"normal must have {spec.N + 1} entries")
    if not np.any(nu):
        raise ZeroNormal("normal vector is zero")
    nx, nt = nu[:-1], nu[-1]
    if float(nx @ spec.A @ nx) > tol:
        return BoundaryVerdict.BARRIER
    y = float((spec.B @ z0.x) @ nx - nt)
    if y > tol:
        return BoundaryVerdict.BARRIER
    if y < -tol:
        return BoundaryVerdict.NON_REGULAR
    return BoundaryVerdict.UNDETERMINED


# --- random operators for equivalence fuzzing --------------------------------


def _well_conditioned(rng, rows, cols):
    """Random ``rows x cols`` matrix with singular values in ``[0.5, 2]``."""
    U, _ = np.linalg.qr(rng.standard_normal((rows, rows)))
    V, _ = np.linalg.qr(rng.standard_normal((cols, cols)))
    k = min(rows, cols)
    S = np.zeros((rows, cols))
    S[:k, :k] = np.diag(rng.uniform(0.5, 2.0, k))
    return U @ S @ V.T


def random_strata(rng, max_N: int = 6, max_kappa: int = 3) -> tuple:
    while True:
        kappa = int(rng.integers(0, max_kappa + 1))
        m = [int(rng.integers(1, 4))]
        for _ in range(kappa):
            m.append(int(rng.integers(1, m[-1] + 1)))
        if sum(m) <= max_N:
            return tuple(m)


def random_valid_spec(rng, max_N: int = 6, max_kappa: int = 3, star_scale: float = 1.0) -> OperatorSpec:
    """Block-form operator with random ``A0 > 0``, full-rank ``B_j`` and random starred blocks."""
    m = random_strata(rng, max_N, max_kappa)
    N = sum(m)
    edges = np.concatenate([[0], np.cumsum(m)])
    B = np.zeros((N, N))
    for a in range(len(m)):
        for b in range(len(m)):
            rs, cs = slice(edges[a], edges[a + 1]), slice(edges[b], edges[b + 1])
            if a == b + 1:
                B[rs, cs] = _well_conditioned(rng, m[a], m[b])
            elif a <= b:
                B[rs, cs] = star_scale * rng.standard_normal((m[a], m[b]))
    m0 = m[0]
    Q, _ = np.linalg.qr(rng.standard_normal((m0, m0)))
    A0 = (Q * rng.uniform(0.5, 2.0, m0)) @ Q.T
    A = np.zeros((N, N))
    A[:m0, :m0] = 0.5 * (A0 + A0.T)
    return validate_operator(A, B, m=m)


def random_broken_spec(rng, max_N: int = 6, max_kappa: int = 3) -> OperatorSpec:
    """Operator failing every condition, in one of two random ways.

    Either some subdiagonal block ``B_j`` is zeroed, or, in a random
    orthonormal basis, a direction ``w`` is removed from ``sigma`` and made
    an eigenvector of ``B^T``, so ``span{w}`` is an invariant subspace of
    ``Ker A``.
    """
    while True:
        spec = random_valid_spec(rng, max_N, max_kappa)
        N = spec.N
        if rng.random() < 0.5 and len(spec.m) > 1:
            j = int(rng.integers(1, len(spec.m)))
            sl = spec.stratum_slices()
            B = spec.B.copy()
            B[sl[j], sl[j - 1]] = 0.0
            return OperatorSpec(spec.A, B, spec.sigma, spec.m, None, False)
        P, _ = np.linalg.qr(rng.standard_normal((N, N)))
        sigma = P @ spec.sigma
        B = P @ spec.B @ P.T
        w = rng.standard_normal(N)
        w /= np.linalg.norm(w)
        Pw = np.eye(N) - np.outer(w, w)
        sigma = Pw @ sigma
        mu = float(rng.normal())
        # w^T B = mu w^T, so w annihilates every B^k sigma
        B = Pw @ B + mu * np.outer(w, w)
        A = 0.5 * sigma @ sigma.T
        return OperatorSpec(_ro(A), _ro(B), _ro(sigma), None, None, False)


def _ro(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a
