"""Matrix exponential ``E(t) = exp(-tB)`` and the Gramian ``C(t)``.

``C(t) = int_0^t E(s) A E(s)^T ds`` is obtained in closed form from one
exponential of the block matrix ``t [[-B, A], [0, B^T]]``.  When the operator
carries strata the evaluation goes through the dilation identity

    C(t) = D0(sqrt t) C_{B_sqrt(t)}(1) D0(sqrt t),

which keeps every entry at relative precision even though the raw entries of
``C(t)`` span powers ``t^{q_i + q_j - 1}``.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import GramianSingular, NonFinite, NonPositiveTime
from .operator import OperatorSpec, dilation_exponents, scaled_B

POSITIVITY_TOL = 1e-9

# Pade coefficients and norm thresholds for degree 3, 5, 7, 9, 13 approximants.
_THETA = {3: 1.495585217958292e-2, 5: 2.539398330063230e-1, 7: 9.504178996162932e-1, 9: 2.097847961257068e0}
_THETA13 = 5.371920351148152
_B13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0,
    129060195264000.0, 10559470521600.0, 670442572800.0, 33522128640.0, 1323241920.0,
    40840800.0, 960960.0, 16380.0, 182.0, 1.0,
)
_BLOW = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0, 2162160.0, 110880.0, 3960.0, 90.0, 1.0),
}


def _nilpotent_exp(M: np.ndarray) -> np.ndarray | None:
    """Exact finite series when some power ``M^k`` (k <= n) is exactly zero."""
    n = M.shape[0]
    out = np.eye(n)
    P = np.eye(n)
    for k in range(1, n + 1):
        P = P @ M / k
        if not np.any(P):
            return out
        out = out + P
    return None


def matrix_exponential(M) -> np.ndarray:
    """``exp(M)`` by scaling and squaring with a diagonal Pade approximant.

    Matrices with an exactly vanishing power are summed as a finite series,
    which is exact up to rounding of the individual terms.

    Raises
    ------
    NonFinite
        If ``M`` has non-finite entries.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"matrix_exponential needs a square matrix, got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NonFinite("matrix has non-finite entries")
    n = M.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    exact = _nilpotent_exp(M)
    if exact is not None:
        return exact

    ident = np.eye(n)
    norm = np.linalg.norm(M, 1)
    M2 = M @ M
    for deg in (3, 5, 7, 9):
        if norm <= _THETA[deg]:
            b = _BLOW[deg]
            U = b[1] * ident
            V = b[0] * ident
            P = ident
            for k in range(1, deg // 2 + 1):
                P = P @ M2
                U = U + b[2 * k + 1] * P
                V = V + b[2 * k] * P
            U = M @ U
            return np.linalg.solve(V - U, V + U)

    s = max(0, int(np.ceil(np.log2(norm / _THETA13))))
    A = M / 2.0**s
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A2 @ A4
    b = _B13
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2) + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
    V = A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2) + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident
    R = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        R = R @ R
    return R


def propagator(B, t: float) -> np.ndarray:
    """``E(t) = exp(-tB)``; defined for every real ``t``."""
    return matrix_exponential(-float(t) * np.asarray(B, dtype=float))


def propagators(B, taus, terms: int = 18) -> np.ndarray:
    """Stack of ``E(tau_i)`` for many scalar lags, shape ``(n, N, N)``.

    One truncated Taylor series in the shared powers of ``B`` after scaling
    all lags by ``2^-s`` so that ``max |tau| ||B|| <= 1/2``, then ``s``
    batched squarings.  Agrees with :func:`propagator` to about ``1e-14``.
    """
    B = np.asarray(B, dtype=float)
    taus = np.asarray(taus, dtype=float).reshape(-1)
    N = B.shape[0]
    nb = float(np.linalg.norm(B, 1))
    top = float(np.max(np.abs(taus))) * nb if taus.size else 0.0
    s = max(0, int(np.ceil(np.log2(top / 0.5)))) if top > 0.5 else 0
    u = -taus / 2.0**s
    powers = np.empty((terms, N, N))
    powers[0] = np.eye(N)
    for k in range(1, terms):
        powers[k] = powers[k - 1] @ B / k
    coef = u[:, None] ** np.arange(terms)[None, :]
    E = np.einsum("pk,kij->pij", coef, powers)
    for _ in range(s):
        E = E @ E
    return E


def van_loan_gramian(A, B, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(E(t), C(t))`` from a single block exponential."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n = A.shape[0]
    H = np.zeros((2 * n, 2 * n))
    H[:n, :n] = -B
    H[:n, n:] = A
    H[n:, n:] = B.T
    F = matrix_exponential(float(t) * H)
    E = F[:n, :n]
    C = F[:n, n:] @ E.T
    return E, 0.5 * (C + C.T)


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-10, max_depth: int = 40):
    """Adaptive Simpson quadrature for array-valued integrands.

    The local error test uses the max-norm of the Richardson difference
    against ``tol`` times the running scale of the integrand.
    """
    fa, fb = np.asarray(f(a), dtype=float), np.asarray(f(b), dtype=float)
    m = 0.5 * (a + b)
    fm = np.asarray(f(m), dtype=float)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    scale = max(1e-300, float(np.max(np.abs(whole))))

    def rec(a, b, fa, fm, fb, whole, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = np.asarray(f(lm), dtype=float), np.asarray(f(rm), dtype=float)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        diff = left + right - whole
        if depth <= 0 or np.max(np.abs(diff)) <= 15.0 * tol * scale * (b - a) / total:
            return left + right + diff / 15.0
        return rec(a, m, fa, flm, fm, left, depth - 1) + rec(m, b, fm, frm, fb, right, depth - 1)

    total = b - a
    if total == 0:
        return np.zeros_like(whole)
    return rec(a, b, fa, fm, fb, whole, max_depth)


def gramian_quadrature(A, B, t: float, tol: float = 1e-10) -> np.ndarray:
    """``C(t)`` by adaptive Simpson over ``s``, with ``scipy.linalg.expm`` for ``E(s)``.

    Shares no code path with :func:`van_loan_gramian`, so it serves as an
    independent check.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)

    def integrand(s):
        E = scipy.linalg.expm(-s * B)
        return E @ A @ E.T

    C = adaptive_simpson(integrand, 0.0, float(t), tol=tol)
    return 0.5 * (C + C.T)


@dataclass(frozen=True)
class GramianBundle:
    """``E(t)``, ``C(t)`` and the factorizations needed by kernel evaluations.

    ``scale`` is the diagonal of ``D0(sqrt t)`` when the operator has strata
    (ones otherwise) and ``Cs = C / (scale scale^T)`` is the well-conditioned
    scaled Gramian whose Cholesky factor ``Ls`` drives all solves.
    """

    t: float
    E: np.ndarray
    C: np.ndarray
    scale: np.ndarray
    Cs: np.ndarray
    Ls: np.ndarray | None
    logDetC: float
    minEig: float
    positive: bool

    @property
    def Cinv(self) -> np.ndarray | None:
        if self.Ls is None:
            return None
        Linv = scipy.linalg.solve_triangular(self.Ls, np.eye(len(self.scale)), lower=True)
        Csinv = Linv.T @ Linv
        return Csinv / np.outer(self.scale, self.scale)

    @property
    def detC(self) -> float:
        return float(np.exp(self.logDetC))

    def _need(self):
        if self.Ls is None:
            raise GramianSingular(f"C({self.t}) is not positive definite")

    def solve(self, w) -> np.ndarray:
        """``C^{-1} w`` for a vector or a stack of row vectors."""
        self._need()
        w = np.asarray(w, dtype=float)
        v = (w / self.scale).T
        y = scipy.linalg.cho_solve((self.Ls, True), v)
        return y.T / self.scale

    def quad(self, w) -> np.ndarray:
        """``<C^{-1} w, w>`` for a vector or each row of a stack."""
        self._need()
        w = np.asarray(w, dtype=float)
        v = (w / self.scale).T
        y = scipy.linalg.solve_triangular(self.Ls, v, lower=True)
        return np.sum(y * y, axis=0)


_CACHE: dict = {}
_CACHE_LOCK = threading.Lock()
_CACHE_MAX = 4096


def clear_cache() -> None:
    with _CACHE_LOCK:
        _CACHE.clear()


def _scaled_blocks(spec: OperatorSpec, t: float):
    """Scale vector ``D0(sqrt t)`` and the scaled ``(A, B)`` pair, or ``None``."""
    if spec.m is None:
        return None
    m0 = spec.m[0]
    outside = spec.A.copy()
    outside[:m0, :m0] = 0.0
    if np.any(outside):
        return None
    group = dilation_exponents(spec)
    r = np.sqrt(t)
    return group.spatial(r), spec.A, scaled_B(spec.B, r, group)


def gramian(spec: OperatorSpec, t: float, *, require_positive: bool = True, cross_check: bool = False,
            tol: float = POSITIVITY_TOL) -> GramianBundle:
    """Build the :class:`GramianBundle` at time ``t``.

    Parameters
    ----------
    spec : OperatorSpec
    t : float
        Positive time.
    require_positive : bool
        Raise :class:`GramianSingular` when ``C(t)`` is not positive definite.
    cross_check : bool
        Also integrate ``C(t)`` by adaptive quadrature and require relative
        agreement to ``1e-9``.  Off by default because it dominates the cost.
    tol : float
        Relative positivity threshold on the minimum eigenvalue of the scaled
        Gramian, compared with ``tol * trace / N``.
    """
    t = float(t)
    if not t > 0 or not np.isfinite(t):
        raise NonPositiveTime(f"time must be positive, got {t}")
    key = (spec.A.tobytes(), spec.B.tobytes(), spec.m, t, require_positive, tol)
    if not cross_check:
        with _CACHE_LOCK:
            hit = _CACHE.get(key)
        if hit is not None:
            return hit

    E = propagator(spec.B, t)
    blocks = _scaled_blocks(spec, t)
    if blocks is None:
        scale = np.ones(spec.N)
        _, Cs = van_loan_gramian(spec.A, spec.B, t)
    else:
        scale, As, Bs = blocks
        _, Cs = van_loan_gramian(As, Bs, 1.0)
    C = Cs * np.outer(scale, scale)
    C = 0.5 * (C + C.T)

    if cross_check:
        Cq = gramian_quadrature(spec.A, spec.B, t)
        err = np.max(np.abs(Cq - C)) / max(np.max(np.abs(C)), 1e-300)
        if err > 1e-9:
            raise GramianSingular(f"Gramian methods disagree at t={t}: relative gap {err:.2e}")

    ev = np.linalg.eigvalsh(Cs)
    N = spec.N
    positive = bool(ev[0] > tol * max(np.trace(Cs), 0.0) / N)
    Ls = None
    logdet = -np.inf
    if positive:
        try:
            Ls = np.linalg.cholesky(Cs)
            logdet = 2.0 * float(np.sum(np.log(np.diag(Ls)))) + 2.0 * float(np.sum(np.log(scale)))
        except np.linalg.LinAlgError:
            positive = False
    if require_positive and not positive:
        raise GramianSingular(f"C({t}) is singular (scaled min eigenvalue {ev[0]:.3e})")
    bundle = GramianBundle(t=t, E=E, C=C, scale=scale, Cs=Cs, Ls=Ls, logDetC=logdet,
                           minEig=float(np.linalg.eigvalsh(C)[0]), positive=positive)
    for arr in (E, C, scale, Cs):
        arr.setflags(write=False)
    with _CACHE_LOCK:
        if len(_CACHE) >= _CACHE_MAX:
            _CACHE.clear()
        _CACHE[key] = bundle
    return bundle
