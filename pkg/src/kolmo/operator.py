"""Kolmogorov operators ``Tr(A D^2) + <Bx, D> - d/dt`` with constant matrices.

An operator is described by an :class:`OperatorSpec`.  Specs built with
:func:`make_operator` only satisfy the basic algebraic requirements (square,
symmetric, positive semidefinite ``A``); :func:`validate_operator` additionally
enforces the canonical block structure of the hypoelliptic class, which is
what the dilation machinery needs.

The drift convention is ``drift(x) = B x`` throughout the package.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    A0NotPositive,
    BlockRankDeficient,
    DimensionMismatch,
    InvalidStrata,
    MissingStrata,
    NonPositiveRadius,
    NotBlockForm,
    NotPositiveSemidefinite,
    NotSymmetric,
)
from .point import GroupPoint, as_point

RANK_RTOL = 1e-10
SIGMA_ATOL = 1e-12


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def numerical_rank(M, rtol: float = RANK_RTOL) -> int:
    """Rank counting singular values above ``rtol`` times the largest one."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def _psd_sqrt(A: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(A)
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T


@dataclass(frozen=True)
class OperatorSpec:
    """Matrices ``A``, ``B`` (and a diffusion factor ``sigma``) of an operator.

    ``m`` holds the strata sizes ``(m_0, ..., m_kappa)`` of the canonical block
    basis, or ``None`` when the operator is given in an arbitrary basis.
    """

    A: np.ndarray
    B: np.ndarray
    sigma: np.ndarray
    m: tuple | None = None
    lam: float | None = None
    validated: bool = field(default=False, compare=False)

    @property
    def N(self) -> int:
        return self.A.shape[0]

    @property
    def m0(self) -> int:
        self._need_strata()
        return self.m[0]

    @property
    def kappa(self) -> int:
        self._need_strata()
        return len(self.m) - 1

    @property
    def A0(self) -> np.ndarray:
        return self.A[: self.m0, : self.m0]

    @property
    def trace_B(self) -> float:
        return float(np.trace(self.B))

    def _need_strata(self):
        if self.m is None:
            raise MissingStrata("operator has no strata; supply m")

    def stratum_slices(self) -> list[slice]:
        self._need_strata()
        edges = np.concatenate([[0], np.cumsum(self.m)])
        return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]

    def block(self, a: int, b: int) -> np.ndarray:
        """Block of ``B`` with rows in stratum ``a`` and columns in stratum ``b``."""
        sl = self.stratum_slices()
        return self.B[sl[a], sl[b]]

    def principal_B(self) -> np.ndarray:
        """``B_0``: ``B`` with every starred block replaced by zero."""
        sl = self.stratum_slices()
        B0 = np.zeros_like(self.B)
        for j in range(1, len(sl)):
            B0[sl[j], sl[j - 1]] = self.B[sl[j], sl[j - 1]]
        return B0

    def principal_part(self) -> "OperatorSpec":
        return replace_B(self, self.principal_B())

    def is_dilation_invariant(self, atol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.B - self.principal_B()) <= atol))

    def to_dict(self) -> dict:
        d = {"N": self.N, "A": self.A.tolist(), "B": self.B.tolist(), "sigma": self.sigma.tolist()}
        if self.m is not None:
            d["m"] = list(self.m)
        if self.lam is not None:
            d["lambda"] = self.lam
        return d


def replace_B(spec: OperatorSpec, B) -> OperatorSpec:
    return OperatorSpec(spec.A, _frozen(B), spec.sigma, spec.m, spec.lam, spec.validated)


def replace_A(spec: OperatorSpec, A, sigma=None) -> OperatorSpec:
    """Same drift, new diffusion; ``sigma`` is rebuilt from ``A`` when omitted."""
    A = np.asarray(A, dtype=float)
    if sigma is None:
        sigma = _default_sigma(A, spec.m)
    return OperatorSpec(_frozen(A), spec.B, _frozen(sigma), spec.m, None, False)


def _default_sigma(A: np.ndarray, m) -> np.ndarray:
    if m is not None:
        m0 = m[0]
        S = np.zeros((A.shape[0], m0))
        S[:m0, :] = _psd_sqrt(A[:m0, :m0])
        return np.sqrt(2.0) * S
    return np.sqrt(2.0) * _psd_sqrt(A)


def make_operator(A, B, sigma=None, m: Sequence[int] | None = None, lam: float | None = None) -> OperatorSpec:
    """Build a spec checking only shapes, symmetry and positivity of ``A``.

    Operators outside the hypoelliptic class are allowed here; use
    :func:`validate_operator` to require the canonical block form.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"A must be square, got shape {A.shape}")
    if B.shape != A.shape:
        raise DimensionMismatch(f"A and B must have equal shapes, got {A.shape} and {B.shape}")
    N = A.shape[0]
    if N == 0:
        raise DimensionMismatch("empty operator")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise DimensionMismatch("non-finite matrix entries")
    scale = max(1.0, float(np.max(np.abs(A))))
    if np.max(np.abs(A - A.T)) > 1e-12 * scale:
        raise NotSymmetric("A is not symmetric")
    A = 0.5 * (A + A.T)
    if np.linalg.eigvalsh(A)[0] < -1e-12 * scale:
        raise NotPositiveSemidefinite("A has a negative eigenvalue")

    if m is not None:
        m = tuple(int(v) for v in m)
        if any(v < 1 for v in m) or sum(m) != N:
            raise InvalidStrata(f"strata {m} must be positive and sum to N={N}")

    if sigma is None:
        sigma = _default_sigma(A, m)
    else:
        sigma = np.asarray(sigma, dtype=float)
        if sigma.ndim == 1:
            sigma = sigma.reshape(-1, 1)
        if sigma.shape[0] != N:
            raise DimensionMismatch(f"sigma must have {N} rows, got shape {sigma.shape}")
        if np.max(np.abs(A - 0.5 * sigma @ sigma.T)) > SIGMA_ATOL * scale:
            raise DimensionMismatch("A differs from sigma sigma^T / 2")
    return OperatorSpec(_frozen(A), _frozen(B), _frozen(sigma), m, lam, False)


def validate_operator(A, B, sigma=None, m: Sequence[int] | None = None, lam: float | None = None) -> OperatorSpec:
    """Build a spec and check it belongs to the hypoelliptic class in block form.

    Raises
    ------
    DimensionMismatch, NotSymmetric, InvalidStrata
        Malformed input.
    A0NotPositive
        The diffusive block is not positive definite, or its spectrum leaves
        ``[1/lam, lam]``.
    NotBlockForm
        ``A`` is nonzero outside its leading block, or ``B`` has nonzero
        entries below the first block subdiagonal.
    BlockRankDeficient
        Some subdiagonal block ``B_j`` has rank below ``m_j``.
    """
    if m is None:
        raise MissingStrata("validation needs the strata sizes m")
    spec = make_operator(A, B, sigma, m, lam)
    m = spec.m
    if any(m[j] < m[j + 1] for j in range(len(m) - 1)):
        raise InvalidStrata(f"strata {m} must be non-increasing")

    m0 = m[0]
    A = spec.A
    scale = max(1.0, float(np.max(np.abs(A))))
    outside = A.copy()
    outside[:m0, :m0] = 0.0
    if np.max(np.abs(outside)) > 1e-14 * scale:
        raise NotBlockForm("A has nonzero entries outside the leading m0 x m0 block")

    ev = np.linalg.eigvalsh(A[:m0, :m0])
    if ev[0] <= 0.0 or ev[0] <= 1e-12 * scale:
        raise A0NotPositive(f"A0 is not positive definite (min eigenvalue {ev[0]:.3e})")
    if lam is None:
        lam = float(max(ev[-1], 1.0 / ev[0]))
    else:
        lam = float(lam)
        if lam <= 0:
            raise A0NotPositive("lambda must be positive")
        tol = 1e-12 * max(lam, 1.0)
        if ev[0] < 1.0 / lam - tol or ev[-1] > lam + tol:
            raise A0NotPositive(
                f"A0 spectrum [{ev[0]:.6g}, {ev[-1]:.6g}] not inside [1/lambda, lambda] = [{1 / lam:.6g}, {lam:.6g}]"
            )

    sl = spec.stratum_slices()
    Bmax = max(1.0, float(np.max(np.abs(spec.B))))
    for a in range(len(m)):
        for b in range(len(m)):
            if a >= b + 2 and np.max(np.abs(spec.B[sl[a], sl[b]])) > 1e-14 * Bmax:
                raise NotBlockForm(f"B block ({a},{b}) below the subdiagonal is nonzero")
    for j in range(1, len(m)):
        r = numerical_rank(spec.B[sl[j], sl[j - 1]])
        if r < m[j]:
            raise BlockRankDeficient(j, r, m[j])
    return OperatorSpec(spec.A, spec.B, spec.sigma, m, lam, True)


def operator_from_dict(d: dict, strict: bool = True) -> OperatorSpec:
    """Parse the operator JSON schema ``{"N", "A", "B", "sigma"?, "m", "lambda"?}``."""
    for key in ("A", "B"):
        if key not in d:
            raise DimensionMismatch(f"missing key {key!r}")
    A = np.asarray(d["A"], dtype=float)
    if "N" in d and (A.ndim != 2 or A.shape[0] != int(d["N"])):
        raise DimensionMismatch(f"N={d['N']} does not match A of shape {A.shape}")
    build = validate_operator if strict else make_operator
    return build(A, d["B"], d.get("sigma"), d.get("m"), d.get("lambda"))


def load_operator(path, strict: bool = True) -> OperatorSpec:
    with open(Path(path)) as fh:
        return operator_from_dict(json.load(fh), strict=strict)


# --- dilations ---------------------------------------------------------------


@dataclass(frozen=True)
class DilationGroup:
    """Exponents of ``D(r) = diag(r^{q_1}, ..., r^{q_N}, r^2)``."""

    q: tuple
    Q: int
    time_exponent: int = 2

    @property
    def N(self) -> int:
        return len(self.q)

    def spatial(self, r: float) -> np.ndarray:
        """Diagonal of ``D_0(r)``."""
        return np.power(float(r), np.asarray(self.q, dtype=float))

    def matrix(self, r: float) -> np.ndarray:
        return np.diag(np.append(self.spatial(r), float(r) ** self.time_exponent))


def dilation_exponents(spec: OperatorSpec) -> DilationGroup:
    m = spec.m
    if m is None:
        raise MissingStrata("dilations are defined by the strata sizes")
    q = tuple(2 * j + 1 for j, mj in enumerate(m) for _ in range(mj))
    return DilationGroup(q=q, Q=int(sum(q)))


def dilate_arrays(x, t, r: float, group: DilationGroup):
    if not r > 0:
        raise NonPositiveRadius(f"dilation radius must be positive, got {r}")
    x = np.asarray(x, dtype=float)
    return x * group.spatial(r), np.asarray(t, dtype=float) * float(r) ** group.time_exponent


def dilate(z, r: float, group: DilationGroup) -> GroupPoint:
    z = as_point(z)
    x, t = dilate_arrays(z.x, z.t, r, group)
    return GroupPoint(x, float(t))


def scaled_B(B, r: float, group: DilationGroup) -> np.ndarray:
    """Drift matrix ``B_r`` of the operator rescaled by ``D(r)``.

    Entry ``(i, j)`` is multiplied by ``r^(2 + q_j - q_i)``: subdiagonal blocks
    are unchanged, starred blocks pick up positive powers of ``r`` and vanish
    as ``r -> 0``, leaving the principal part ``B_0``.
    """
    if not r > 0:
        raise NonPositiveRadius(f"radius must be positive, got {r}")
    B = np.asarray(B, dtype=float)
    q = np.asarray(group.q, dtype=float)
    expo = 2.0 + q[None, :] - q[:, None]
    return B * np.power(float(r), expo)
