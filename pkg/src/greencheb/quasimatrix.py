"""Column quasimatrices: finitely many Chebyshev-series columns on one interval.

Columns are held as one coefficient array of shape ``(N + 1, K)`` padded to a
common length, so products with small matrices are plain matrix products and
all L2 inner products are a single weighted product on a Chebyshev grid fine
enough to integrate the pairwise products exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.fft import next_fast_len

from .chebcore import (
    ChebSeries,
    Domain1D,
    _pad,
    _trim,
    as_domain,
    cc_weights,
    coeffs2vals,
    evaluate,
    legendre_basis,
    vals2coeffs,
)
from .errors import DomainMismatch, RankDeficient, ShapeMismatch

RANK_TOL = 1e-13
SKIP_REFLECTION_TOL = 1e-14
PANEL = 32


@dataclass(frozen=True, eq=False)
class Quasimatrix:
    domain: Domain1D
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        if c.ndim != 2 or c.shape[0] < 1:
            raise ShapeMismatch(f"bad coefficient array shape {c.shape}")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "domain", as_domain(self.domain))

    @classmethod
    def from_columns(cls, cols) -> "Quasimatrix":
        cols = list(cols)
        if not cols:
            raise ShapeMismatch("a quasimatrix needs at least one column")
        d = cols[0].domain
        for c in cols[1:]:
            if c.domain != d:
                raise DomainMismatch("columns live on different domains")
        n = max(c.coeffs.size for c in cols)
        return cls(d, np.column_stack([_pad(c.coeffs, n) for c in cols]))

    @classmethod
    def empty(cls, d) -> "Quasimatrix":
        """Zero columns; stands in for the factors of a rank-0 kernel."""
        return cls(as_domain(d), np.zeros((1, 0)))

    @classmethod
    def from_values(cls, values, d) -> "Quasimatrix":
        """Columns interpolating ``values`` given on ``cheb_points(N, d)``."""
        return cls(as_domain(d), vals2coeffs(np.asarray(values, dtype=float)))

    @property
    def K(self) -> int:
        return self.coeffs.shape[1]

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def cols(self) -> list[ChebSeries]:
        return [self.column(j) for j in range(self.K)]

    def column(self, j: int) -> ChebSeries:
        return ChebSeries(self.domain, _trim(self.coeffs[:, j]))

    def __call__(self, x) -> np.ndarray:
        """Evaluate all columns: returns shape ``x.shape + (K,)``."""
        x = np.asarray(x, dtype=float)
        # grids usually repeat few distinct abscissae; evaluate each only once
        xu, inv = np.unique(x, return_inverse=True)
        t = self.domain.to_unit(xu)
        out = np.polynomial.chebyshev.chebval(t, self.coeffs).T
        return out[inv.reshape(x.shape)]

    def values(self, n: int | None = None) -> np.ndarray:
        n = self.degree if n is None else n
        return coeffs2vals(_pad(self.coeffs, n + 1))

    def trimmed(self, tol: float = 0.0) -> "Quasimatrix":
        big = np.nonzero(np.max(np.abs(self.coeffs), axis=1) > tol)[0]
        n = big[-1] + 1 if big.size else 1
        return Quasimatrix(self.domain, self.coeffs[:n])

    def select(self, idx) -> "Quasimatrix":
        return Quasimatrix(self.domain, self.coeffs[:, list(idx)])

    def truncate(self, k: int) -> "Quasimatrix":
        return Quasimatrix(self.domain, self.coeffs[:, :k])

    def __matmul__(self, C):
        return qm_scale_and_matmul(self, C)

    def __add__(self, other: "Quasimatrix") -> "Quasimatrix":
        _check_domains(self, other)
        if self.K != other.K:
            raise ShapeMismatch("column counts differ")
        n = max(self.coeffs.shape[0], other.coeffs.shape[0])
        return Quasimatrix(self.domain, _pad(self.coeffs, n) + _pad(other.coeffs, n))

    def __sub__(self, other: "Quasimatrix") -> "Quasimatrix":
        return self + (-1.0) * other

    def __mul__(self, c: float) -> "Quasimatrix":
        return Quasimatrix(self.domain, float(c) * self.coeffs)

    __rmul__ = __mul__

    def norms(self) -> np.ndarray:
        return np.sqrt(np.maximum(np.diag(qm_inner(self, self)), 0.0))

    def h_norm(self) -> float:
        """Norm in ``(L2)^K``: square root of the trace of ``A*A``."""
        return float(np.sqrt(max(np.trace(qm_inner(self, self)), 0.0)))


def _check_domains(A: Quasimatrix, C: Quasimatrix):
    if A.domain != C.domain:
        raise DomainMismatch(f"domains differ: {A.domain.as_tuple()} vs {C.domain.as_tuple()}")


def qm_scale_and_matmul(A: Quasimatrix, C) -> Quasimatrix:
    """``A @ C``: column ``j`` of the result is ``sum_i C[i, j] * A_i``."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if C.shape[0] != A.K:
        raise ShapeMismatch(f"cannot multiply a {A.K}-column quasimatrix by a {C.shape} matrix")
    return Quasimatrix(A.domain, A.coeffs @ C)


def _common_grid(*degrees: int) -> int:
    # exactness needs n >= sum of the two largest degrees; round up to a fast FFT size
    return next_fast_len(max(sum(sorted(degrees)[-2:]), 1), real=True)


def qm_inner(A: Quasimatrix, C: Quasimatrix) -> np.ndarray:
    """The ``K_A x K_C`` matrix of L2 inner products ``<A_i, C_j>``."""
    _check_domains(A, C)
    n = _common_grid(A.degree, C.degree)
    w = cc_weights(n, A.domain)
    VA = coeffs2vals(_pad(A.coeffs, n + 1))
    VC = coeffs2vals(_pad(C.coeffs, n + 1))
    return VA.T @ (w[:, None] * VC)


def householder_qr(A: Quasimatrix) -> tuple[Quasimatrix, np.ndarray]:
    """Householder triangularisation ``A = Q R`` of a column quasimatrix.

    The reflections target the orthonormal Legendre columns ``E``; the sign
    matrix ``S`` makes ``diag(R) >= 0`` so that ``Q`` is unique.

    Raises
    ------
    RankDeficient
        When a pivot norm ``R[k, k]`` drops below ``1e-13`` times the largest
        column norm.
    """
    K = A.K
    d = A.domain
    if K == 0:
        return A, np.zeros((0, 0))
    # every function touched below has degree <= nmax, so products are exact on 2*nmax
    nmax = max(A.degree, K - 1)
    n = _common_grid(nmax, nmax)
    w = cc_weights(n, d)
    E = coeffs2vals(_pad(legendre_basis(K, d).coeffs, n + 1))
    X = coeffs2vals(_pad(A.coeffs, n + 1))

    W = w[:, None]
    colnorms = np.sqrt(np.maximum(np.einsum("i,ij,ij->j", w, X, X), 0.0))
    scale = float(np.max(colnorms))
    T = np.zeros((K, K))
    S = np.ones(K)
    V = np.zeros((n + 1, K))
    # H_1 ... H_k = I - V Tw V* (compact WY form, grown one reflector at a time)
    Tw = np.zeros((K, K))
    # columns are processed in panels: reflections already computed are applied
    # to a whole panel at once, then the panel is triangularised column by column
    for p0 in range(0, K, PANEL):
        p1 = min(p0 + PANEL, K)
        P = X[:, p0:p1]
        if p0 > 0:
            Vp, Ep = V[:, :p0], E[:, :p0]
            P -= Vp @ (Tw[:p0, :p0].T @ (Vp.T @ (W * P)))
            Tp = Ep.T @ (W * P)
            T[:p0, p0:p1] = Tp
            P -= Ep @ Tp
        for k in range(p0, p1):
            x = X[:, k]
            wx = w * x
            rkk = float(np.sqrt(max(np.dot(wx, x), 0.0)))
            if scale == 0.0 or rkk <= RANK_TOL * scale:
                raise RankDeficient(k)
            e = E[:, k]
            S[k] = -1.0 if np.dot(wx, e) >= 0 else 1.0
            v = S[k] * rkk * e - x
            nv = float(np.sqrt(max(np.dot(w * v, v), 0.0)))
            T[k, k] = S[k] * rkk
            if nv >= SKIP_REFLECTION_TOL * rkk:
                v /= nv
                V[:, k] = v
                Tw[:k, k] = -2.0 * (Tw[:k, :k] @ (V[:, :k].T @ (w * v)))
                Tw[k, k] = 2.0
                if k + 1 < p1:
                    rest = X[:, k + 1 : p1]
                    rest -= np.outer(2.0 * v, (w * v) @ rest)
            if k + 1 < p1:
                rest = X[:, k + 1 : p1]
                rk = (w * e) @ rest
                T[k, k + 1 : p1] = rk
                rest -= np.outer(e, rk)
    ES = E * S[None, :]
    Qv = ES - V @ (Tw @ (V.T @ (W * ES)))
    R = S[:, None] * T
    Qc = vals2coeffs(Qv)[: nmax + 1]
    return Quasimatrix(d, Qc), R


def qf(A: Quasimatrix) -> Quasimatrix:
    """The ``Q`` factor of :func:`householder_qr`."""
    return householder_qr(A)[0]


def evaluate_columns(A: Quasimatrix, x) -> np.ndarray:
    return np.column_stack([evaluate(c, x) for c in A.cols])
