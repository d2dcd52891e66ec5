"""Univariate Chebyshev series on an interval.

Functions on ``[a, b]`` are stored as coefficient vectors in the Chebyshev-T
basis of the affinely mapped variable ``t = (2x - a - b) / (b - a)``.  Values
live on the second-kind (Chebyshev-Lobatto) points ``cos(i*pi/N)`` which are
ordered from ``b`` down to ``a``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.polynomial import chebyshev as npcheb
from scipy.fft import dct, next_fast_len
from scipy.special import eval_legendre

from .errors import DomainMismatch, NonConvergence

MACHINE_EPS = float(np.finfo(float).eps)
DEFAULT_EPS = 2.22e-16
MIN_LOG2 = 4
MAX_LOG2 = 16


@dataclass(frozen=True)
class Domain1D:
    a: float
    b: float

    def __post_init__(self):
        a, b = float(self.a), float(self.b)
        if not (np.isfinite(a) and np.isfinite(b)) or not a < b:
            raise ValueError(f"invalid domain [{self.a}, {self.b}]")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def length(self) -> float:
        return self.b - self.a

    def to_unit(self, x):
        return (2.0 * np.asarray(x, dtype=float) - self.a - self.b) / (self.b - self.a)

    def from_unit(self, t):
        return 0.5 * (self.b - self.a) * np.asarray(t, dtype=float) + 0.5 * (self.a + self.b)

    def as_tuple(self) -> tuple[float, float]:
        return (self.a, self.b)


@dataclass(frozen=True)
class Tolerance:
    eps_rel: float = DEFAULT_EPS

    def __post_init__(self):
        if not 0.0 < self.eps_rel < 1.0:
            raise ValueError("eps_rel must lie in (0, 1)")


def as_domain(d) -> Domain1D:
    if isinstance(d, Domain1D):
        return d
    a, b = d
    return Domain1D(a, b)


def as_tolerance(tol) -> Tolerance:
    if tol is None:
        return Tolerance()
    if isinstance(tol, Tolerance):
        return tol
    return Tolerance(float(tol))


# ---------------------------------------------------------------------------
# transforms


def unit_points(n: int) -> np.ndarray:
    """``cos(i*pi/n)`` for ``i = 0..n`` (``[0.0]`` when ``n == 0``)."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return np.zeros(1)
    # sin form is exactly antisymmetric, unlike cos(i*pi/n)
    m = np.arange(n, -n - 1, -2)
    return np.sin(np.pi * m / (2.0 * n))


def cheb_points(n: int, d=Domain1D(-1.0, 1.0)) -> np.ndarray:
    """``n + 1`` Chebyshev-Lobatto points on ``d`` in descending order."""
    d = as_domain(d)
    pts = d.from_unit(unit_points(n))
    if n >= 1:
        pts[0], pts[-1] = d.b, d.a
    return pts


def vals2coeffs(v) -> np.ndarray:
    """Values at ``cheb_points(N)`` to Chebyshev coefficients (along axis 0)."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] == 0:
        raise ValueError("empty value array")
    n = v.shape[0] - 1
    if n == 0:
        return v.copy()
    c = dct(v, type=1, axis=0) / n
    c[0] *= 0.5
    c[-1] *= 0.5
    return c


def coeffs2vals(c) -> np.ndarray:
    """Inverse of :func:`vals2coeffs`."""
    c = np.array(c, dtype=float)
    if c.shape[0] == 0:
        raise ValueError("empty coefficient array")
    if c.shape[0] == 1:
        return c
    c[0] *= 2.0
    c[-1] *= 2.0
    return 0.5 * dct(c, type=1, axis=0)


def unit_moments(n: int) -> np.ndarray:
    """``int_{-1}^{1} T_k(t) dt`` for ``k = 0..n``."""
    k = np.arange(n + 1, dtype=float)
    m = np.zeros(n + 1)
    even = (np.arange(n + 1) % 2) == 0
    m[even] = 2.0 / (1.0 - k[even] ** 2)
    return m


def cc_weights(n: int, d=Domain1D(-1.0, 1.0)) -> np.ndarray:
    """Clenshaw-Curtis weights for ``cheb_points(n, d)``.

    Exact for polynomials of degree ``<= n``.
    """
    d = as_domain(d)
    if n == 0:
        return np.array([d.length])
    g = unit_moments(n)
    g[0] *= 0.5
    g[-1] *= 0.5
    g[1:-1] *= 0.5
    w = dct(g, type=1) / n
    w[1:-1] *= 2.0
    return 0.5 * d.length * w


def _trim(c: np.ndarray, tol: float = 0.0) -> np.ndarray:
    """Drop trailing coefficients with ``|c_k| <= tol`` (keeps at least one)."""
    big = np.nonzero(np.abs(c) > tol)[0]
    if big.size == 0:
        return np.zeros(1)
    return c[: big[-1] + 1].copy()


# ---------------------------------------------------------------------------
# the series type


@dataclass(frozen=True, eq=False)
class ChebSeries:
    """A polynomial on ``domain`` stored by Chebyshev coefficients."""

    domain: Domain1D
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if c.size == 0:
            c = np.zeros(1)
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "domain", as_domain(self.domain))

    @classmethod
    def constant(cls, value: float, d) -> "ChebSeries":
        return cls(as_domain(d), np.array([float(value)]))

    @classmethod
    def identity(cls, d) -> "ChebSeries":
        d = as_domain(d)
        return cls(d, np.array([0.5 * (d.a + d.b), 0.5 * d.length]))

    @classmethod
    def from_values(cls, values, d) -> "ChebSeries":
        return cls(as_domain(d), vals2coeffs(np.asarray(values, dtype=float)))

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    @property
    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def __call__(self, x):
        return evaluate(self, x)

    def values(self, n: int | None = None) -> np.ndarray:
        """Values on ``cheb_points(n)``; ``n`` defaults to the degree."""
        n = self.degree if n is None else n
        return coeffs2vals(_pad(self.coeffs, n + 1))

    def vscale(self) -> float:
        return float(np.max(np.abs(self.values(max(self.degree, 1)))))

    def norm(self) -> float:
        return float(np.sqrt(max(inner_product(self, self), 0.0)))

    def __add__(self, other):
        if isinstance(other, ChebSeries):
            return linear_combination([(1.0, self), (1.0, other)])
        return linear_combination([(1.0, self), (float(other), ChebSeries.constant(1.0, self.domain))])

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, ChebSeries):
            return linear_combination([(1.0, self), (-1.0, other)])
        return self + (-float(other))

    def __neg__(self):
        return ChebSeries(self.domain, -self.coeffs)

    def __mul__(self, other):
        if isinstance(other, ChebSeries):
            return multiply(self, other)
        return ChebSeries(self.domain, float(other) * self.coeffs)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return ChebSeries(self.domain, self.coeffs / float(other))


def _pad(c: np.ndarray, n: int) -> np.ndarray:
    """Zero-pad or truncate along axis 0 to length ``n``."""
    c = np.asarray(c, dtype=float)
    if c.shape[0] >= n:
        return c[:n].copy()
    out = np.zeros((n,) + c.shape[1:])
    out[: c.shape[0]] = c
    return out


def _check_same_domain(*series):
    d0 = series[0].domain
    for s in series[1:]:
        if s.domain != d0:
            raise DomainMismatch(f"domains differ: {d0.as_tuple()} vs {s.domain.as_tuple()}")
    return d0


# ---------------------------------------------------------------------------
# operations


def evaluate(s: ChebSeries, x):
    """Clenshaw evaluation.  Points outside the domain are extrapolated."""
    t = s.domain.to_unit(x)
    out = npcheb.chebval(t, s.coeffs)
    if np.ndim(x) == 0:
        return float(out)
    return out


def tail_threshold(coeffs: np.ndarray, tol: Tolerance, vscale: float | None = None) -> float:
    """Absolute size below which trailing coefficients count as resolved.

    The relative level never drops under the rounding floor of the
    cosine transform, which grows mildly with the length of the series.
    """
    n = coeffs.shape[0]
    scale = float(np.max(np.abs(coeffs))) if vscale is None else vscale
    floor = MACHINE_EPS * max(4.0, np.sqrt(n))
    return max(tol.eps_rel, floor) * scale


def is_resolved(coeffs: np.ndarray, tol: Tolerance, vscale: float | None = None) -> bool:
    n = coeffs.shape[0]
    tail = max(3, n // 8)
    thr = tail_threshold(coeffs, tol, vscale)
    return bool(np.all(np.abs(coeffs[-tail:]) <= thr))


def build_adaptive(
    f: Callable,
    d=Domain1D(-1.0, 1.0),
    tol=None,
    max_log2: int = MAX_LOG2,
) -> ChebSeries:
    """Adaptive Chebyshev interpolant of a vectorised callable ``f``.

    Samples at ``2**k + 1`` points for ``k = 4, 5, ...`` until the trailing
    coefficients fall below the tolerance, then trims the tail.

    Raises
    ------
    NonConvergence
        If ``2**max_log2 + 1`` points do not resolve ``f``.
    """
    d = as_domain(d)
    tol = as_tolerance(tol)
    for k in range(MIN_LOG2, max_log2 + 1):
        n = 2**k
        x = cheb_points(n, d)
        v = np.asarray(f(x), dtype=float) * np.ones_like(x)
        if not np.all(np.isfinite(v)):
            raise NonConvergence("function returned non-finite values")
        c = vals2coeffs(v)
        vscale = float(np.max(np.abs(v)))
        if vscale == 0.0:
            return ChebSeries(d, np.zeros(1))
        if is_resolved(c, tol, max(vscale, np.max(np.abs(c)))):
            thr = tail_threshold(c, tol, max(vscale, np.max(np.abs(c))))
            return ChebSeries(d, _trim(c, thr))
    raise NonConvergence(f"not resolved with {2**max_log2 + 1} points")


def integrate(s: ChebSeries) -> float:
    """Exact definite integral of the stored polynomial over its domain."""
    m = unit_moments(s.degree)
    return float(0.5 * s.domain.length * np.dot(m, s.coeffs))


def _product_values(f: ChebSeries, g: ChebSeries, n: int) -> np.ndarray:
    return coeffs2vals(_pad(f.coeffs, n + 1)) * coeffs2vals(_pad(g.coeffs, n + 1))


def inner_product(f: ChebSeries, g: ChebSeries) -> float:
    """L2 inner product, exact via Clenshaw-Curtis on ``deg f + deg g + 1`` points."""
    d = _check_same_domain(f, g)
    n = next_fast_len(max(f.degree + g.degree, 1), real=True)
    return float(np.dot(cc_weights(n, d), _product_values(f, g, n)))


def multiply(f: ChebSeries, g: ChebSeries) -> ChebSeries:
    d = _check_same_domain(f, g)
    n = f.degree + g.degree
    c = vals2coeffs(_product_values(f, g, n))
    scale = float(np.max(np.abs(f.coeffs))) * float(np.max(np.abs(g.coeffs)))
    return ChebSeries(d, _trim(c, MACHINE_EPS * scale))


def linear_combination(terms: Iterable[tuple[float, ChebSeries]]) -> ChebSeries:
    terms = list(terms)
    if not terms:
        raise ValueError("empty linear combination")
    d = _check_same_domain(*[s for _, s in terms])
    n = max(s.coeffs.size for _, s in terms)
    c = np.zeros(n)
    for alpha, s in terms:
        c[: s.coeffs.size] += float(alpha) * s.coeffs
    return ChebSeries(d, _trim(c))


def resample(s: ChebSeries, n: int) -> np.ndarray:
    """Coefficients of ``s`` zero-padded (or truncated) to length ``n``."""
    return _pad(s.coeffs, n)


def legendre_basis(k: int, d=Domain1D(-1.0, 1.0)):
    """L2-orthonormal shifted Legendre polynomials ``P_0..P_{k-1}`` on ``d``."""
    from .quasimatrix import Quasimatrix

    if k < 1:
        raise ValueError("k must be positive")
    d = as_domain(d)
    t = unit_points(k - 1)
    P = np.column_stack([eval_legendre(j, t) * np.sqrt((2 * j + 1) / d.length) for j in range(k)])
    C = vals2coeffs(P)
    # P_j has exactly degree j; clear rounding above the diagonal
    C[np.tril_indices(k, -1)] = 0.0
    return Quasimatrix(d, C)


def chebseries_from_callable_on_points(f: Callable, n: int, d) -> ChebSeries:
    """Non-adaptive interpolant through ``n + 1`` Chebyshev points."""
    d = as_domain(d)
    return ChebSeries(d, vals2coeffs(np.asarray(f(cheb_points(n, d)), dtype=float)))


def barycentric_matrix(x_new: Sequence[float], n: int, d) -> np.ndarray:
    """Matrix mapping values on ``cheb_points(n, d)`` to values at ``x_new``."""
    d = as_domain(d)
    nodes = cheb_points(n, d)
    w = np.ones(n + 1)
    w[1::2] = -1.0
    w[0] *= 0.5
    w[-1] *= 0.5
    x_new = np.asarray(x_new, dtype=float)
    diff = x_new[:, None] - nodes[None, :]
    exact = diff == 0.0
    diff[exact] = 1.0
    M = w[None, :] / diff
    M /= M.sum(axis=1, keepdims=True)
    rows = np.nonzero(exact.any(axis=1))[0]
    for r in rows:
        M[r] = exact[r].astype(float)
    return M
