"""Benchmark operators, random forcings and dataset assembly.

Forcings are Gaussian-process samples drawn at the collocation points of a
spectral reference solver; both forcings and responses are then resampled
onto uniform sensor grids, which is what a learner gets to see.

Supported problems (``theta`` is the model parameter):

=====================  ====================================  ==================
id                     equation                              domain, bc
=====================  ====================================  ==================
poisson                ``-u'' = f``                          [0, 1], Dirichlet
advection_diffusion    ``u'' + theta u' = f``                [-1, 1], Dirichlet
airy                   ``u'' - theta^2 x u = f``             [0, 1], Dirichlet
helmholtz              ``u'' + theta^2 u = f``               [0, 1], Dirichlet
fractional_laplacian   ``(-Delta)^theta u = f``              [-pi/2, pi/2], periodic
=====================  ====================================  ==================
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import cho_factor, lu_factor, lu_solve

from .chebcore import ChebSeries, Domain1D, as_domain, barycentric_matrix, cheb_points, vals2coeffs
from .errors import FactorizationFailure, Resonance, ShapeMismatch, SingularOperator, ZeroMeanViolation

PROBLEMS = ("poisson", "advection_diffusion", "airy", "helmholtz", "fractional_laplacian")
DEFAULT_DOMAINS = {
    "poisson": (0.0, 1.0),
    "advection_diffusion": (-1.0, 1.0),
    "airy": (0.0, 1.0),
    "helmholtz": (0.0, 1.0),
    "fractional_laplacian": (-math.pi / 2, math.pi / 2),
}
DEFAULT_SENSORS = {"fractional_laplacian": 600}
# kernel nodes per variable in the training loss; the fractional kernel has a cusp on x = s
LOSS_NODES = {"fractional_laplacian": 128}
DEFAULT_LOSS_NODES = 64
COLLOCATION_N = 512
JITTER_MAX = 1e-8
VALIDATION_FRACTION = 0.05
ZERO_MEAN_TOL = 1e-10


@dataclass(frozen=True)
class GpKernel:
    """Covariance kernel of the forcing process.

    ``l`` is the absolute length scale; ``sigma_norm = l / (b - a)`` is the
    domain-independent version quoted in experiment configs.
    """

    kind: str
    l: float
    p: float | None = None
    sigma_norm: float | None = None

    def __post_init__(self):
        if self.kind not in ("se", "periodic"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if not self.l > 0:
            raise ValueError("length scale must be positive")
        if self.kind == "periodic" and not (self.p and self.p > 0):
            raise ValueError("periodic kernel needs a positive period")

    @classmethod
    def for_domain(cls, kind: str, sigma: float, d, period: float | None = None) -> "GpKernel":
        d = as_domain(d)
        if kind == "periodic" and period is None:
            period = d.length
        return cls(kind, sigma * d.length, period, sigma)

    def __call__(self, x, s):
        r = np.abs(np.asarray(x, dtype=float) - np.asarray(s, dtype=float))
        if self.kind == "se":
            return np.exp(-(r**2) / (2.0 * self.l**2))
        return np.exp(-2.0 * np.sin(np.pi * r / self.p) ** 2 / self.l**2)


@dataclass(frozen=True)
class ProblemSpec:
    id: str
    theta: float = 0.0
    domain: Domain1D = None
    bc: str = None

    def __post_init__(self):
        if self.id not in PROBLEMS:
            raise ValueError(f"unknown problem {self.id!r}; expected one of {PROBLEMS}")
        object.__setattr__(self, "theta", float(self.theta))
        object.__setattr__(self, "domain", as_domain(self.domain or DEFAULT_DOMAINS[self.id]))
        if self.bc is None:
            object.__setattr__(self, "bc", "periodic" if self.id == "fractional_laplacian" else "dirichlet")
        if self.id == "fractional_laplacian" and not 0.0 < self.theta < 1.0:
            raise ValueError("fractional order must lie in (0, 1)")

    @property
    def periodic(self) -> bool:
        return self.bc == "periodic"

    def as_dict(self) -> dict:
        return {"id": self.id, "theta": self.theta, "domain": list(self.domain.as_tuple()), "bc": self.bc}


@dataclass(frozen=True, eq=False)
class DatasetFile:
    """Sampled forcing/response pairs on uniform sensor grids.

    ``F`` is ``N_s x N_samples`` and ``U`` is ``N_x x N_samples``;
    ``U_clean`` keeps the noise-free responses so noisy-trained models can be
    tested against clean data.
    """

    problem: ProblemSpec
    x: np.ndarray
    s: np.ndarray
    F: np.ndarray
    U: np.ndarray
    U_clean: np.ndarray
    zeta: float
    seed: int
    train_idx: np.ndarray
    val_idx: np.ndarray
    kernel: dict = field(default_factory=dict)

    @property
    def theta(self) -> float:
        return self.problem.theta

    @property
    def n_samples(self) -> int:
        return self.F.shape[1]

    def subset(self, idx, clean: bool = False):
        """``(F, U)`` restricted to the sample indices ``idx``."""
        idx = np.asarray(idx, dtype=int)
        U = self.U_clean if clean else self.U
        return self.F[:, idx], U[:, idx]


# ---------------------------------------------------------------- forcings


def _sample_seed(seed: int, stream: int, j: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, j)))


def sample_gp(kernel: GpKernel, grid, n: int, seed: int) -> np.ndarray:
    """``n`` zero-mean GP samples on ``grid`` (one per column).

    The covariance matrix is Cholesky-factorised with diagonal jitter starting
    at ``1e-14 * trace / N`` and growing tenfold up to ``1e-8``.  Column ``j``
    draws its standard normals from its own seed stream.
    """
    grid = np.asarray(grid, dtype=float)
    if n < 1:
        raise ValueError("need at least one sample")
    K = kernel(grid[:, None], grid[None, :])
    N = grid.size
    jitter = 1e-14 * (abs(np.trace(K)) / N or 1.0)
    while True:
        try:
            L, _ = cho_factor(K + jitter * np.eye(N), lower=True)
            break
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if not jitter <= JITTER_MAX * (1 + 1e-12):
                raise FactorizationFailure(f"covariance not factorisable with jitter <= {JITTER_MAX}") from None
    L = np.tril(L)
    Z = np.column_stack([_sample_seed(seed, 0, j).standard_normal(N) for j in range(n)])
    return L @ Z


# ---------------------------------------------------------------- solvers


def cheb_diff(n: int, d) -> tuple[np.ndarray, np.ndarray]:
    """Points and first-derivative matrix on ``cheb_points(n, d)``."""
    d = as_domain(d)
    t = cheb_points(n, Domain1D(-1.0, 1.0))
    if n == 0:
        return cheb_points(0, d), np.zeros((1, 1))
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(n + 1)
    dT = t[:, None] - t[None, :]
    D = np.outer(c, 1.0 / c) / (dT + np.eye(n + 1))
    D -= np.diag(D.sum(axis=1))
    return cheb_points(n, d), D * (2.0 / d.length)


def collocation_points(problem: ProblemSpec, n: int = COLLOCATION_N) -> np.ndarray:
    """Nodes at which forcings are drawn and the reference solver works."""
    d = problem.domain
    if problem.periodic:
        return d.a + d.length * np.arange(n) / n
    return cheb_points(n, d)


def _operator_matrix(problem: ProblemSpec, n: int):
    x, D = cheb_diff(n, problem.domain)
    D2 = D @ D
    th = problem.theta
    if problem.id == "poisson":
        A = -D2
    elif problem.id == "advection_diffusion":
        A = D2 + th * D
    elif problem.id == "airy":
        A = D2 - th**2 * np.diag(x)
    elif problem.id == "helmholtz":
        if abs(math.sin(th)) < 1e-8 * max(1.0, th):
            raise SingularOperator(f"theta={th} is a Dirichlet resonance")
        A = D2 + th**2 * np.eye(n + 1)
    else:
        raise ValueError(f"{problem.id} is not a collocation problem")
    A = A.copy()
    # Dirichlet rows
    A[0] = 0.0
    A[-1] = 0.0
    A[0, 0] = 1.0
    A[-1, -1] = 1.0
    return x, A


def _periodic_symbol(problem: ProblemSpec, n: int) -> np.ndarray:
    """Reciprocal multiplier applied to each FFT mode; the mean mode maps to 0."""
    k = np.fft.rfftfreq(n, d=problem.domain.length / n) * 2.0 * np.pi
    sym = np.zeros_like(k)
    sym[1:] = (k[1:] ** 2) ** (-problem.theta)
    return sym


def solve_values(problem: ProblemSpec, fvals: np.ndarray, n: int = COLLOCATION_N) -> np.ndarray:
    """Responses at :func:`collocation_points` for forcings sampled there.

    ``fvals`` may hold several forcings as columns.
    """
    fvals = np.asarray(fvals, dtype=float)
    if problem.periodic:
        if fvals.shape[0] != n:
            raise ShapeMismatch(f"expected {n} periodic samples, got {fvals.shape[0]}")
        mean = fvals.mean(axis=0)
        if np.any(np.abs(mean) > ZERO_MEAN_TOL * np.maximum(np.abs(fvals).max(axis=0), 1.0)):
            raise ZeroMeanViolation("periodic fractional problem needs zero-mean forcing")
        fh = np.fft.rfft(fvals, axis=0)
        sym = _periodic_symbol(problem, n)
        return np.fft.irfft(fh * sym.reshape((-1,) + (1,) * (fvals.ndim - 1)), n=n, axis=0)
    x, A = _operator_matrix(problem, n)
    if fvals.shape[0] != n + 1:
        raise ShapeMismatch(f"expected {n + 1} collocation samples, got {fvals.shape[0]}")
    rhs = fvals.copy()
    rhs[0] = 0.0
    rhs[-1] = 0.0
    lu = lu_factor(A)
    if not np.all(np.isfinite(lu[0])) or np.min(np.abs(np.diag(lu[0]))) == 0.0:
        raise SingularOperator("collocation matrix is singular")
    return lu_solve(lu, rhs)


def resample_matrix(problem: ProblemSpec, x_new, n: int = COLLOCATION_N) -> np.ndarray:
    """Interpolation matrix from collocation values to the points ``x_new``."""
    x_new = np.asarray(x_new, dtype=float)
    if not problem.periodic:
        return barycentric_matrix(x_new, n, problem.domain)
    # trigonometric interpolation through n equispaced nodes (n even: split Nyquist mode)
    d = problem.domain
    k = np.fft.fftfreq(n, d=1.0 / n)
    phase = np.exp(2j * np.pi * np.outer((x_new - d.a) / d.length, k))
    if n % 2 == 0:
        ny = n // 2
        phase[:, ny] = np.cos(2 * np.pi * ny * (x_new - d.a) / d.length)
    nodes = np.exp(-2j * np.pi * np.outer(k, np.arange(n)) / n)
    return np.real(phase @ nodes) / n


def solve(problem: ProblemSpec, f: Callable, x=None, n: int = COLLOCATION_N):
    """Reference solution for a forcing given as a vectorised callable.

    Returns a :class:`ChebSeries` for Dirichlet problems, or values at ``x``
    when sensor locations are given (always the case for periodic problems).
    """
    pts = collocation_points(problem, n)
    u = solve_values(problem, np.asarray(f(pts), dtype=float), n)
    if x is not None:
        return resample_matrix(problem, x, n) @ u
    if problem.periodic:
        raise ValueError("periodic solutions need sensor locations x")
    return ChebSeries(problem.domain, vals2coeffs(u))


# ---------------------------------------------------------------- closed forms


def poisson_green(x, s):
    x, s = np.asarray(x, dtype=float), np.asarray(s, dtype=float)
    return np.where(x <= s, x * (1.0 - s), s * (1.0 - x))


def advection_diffusion_green(theta: float) -> Callable:
    """Kernel of ``u'' + theta u' = f`` on [-1, 1] with zero Dirichlet data."""
    th = float(theta)
    if th == 0.0:
        return lambda x, s: -0.5 * (1 + np.minimum(x, s)) * (1 - np.maximum(x, s))

    def g(x, s):
        x, s = np.asarray(x, dtype=float), np.asarray(s, dtype=float)
        lo, hi = np.minimum(x, s), np.maximum(x, s)
        phi1 = -np.expm1(-th * (lo + 1.0))
        phi2 = -np.expm1(-th * (hi - 1.0))
        return phi1 * phi2 * np.exp(th * s) / (2.0 * th * math.sinh(th))

    return g


def helmholtz_green(theta: float) -> Callable:
    """Kernel of ``u'' + theta^2 u = f`` on [0, 1] with zero Dirichlet data."""
    th = float(theta)
    if abs(math.sin(th)) < 1e-12:
        raise Resonance(f"theta={th} is a Dirichlet resonance")

    def g(x, s):
        x, s = np.asarray(x, dtype=float), np.asarray(s, dtype=float)
        lo, hi = np.minimum(x, s), np.maximum(x, s)
        return np.sin(th * lo) * np.sin(th * (hi - 1.0)) / (th * math.sin(th))

    return g


def exact_green(problem: ProblemSpec) -> Callable | None:
    """Closed-form kernel when one is known, else ``None``."""
    if problem.id == "poisson":
        return poisson_green
    if problem.id == "advection_diffusion":
        return advection_diffusion_green(problem.theta)
    if problem.id == "helmholtz":
        return helmholtz_green(problem.theta)
    return None


def helmholtz_singular_values(theta: float, k_max: int) -> np.ndarray:
    """Signed eigenvalues ``1 / (theta^2 - (k pi)^2)`` of the Helmholtz kernel, k = 1..k_max."""
    k = np.arange(1, k_max + 1)
    gap = theta**2 - (k * np.pi) ** 2
    if np.any(np.abs(gap) < 1e-12 * max(1.0, theta**2)):
        raise Resonance(f"theta={theta} coincides with k*pi")
    return 1.0 / gap


def helmholtz_critical_theta() -> float:
    """Parameter where the two leading Helmholtz modes have equal magnitude."""
    return math.sqrt(2.5) * math.pi


# ---------------------------------------------------------------- datasets


def add_noise(U: np.ndarray, zeta: float, seed: int) -> np.ndarray:
    """``u_ij + zeta * c_ij * mean_j |u_ij|`` with iid standard normal ``c``."""
    U = np.asarray(U, dtype=float)
    if zeta < 0:
        raise ValueError("noise level must be nonnegative")
    if zeta == 0:
        return U.copy()
    c = _sample_seed(seed, 1, 0).standard_normal(U.shape)
    return U + zeta * c * np.mean(np.abs(U), axis=0, keepdims=True)


def split_indices(n: int, seed: int, fraction: float = VALIDATION_FRACTION):
    """Seeded train/validation split; the validation part holds ``round(fraction n)`` samples."""
    n_val = int(round(fraction * n)) if n > 1 else 0
    perm = _sample_seed(seed, 2, 0).permutation(n)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def default_kernel(problem: ProblemSpec, sigma: float = 1e-2) -> GpKernel:
    kind = "periodic" if problem.periodic else "se"
    return GpKernel.for_domain(kind, sigma, problem.domain)


def make_dataset(
    problem: ProblemSpec,
    kernel: GpKernel | None = None,
    n_samples: int = 100,
    nx: int | None = None,
    ns: int | None = None,
    zeta: float = 0.0,
    seed: int = 0,
    n_colloc: int = COLLOCATION_N,
) -> DatasetFile:
    """Sample forcings, solve, resample to uniform sensors, add noise and split."""
    kernel = kernel or default_kernel(problem)
    nx = nx or DEFAULT_SENSORS.get(problem.id, 500)
    ns = ns or DEFAULT_SENSORS.get(problem.id, 500)
    d = problem.domain
    pts = collocation_points(problem, n_colloc)
    Fc = sample_gp(kernel, pts, n_samples, seed)
    if problem.periodic:
        Fc = Fc - Fc.mean(axis=0, keepdims=True)
    Uc = solve_values(problem, Fc, n_colloc)
    x = np.linspace(d.a, d.b, nx)
    s = np.linspace(d.a, d.b, ns)
    F = resample_matrix(problem, s, n_colloc) @ Fc
    U = resample_matrix(problem, x, n_colloc) @ Uc
    train, val = split_indices(n_samples, seed)
    meta = {"kind": kernel.kind, "l": kernel.l, "p": kernel.p, "sigma_norm": kernel.sigma_norm, "n_colloc": n_colloc}
    return DatasetFile(problem, x, s, F, add_noise(U, zeta, seed), U, float(zeta), int(seed), train, val, meta)
