"""Interpolation of singular value expansions across a model parameter.

A library of models ``G(x, s; theta_j) = U_j(s) diag(sigma_j) V_j(x)*`` is
interpolated to a new ``theta*`` by

1. picking the library member ``theta_0`` closest to ``theta*``;
2. reordering and sign-correcting every member's modes against ``theta_0``;
3. lifting ``U_j`` and ``V_j`` to the tangent space of the Stiefel manifold
   at ``U_0`` and ``V_0``, Lagrange-interpolating there (and interpolating
   ``sigma`` and the homogeneous term directly), then retracting with ``qf``;
4. matching the retracted modes to ``theta_0`` once more.

The module also carries the oracles used to check convergence orders of the
projection and of the retraction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import expm

from .bivariate import Sve
from .chebcore import ChebSeries, Domain1D, _pad, integrate
from .errors import DomainMismatch, DuplicateNodes, NotOrthonormalBase, RankMismatch, ShapeMismatch
from .quasimatrix import Quasimatrix, qf, qm_inner

ORTHO_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SveModel:
    """Learned or exact Green's function in SVE form plus homogeneous part ``H``.

    ``U`` holds functions of ``s``, ``V`` functions of ``x``; the kernel is
    ``sum_k sigma_k U_k(s) V_k(x)`` and responses are
    ``u = V diag(sigma) (U* f) + H``.
    """

    U: Quasimatrix
    sigma: np.ndarray
    V: Quasimatrix
    H: ChebSeries | None = None
    theta: float = 0.0
    flags: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        sig = np.array(self.sigma, dtype=float).reshape(-1)
        sig.flags.writeable = False
        object.__setattr__(self, "sigma", sig)
        object.__setattr__(self, "theta", float(self.theta))
        if not (self.U.K == self.V.K == sig.size):
            raise ShapeMismatch(f"rank mismatch: U {self.U.K}, V {self.V.K}, sigma {sig.size}")
        if self.H is None:
            object.__setattr__(self, "H", ChebSeries.constant(0.0, self.V.domain))
        if self.H.domain != self.V.domain:
            raise DomainMismatch("homogeneous term must live on the x-domain")

    @classmethod
    def from_sve(cls, s: Sve, H: ChebSeries | None = None, theta: float = 0.0, flags=(), meta=None) -> "SveModel":
        return cls(s.U, s.sigma, s.V, H, theta, tuple(flags), dict(meta or {}))

    @property
    def rank(self) -> int:
        return int(self.sigma.size)

    @property
    def xdomain(self) -> Domain1D:
        return self.V.domain

    @property
    def sdomain(self) -> Domain1D:
        return self.U.domain

    def __call__(self, x, s):
        x, s = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(s, dtype=float))
        if self.rank == 0:
            out = np.zeros(x.shape)
        else:
            out = np.einsum("...k,k,...k->...", self.U(s), self.sigma, self.V(x))
        return float(out) if out.ndim == 0 else out

    def grid(self, x, s) -> np.ndarray:
        """Kernel values on the tensor grid ``x x s`` (rows follow ``x``)."""
        if self.rank == 0:
            return np.zeros((np.size(x), np.size(s)))
        return (self.V(np.asarray(x, dtype=float)) * self.sigma) @ self.U(np.asarray(s, dtype=float)).T

    def truncate(self, k: int) -> "SveModel":
        return replace(self, U=self.U.truncate(k), sigma=self.sigma[:k], V=self.V.truncate(k))

    def permute(self, perm) -> "SveModel":
        perm = list(perm)
        return replace(self, U=self.U.select(perm), sigma=self.sigma[perm], V=self.V.select(perm))

    def as_sve(self) -> Sve:
        return Sve(self.U, self.sigma, self.V)

    def apply_values(self, s, F, x) -> np.ndarray:
        """Responses at ``x`` for forcings sampled on ``s`` (columns of ``F``).

        The ``s`` integral uses the trapezoid rule on the sensor grid.
        """
        from .ratnet import trapezoid_weights

        F = np.asarray(F, dtype=float)
        Hx = self.H(np.asarray(x, dtype=float))
        if self.rank == 0:
            return np.repeat(np.reshape(Hx, (-1, 1)), F.shape[1] if F.ndim > 1 else 1, axis=1)
        coef = self.U(np.asarray(s, dtype=float)).T @ (trapezoid_weights(s)[:, None] * F.reshape(len(s), -1))
        return self.V(np.asarray(x, dtype=float)) @ (self.sigma[:, None] * coef) + np.reshape(Hx, (-1, 1))

    def orthonormality_error(self) -> float:
        K = self.rank
        if K == 0:
            return 0.0
        I = np.eye(K)
        return float(max(np.abs(qm_inner(self.U, self.U) - I).max(), np.abs(qm_inner(self.V, self.V) - I).max()))


@dataclass(frozen=True, eq=False)
class ModelLibrary:
    models: tuple

    def __post_init__(self):
        models = tuple(sorted(self.models, key=lambda m: m.theta))
        thetas = [m.theta for m in models]
        if len(set(thetas)) != len(thetas):
            raise DuplicateNodes(f"library thetas are not distinct: {thetas}")
        object.__setattr__(self, "models", models)

    @property
    def thetas(self) -> np.ndarray:
        return np.array([m.theta for m in self.models])

    @property
    def rank(self) -> int:
        return min(m.rank for m in self.models)

    def aligned(self) -> list[SveModel]:
        """Members truncated to the common rank."""
        K = self.rank
        return [m.truncate(K) for m in self.models]


@dataclass(frozen=True, eq=False)
class TangentElement:
    Gamma: Quasimatrix
    base: Quasimatrix | None = None

    def skew_error(self) -> float:
        """``||Gamma* Phi + Phi* Gamma|| / ||Gamma||`` for the stored base point."""
        if self.base is None:
            return 0.0
        A = qm_inner(self.Gamma, self.base)
        return float(np.linalg.norm(A + A.T) / max(self.Gamma.h_norm(), 1e-300))


# ---------------------------------------------------------------- steps


def select_base(thetas, theta_star: float) -> int:
    """Index of the node closest to ``theta_star``; ties go to the smaller node."""
    if isinstance(thetas, ModelLibrary):
        thetas = thetas.thetas
    thetas = np.asarray(thetas, dtype=float)
    dist = np.abs(thetas - theta_star)
    best = np.flatnonzero(dist == dist.min())
    return int(best[np.argmin(thetas[best])])


def mode_permutation(model: SveModel, base: SveModel) -> np.ndarray:
    """Greedy assignment: base mode ``k`` takes the unused model mode of largest ``|<U_l, U0_k>|``."""
    if model.rank != base.rank:
        raise RankMismatch(f"ranks differ: {model.rank} vs {base.rank}")
    C = np.abs(qm_inner(model.U, base.U))
    perm = np.empty(model.rank, dtype=int)
    free = np.ones(model.rank, dtype=bool)
    for k in range(model.rank):
        col = np.where(free, C[:, k], -np.inf)
        perm[k] = int(np.argmax(col))
        free[perm[k]] = False
    return perm


def match_modes(model: SveModel, base: SveModel) -> SveModel:
    """Reorder ``model``'s modes (U, sigma and V together) to follow ``base``."""
    return model.permute(mode_permutation(model, base))


def fix_signs(model: SveModel, base: SveModel) -> SveModel:
    """Flip ``U_k`` and ``V_k`` together wherever ``<U_k, U0_k> < 0``."""
    d = np.diag(qm_inner(model.U, base.U))
    sgn = np.where(d < 0, -1.0, 1.0)
    if np.all(sgn > 0):
        return model
    return replace(model, U=model.U @ np.diag(sgn), V=model.V @ np.diag(sgn))


def _sym(A):
    return 0.5 * (A + A.T)


def project_tangent(base: Quasimatrix, point: Quasimatrix) -> TangentElement:
    """Orthogonal projection ``Psi - Phi sym(Phi* Psi)`` onto the tangent space at ``Phi``."""
    G = qm_inner(base, base)
    if np.abs(G - np.eye(base.K)).max() > ORTHO_TOL:
        raise NotOrthonormalBase("base point columns are not orthonormal")
    if point.K != base.K:
        raise RankMismatch(f"ranks differ: {point.K} vs {base.K}")
    return TangentElement(point - base @ _sym(qm_inner(base, point)), base)


def lagrange_weights(nodes, theta_star: float) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=float)
    if len(set(nodes.tolist())) != nodes.size:
        raise DuplicateNodes(f"interpolation nodes are not distinct: {nodes.tolist()}")
    w = np.ones(nodes.size)
    for j in range(nodes.size):
        for m in range(nodes.size):
            if m != j:
                w[j] *= (theta_star - nodes[m]) / (nodes[j] - nodes[m])
    return w


def _combine(values, w):
    v0 = values[0]
    if isinstance(v0, TangentElement):
        return TangentElement(_combine([v.Gamma for v in values], w), v0.base)
    if isinstance(v0, Quasimatrix):
        n = max(v.coeffs.shape[0] for v in values)
        return Quasimatrix(v0.domain, sum(wj * _pad(v.coeffs, n) for wj, v in zip(w, values)))
    if isinstance(v0, ChebSeries):
        n = max(v.coeffs.size for v in values)
        return ChebSeries(v0.domain, sum(wj * _pad(v.coeffs, n) for wj, v in zip(w, values)))
    return sum(wj * np.asarray(v, dtype=float) for wj, v in zip(w, values))


def lagrange_interp(nodes, values, theta_star: float):
    """``sum_j l_j(theta_star) value_j`` with Lagrange cardinal weights ``l_j``."""
    if len(values) != len(nodes):
        raise ShapeMismatch("one value per node is required")
    return _combine(list(values), lagrange_weights(nodes, theta_star))


def interpolate_models(library: ModelLibrary, theta_star: float) -> SveModel:
    """Model at ``theta_star`` from a library of at least two models."""
    if not isinstance(library, ModelLibrary):
        library = ModelLibrary(tuple(library))
    if len(library.models) < 2:
        raise ValueError("interpolation needs at least two library models")
    models = library.aligned()
    thetas = library.thetas
    i0 = select_base(thetas, theta_star)
    base = models[i0]
    lifted = [fix_signs(match_modes(m, base), base) for m in models]
    GU = [project_tangent(base.U, m.U) for m in lifted]
    GV = [project_tangent(base.V, m.V) for m in lifted]
    w = lagrange_weights(thetas, theta_star)
    gU = _combine(GU, w).Gamma
    gV = _combine(GV, w).Gamma
    sigma = _combine([m.sigma for m in lifted], w)
    H = _combine([m.H for m in lifted], w)
    out = SveModel(qf(base.U + gU), sigma, qf(base.V + gV), H, theta_star)
    out = fix_signs(match_modes(out, base), base)
    flags = []
    if theta_star < thetas.min() or theta_star > thetas.max():
        flags.append("extrapolation")
    if np.any(out.sigma < 0):
        flags.append("negative_sigma")
    meta = {"library_thetas": thetas.tolist(), "base_index": i0, "base_theta": float(thetas[i0]), "weights": w.tolist()}
    return replace(out, flags=tuple(flags), meta=meta)


# ---------------------------------------------------------------- order oracles


def stiefel_exp(base: Quasimatrix, tangent: TangentElement, t: float) -> Quasimatrix:
    """Geodesic of the embedded (Euclidean) metric through ``base`` with velocity ``Gamma``.

    ``Y(t) = [Phi, Gamma] expm(t [[A, -S], [I, A]]) [I; 0] expm(-t A)`` with
    ``A = Phi* Gamma`` and ``S = Gamma* Gamma``.
    """
    G = tangent.Gamma
    K = base.K
    A = qm_inner(base, G)
    S = qm_inner(G, G)
    M = np.block([[A, -S], [np.eye(K), A]])
    C = expm(t * M)[:, :K] @ expm(-t * A)
    n = max(base.coeffs.shape[0], G.coeffs.shape[0])
    Y = np.hstack([_pad(base.coeffs, n), _pad(G.coeffs, n)])
    return Quasimatrix(base.domain, Y @ C)


def fit_slope(ts, errs) -> float:
    """Least-squares slope of ``log err`` against ``log t``."""
    return float(np.polyfit(np.log(ts), np.log(errs), 1)[0])


def random_base_and_tangent(K: int = 4, degree: int = 12, seed: int = 0, d=(-1.0, 1.0), scale: float = 1.0):
    """Orthonormal ``Phi`` and a unit-norm tangent ``Gamma`` built from random polynomials."""
    rng = np.random.default_rng(seed)
    decay = 1.0 / (1.0 + np.arange(degree + 1))[:, None] ** 2
    Phi = qf(Quasimatrix(d, rng.standard_normal((degree + 1, K)) * decay))
    T = project_tangent(Phi, Quasimatrix(d, rng.standard_normal((degree + 1, K)) * decay))
    G = T.Gamma * (scale / T.Gamma.h_norm())
    return Phi, TangentElement(G, Phi)


def retraction_errors(Phi: Quasimatrix, T: TangentElement, ts) -> np.ndarray:
    """``||qf(Phi + t Gamma) - (Phi + t Gamma)||_H`` for each ``t``."""
    out = []
    for t in ts:
        P = Phi + t * T.Gamma
        out.append((qf(P) - P).h_norm())
    return np.array(out)


def projection_errors(Phi: Quasimatrix, T: TangentElement, ts) -> np.ndarray:
    """``||P_Phi(exp_Phi(t Gamma) - Phi) - t Gamma||_H`` for each ``t``."""
    out = []
    for t in ts:
        Y = stiefel_exp(Phi, T, t)
        D = project_tangent(Phi, Y - Phi).Gamma
        out.append((D - t * T.Gamma).h_norm())
    return np.array(out)


def verify_orders(seed: int = 0, K: int = 4, ts=None) -> dict:
    """Fitted log-log slopes of the retraction and projection errors."""
    ts = np.logspace(-3, -1, 9) if ts is None else np.asarray(ts, dtype=float)
    Phi, T = random_base_and_tangent(K=K, seed=seed)
    r = retraction_errors(Phi, T, ts)
    p = projection_errors(Phi, T, ts)
    return {
        "t": ts.tolist(),
        "retraction_errors": r.tolist(),
        "projection_errors": p.tolist(),
        "retraction_slope": fit_slope(ts, r),
        "projection_slope": fit_slope(ts, p),
        "tangent_norm": T.Gamma.h_norm(),
    }


def kernel_l2_distance(a: SveModel, b: SveModel) -> float:
    """``||G_a - G_b||`` in ``L2`` of the rectangle, from the SVE factors directly."""
    UaUb = qm_inner(a.U, b.U)
    VaVb = qm_inner(a.V, b.V)
    sa, sb = a.sigma, b.sigma
    val = np.sum(sa**2) + np.sum(sb**2) - 2.0 * sa @ (UaUb * VaVb) @ sb
    # exact orthonormality is assumed for the squared-norm terms
    return float(np.sqrt(max(val, 0.0)))



def _with_constant(Q: Quasimatrix) -> tuple[Quasimatrix, Quasimatrix]:
    """Orthonormal basis of ``span(Q, 1)`` and the mean-free part of ``Q``."""
    d = Q.domain
    e = Quasimatrix(d, np.array([[1.0 / np.sqrt(d.length)]]))
    n = max(Q.coeffs.shape[0], 1)
    B = qf(Quasimatrix(d, np.hstack([_pad(Q.coeffs, n), _pad(e.coeffs, n)])))
    return B, Q - e @ qm_inner(e, Q)


def project_zero_mean(model: SveModel) -> SveModel:
    """Restrict the kernel to mean-free forcings and mean-free responses.

    Returns the SVE of ``(I - P_x) G (I - P_s)`` with ``P`` the projection
    onto constants, and subtracts the mean of ``H``.  Periodic data with
    zero-mean forcings cannot see the constant directions, so a learned kernel
    carries arbitrary content there; removing it keeps mode matching across a
    library meaningful.  The rank is unchanged.
    """
    if model.rank == 0:
        BU = BV = None
    else:
        BU, Up = _with_constant(model.U)
        BV, Vp = _with_constant(model.V)
        core = qm_inner(BV, Vp) @ np.diag(model.sigma) @ qm_inner(BU, Up).T
        W, S, Zt = np.linalg.svd(core)
        K = model.rank
    c = model.H.coeffs.copy()
    c[0] -= integrate(model.H) / model.H.domain.length
    H = ChebSeries(model.H.domain, c)
    if BU is None:
        return replace(model, H=H)
    return replace(model, U=BU @ Zt.T[:, :K], sigma=S[:K], V=BV @ W[:, :K], H=H)
