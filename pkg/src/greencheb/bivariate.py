"""Low-rank bivariate kernels: cross approximation and singular value expansion.

A kernel ``g(x, s)`` on ``xdomain x sdomain`` is approximated as

    g(x, s) ~ sum_k D_k C_k(s) R_k(x)

where each ``C_k`` is the residual along the line ``x = x_k`` through the k-th
pivot, ``R_k`` the residual along ``s = s_k``, and ``D_k`` the reciprocal of
the residual at the pivot.  :func:`sve` turns this into ``U diag(sigma) V*``
with orthonormal quasimatrices ``U`` (functions of ``s``) and ``V``
(functions of ``x``).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .chebcore import (
    MACHINE_EPS,
    ChebSeries,
    Domain1D,
    Tolerance,
    as_domain,
    as_tolerance,
    cheb_points,
    tail_threshold,
    vals2coeffs,
)
from .errors import DomainMismatch, NonConvergence
from .quasimatrix import Quasimatrix, householder_qr, qm_inner

PROBE_START = 17
PROBE_MAX = 2049
RANK_FACTOR = 4
SLICE_MAX_LOG2 = 16


class MaxRankWarning(UserWarning):
    """Cross approximation stopped at ``max_rank`` before reaching tolerance."""


@dataclass(frozen=True, eq=False)
class BivariateCdr:
    xdomain: Domain1D
    sdomain: Domain1D
    C: Quasimatrix
    R: Quasimatrix
    D: np.ndarray
    pivots: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    flags: tuple = ()

    @property
    def rank(self) -> int:
        return int(np.size(self.D))

    def __call__(self, x, s):
        return eval2(self, x, s)


@dataclass(frozen=True, eq=False)
class Sve:
    U: Quasimatrix
    sigma: np.ndarray
    V: Quasimatrix

    @property
    def rank(self) -> int:
        return int(np.size(self.sigma))

    def __call__(self, x, s):
        return sve_eval(self, x, s)

    def truncate(self, k: int) -> "Sve":
        return Sve(self.U.truncate(k), np.asarray(self.sigma)[:k], self.V.truncate(k))


def _stop_level(n: int, tol: float) -> float:
    """Relative residual level at which elimination on an ``n``-point grid stops."""
    return 2.0 * n**0.8 * max(tol, MACHINE_EPS)


def _grid_eval(g: Callable, x: np.ndarray, s: np.ndarray) -> np.ndarray:
    vals = np.asarray(g(x[:, None], s[None, :]), dtype=float)
    vals = np.broadcast_to(vals, (x.size, s.size))
    if not np.all(np.isfinite(vals)):
        raise NonConvergence("kernel returned non-finite values")
    return np.array(vals)


def _select_pivots(g, xd, sd, tol, max_rank, probe_max):
    """Complete-pivot elimination on refining Chebyshev tensor grids."""
    n = PROBE_START
    while True:
        xs, ss = cheb_points(n - 1, xd), cheb_points(n - 1, sd)
        M = _grid_eval(g, xs, ss)
        vscale = float(np.max(np.abs(M)))
        if vscale == 0.0:
            return np.zeros((0, 2)), 0.0, n, False
        thr = _stop_level(n, tol) * vscale
        E = M.copy()
        piv = []
        capped = False
        while True:
            idx = np.argmax(np.abs(E))
            i, j = divmod(int(idx), E.shape[1])
            p = E[i, j]
            if abs(p) <= thr:
                break
            if len(piv) == max_rank:
                capped = True
                break
            piv.append((xs[i], ss[j]))
            E -= np.outer(E[:, j], E[i, :]) / p
        rank = len(piv)
        if capped or rank * RANK_FACTOR <= n or n >= probe_max:
            return np.array(piv).reshape(-1, 2), vscale, n, capped
        n = 2 * n - 1


def _eliminate(colvals, rowvals, P):
    """Sequential cross elimination on sampled slices.

    ``colvals[:, k]`` samples ``g(x_k, s)`` on an s-grid, ``rowvals[:, k]``
    samples ``g(x, s_k)`` on an x-grid and ``P[i, l] = g(x_i, s_l)``.
    """
    C = colvals.copy()
    R = rowvals.copy()
    P = P.copy()
    K = P.shape[0]
    D = np.zeros(K)
    for k in range(K):
        d = P[k, k]
        if d == 0.0:
            raise NonConvergence(f"pivot {k} vanished during slice elimination")
        D[k] = 1.0 / d
        if k + 1 < K:
            C[:, k + 1 :] -= np.outer(C[:, k], P[k + 1 :, k] / d)
            R[:, k + 1 :] -= np.outer(R[:, k], P[k, k + 1 :] / d)
            P[k + 1 :, k + 1 :] -= np.outer(P[k + 1 :, k], P[k, k + 1 :]) / d
    return C, R, D


def _columns_resolved(vals: np.ndarray, tol: Tolerance, vscale: float):
    c = vals2coeffs(vals)
    thr = tail_threshold(c[:, 0], tol, vscale)
    tail = max(3, c.shape[0] // 8)
    ok = bool(np.all(np.abs(c[-tail:]) <= thr))
    return ok, c, thr


def build_cdr(
    g: Callable,
    xd,
    sd,
    tol_x=None,
    tol_s=None,
    max_rank: int = 256,
    probe_max: int = PROBE_MAX,
) -> BivariateCdr:
    """Rank-adaptive cross approximation of a vectorised kernel ``g(x, s)``.

    Pivots are the maximisers of the current residual on a Chebyshev tensor
    probe grid (17 x 17, doubled while the rank is large relative to the
    grid).  The column and row slices through the pivots are then resampled
    on doubling Chebyshev grids until each is resolved to its tolerance.

    If ``max_rank`` pivots do not reach the tolerance the best-so-far
    approximation is returned with ``"max_rank_exceeded"`` in ``flags`` and a
    :class:`MaxRankWarning`.  A kernel that vanishes on the probe grid gives a
    rank-0 result.
    """
    xd, sd = as_domain(xd), as_domain(sd)
    tol_x, tol_s = as_tolerance(tol_x), as_tolerance(tol_s)
    tol = max(tol_x.eps_rel, tol_s.eps_rel)
    piv, vscale, _, capped = _select_pivots(g, xd, sd, tol, max_rank, probe_max)
    K = piv.shape[0]
    if K == 0:
        return BivariateCdr(xd, sd, Quasimatrix.empty(sd), Quasimatrix.empty(xd), np.zeros(0), piv, ("zero_function",))
    xp, sp = piv[:, 0], piv[:, 1]
    P = _grid_eval(g, xp, sp)

    def resolve(direction):
        d, t = (sd, tol_s) if direction == "s" else (xd, tol_x)
        for k in range(4, SLICE_MAX_LOG2 + 1):
            m = 2**k
            pts = cheb_points(m, d)
            if direction == "s":
                raw = _grid_eval(g, xp, pts).T
                C, _, _ = _eliminate(raw, np.zeros((1, K)), P)
            else:
                raw = _grid_eval(g, pts, sp)
                _, C, _ = _eliminate(np.zeros((1, K)), raw, P)
            ok, coeffs, thr = _columns_resolved(C, t, max(vscale, float(np.max(np.abs(raw)))))
            if ok:
                big = np.nonzero(np.max(np.abs(coeffs), axis=1) > thr)[0]
                n = big[-1] + 1 if big.size else 1
                return Quasimatrix(d, coeffs[:n])
        raise NonConvergence(f"{direction}-slices not resolved with {2**SLICE_MAX_LOG2 + 1} points")

    Cq = resolve("s")
    Rq = resolve("x")
    _, _, D = _eliminate(np.zeros((1, K)), np.zeros((1, K)), P)
    flags = ()
    if capped:
        flags = ("max_rank_exceeded",)
        warnings.warn(f"cross approximation stopped at max_rank={max_rank}", MaxRankWarning, stacklevel=2)
    return BivariateCdr(xd, sd, Cq, Rq, D, piv, flags)


def eval2(cdr: BivariateCdr, x, s):
    """``sum_k D_k C_k(s) R_k(x)`` with broadcasting between ``x`` and ``s``."""
    x, s = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(s, dtype=float))
    if cdr.rank == 0:
        out = np.zeros(x.shape)
    else:
        out = np.einsum("...k,k,...k->...", cdr.C(s), cdr.D, cdr.R(x))
    return float(out) if out.ndim == 0 else out


def sve_eval(model: Sve, x, s):
    x, s = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(s, dtype=float))
    if model.rank == 0:
        out = np.zeros(x.shape)
    else:
        out = np.einsum("...k,k,...k->...", model.U(s), np.asarray(model.sigma), model.V(x))
    return float(out) if out.ndim == 0 else out


def sve(cdr: BivariateCdr) -> Sve:
    """Singular value expansion of a CDR kernel.

    1. ``C = Q_C R_C`` and ``R = Q_R R_R`` by Householder triangularisation.
    2. ``A = R_C D R_R^T``.
    3. ``A = U_A S_A V_A^T`` (dense SVD).
    4. ``U = Q_C U_A``, ``V = Q_R V_A``, ``sigma = diag(S_A)``.

    Columns are normalised before the QR (the scaling is folded back into
    ``R_C`` and ``R_R``) so the rank test sees relative, not absolute, sizes.
    """
    if cdr.rank == 0:
        return Sve(Quasimatrix.empty(cdr.sdomain), np.zeros(0), Quasimatrix.empty(cdr.xdomain))
    nc = cdr.C.norms()
    nr = cdr.R.norms()
    Qc, Rc = householder_qr(cdr.C @ np.diag(1.0 / nc))
    Qr, Rr = householder_qr(cdr.R @ np.diag(1.0 / nr))
    Rc = Rc * nc[None, :]
    Rr = Rr * nr[None, :]
    A = (Rc * cdr.D[None, :]) @ Rr.T
    Ua, sa, Vat = np.linalg.svd(A)
    return Sve(Qc @ Ua, sa, Qr @ Vat.T)


def apply_operator(model: Sve, H: ChebSeries | None, f: ChebSeries) -> ChebSeries:
    """``u(x) = int G(x, s) f(s) ds + H(x)`` for ``G = U diag(sigma) V*``."""
    if f.domain != model.U.domain:
        raise DomainMismatch("forcing is not on the kernel's s-domain")
    if model.rank == 0:
        if H is None:
            return ChebSeries.constant(0.0, model.V.domain)
        return H
    fq = Quasimatrix.from_columns([f])
    coef = np.asarray(model.sigma) * qm_inner(model.U, fq)[:, 0]
    u = model.V @ coef[:, None]
    c = u.coeffs[:, 0]
    if H is not None:
        if H.domain != model.V.domain:
            raise DomainMismatch("homogeneous term is not on the kernel's x-domain")
        n = max(c.size, H.coeffs.size)
        c = np.pad(c, (0, n - c.size)) + np.pad(H.coeffs, (0, n - H.coeffs.size))
    return ChebSeries(model.V.domain, c)
