
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import roots_legendre

from greencheb.bivariate import MaxRankWarning, _stop_level, Sve, apply_operator, build_cdr, eval2, sve
from greencheb.chebcore import ChebSeries, build_adaptive
from greencheb.errors import DomainMismatch
from greencheb.quasimatrix import qm_inner
from greencheb.problems import poisson_green


def smooth_kernel(x, s):
    return np.exp(-((x - s) ** 2)) * np.cos(x + 2 * s) + 0.3 / (1.5 + x * s)


def gauss_svd_oracle(g, n=400, d=(-1.0, 1.0)):
    """Singular values of the Gauss-Legendre weighted sample matrix."""
    t, w = roots_legendre(n)
    half = 0.5 * (d[1] - d[0])
    x = half * t + 0.5 * (d[0] + d[1])
    sw = np.sqrt(w * half)
    return np.linalg.svd(sw[:, None] * g(x[:, None], x[None, :]) * sw[None, :], compute_uv=False)


def test_separable_rank_one():
    g = lambda x, s: np.sin(x) * np.cos(s)
    cdr = build_cdr(g, (-1, 1), (-1, 1))
    assert cdr.rank == 1
    x = np.linspace(-1, 1, 50)
    X, S = np.meshgrid(x, x, indexing="ij")
    assert np.max(np.abs(cdr(X, S) - g(X, S))) <= 1e-12
    m = sve(cdr)
    norm_f = np.sqrt(1 - np.sin(2) / 2)
    norm_h = np.sqrt(1 + np.sin(2) / 2)
    assert m.sigma[0] == pytest.approx(norm_f * norm_h, rel=1e-10)
    u = m.U(x)[:, 0]
    h = np.cos(x) / norm_h
    assert min(np.max(np.abs(u - h)), np.max(np.abs(u + h))) <= 1e-10


def test_zero_kernel():
    cdr = build_cdr(lambda x, s: 0.0 * x * s, (0, 1), (0, 1))
    assert cdr.rank == 0
    assert "zero_function" in cdr.flags
    assert eval2(cdr, 0.3, 0.4) == 0.0
    assert sve(cdr).rank == 0


def test_smooth_kernel_probe_error(rng):
    tol = 1e-10
    cdr = build_cdr(smooth_kernel, (-1, 1), (-1, 1), tol, tol)
    x, s = rng.uniform(-1, 1, (2, 500))
    vscale = np.max(np.abs(smooth_kernel(x, s)))
    # stopping threshold on the finest probe grid (at most 2049 points)
    assert np.max(np.abs(eval2(cdr, x, s) - smooth_kernel(x, s))) <= 10 * _stop_level(2049, tol) * vscale


def test_max_rank_flag():
    with pytest.warns(MaxRankWarning):
        cdr = build_cdr(poisson_green, (0, 1), (0, 1), 1e-6, 1e-6, max_rank=8)
    assert cdr.rank == 8
    assert "max_rank_exceeded" in cdr.flags


def test_sve_matches_dense_svd_oracle():
    m = sve(build_cdr(smooth_kernel, (-1, 1), (-1, 1)))
    ref = gauss_svd_oracle(smooth_kernel)
    keep = ref >= 1e-8
    k = int(keep.sum())
    assert m.rank >= k
    assert np.max(np.abs(m.sigma[:k] - ref[:k])) <= 1e-6


def test_sve_reconstructs_cdr(rng):
    cdr = build_cdr(smooth_kernel, (-1, 1), (-1, 1))
    m = sve(cdr)
    x, s = rng.uniform(-1, 1, (2, 200))
    assert np.max(np.abs(m(x, s) - cdr(x, s))) <= 1e-9
    K = m.rank
    assert np.max(np.abs(qm_inner(m.U, m.U) - np.eye(K))) <= 1e-10
    assert np.max(np.abs(qm_inner(m.V, m.V) - np.eye(K))) <= 1e-10
    assert np.all(np.diff(m.sigma) <= 0)


def test_eckart_young_truncation():
    m = sve(build_cdr(smooth_kernel, (-1, 1), (-1, 1)))
    t, w = roots_legendre(300)
    sw = np.sqrt(w)
    full = m(t[:, None], t[None, :])
    for r in range(1, m.rank):
        err = sw[:, None] * (full - m.truncate(r)(t[:, None], t[None, :])) * sw[None, :]
        assert np.linalg.norm(err, 2) <= m.sigma[r] * (1 + 1e-6) + 1e-15


def test_sve_of_sve_reproduces_sigma():
    m = sve(build_cdr(smooth_kernel, (-1, 1), (-1, 1)))
    m2 = sve(build_cdr(m, (-1, 1), (-1, 1)))
    big = m.sigma > 1e-6 * m.sigma[0]
    k = int(big.sum())
    assert np.max(np.abs(m2.sigma[:k] - m.sigma[:k]) / m.sigma[:k]) <= 1e-8


def test_poisson_singular_values(poisson_exact_sve):
    _, m = poisson_exact_sve
    k = np.arange(1, 6)
    assert np.max(np.abs(m.sigma[:5] * np.pi**2 * k**2 - 1)) <= 1e-3


@pytest.mark.xfail(strict=True, reason="the kink on x = s limits any rank-256 approximation to ~1e-3 sup error")
def test_poisson_dense_grid_1e8(poisson_exact_sve):
    cdr, _ = poisson_exact_sve
    x = np.linspace(0, 1, 200)
    X, S = np.meshgrid(x, x, indexing="ij")
    assert np.max(np.abs(cdr(X, S) - poisson_green(X, S))) <= 1e-8


def test_poisson_dense_grid_achievable(poisson_exact_sve):
    cdr, m = poisson_exact_sve
    x = np.linspace(0, 1, 200)
    X, S = np.meshgrid(x, x, indexing="ij")
    G = cdr(X, S)
    assert np.max(np.abs(G - poisson_green(X, S))) <= 5e-3
    assert np.max(np.abs(G - G.T)) <= 1e-8


def test_apply_operator_zero_sigma():
    m = sve(build_cdr(smooth_kernel, (-1, 1), (-1, 1)))
    zero = Sve(m.U, np.zeros(m.rank), m.V)
    H = build_adaptive(np.cos)
    f = build_adaptive(np.exp)
    u = apply_operator(zero, H, f)
    x = np.linspace(-1, 1, 30)
    assert np.max(np.abs(u(x) - H(x))) <= 1e-15


def test_apply_operator_linear():
    m = sve(build_cdr(smooth_kernel, (-1, 1), (-1, 1)))
    H = build_adaptive(np.cos)
    f, g = build_adaptive(np.exp), build_adaptive(lambda x: np.sin(5 * x))
    x = np.linspace(-1, 1, 30)
    lhs = apply_operator(m, H, f + g)(x)
    rhs = apply_operator(m, H, f)(x) + apply_operator(m, H, g)(x) - H(x)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10


def test_apply_operator_domain_mismatch():
    m = sve(build_cdr(smooth_kernel, (-1, 1), (-1, 1)))
    with pytest.raises(DomainMismatch):
        apply_operator(m, None, ChebSeries.constant(1.0, (0, 1)))


def test_apply_operator_poisson_achievable(poisson_exact_sve):
    _, m = poisson_exact_sve
    f = build_adaptive(lambda x: np.pi**2 * np.sin(np.pi * x), (0, 1))
    x = np.linspace(0, 1, 101)
    assert np.max(np.abs(apply_operator(m, None, f)(x) - np.sin(np.pi * x))) <= 1e-4


@pytest.mark.xfail(strict=True, reason="needs rank ~1000 for the kinked kernel; see decisions ledger")
def test_apply_operator_poisson_1e6(poisson_exact_sve):
    _, m = poisson_exact_sve
    f = build_adaptive(lambda x: np.pi**2 * np.sin(np.pi * x), (0, 1))
    x = np.linspace(0, 1, 101)
    assert np.max(np.abs(apply_operator(m, None, f)(x) - np.sin(np.pi * x))) <= 1e-6


@given(st.floats(0.2, 3.0), st.floats(-2.0, 2.0), st.integers(0, 1000))
def test_sve_orthonormal_for_random_smooth_kernels(a, b, seed):
    c = np.random.default_rng(seed).uniform(0.5, 2.0, 3)

    def g(x, s):
        return np.exp(-a * (x - s) ** 2) * (c[0] + b * x * s) + c[1] * np.sin(c[2] * x + s)

    m = sve(build_cdr(g, (-1, 1), (0, 2)))
    K = m.rank
    assert np.max(np.abs(qm_inner(m.U, m.U) - np.eye(K))) <= 1e-10
    assert np.max(np.abs(qm_inner(m.V, m.V) - np.eye(K))) <= 1e-10
    assert np.all(np.diff(m.sigma) <= 1e-15)
