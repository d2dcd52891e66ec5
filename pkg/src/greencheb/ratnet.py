"""Rational neural networks for Green's function learning.

Two networks are fitted jointly: ``N_G(x, s)`` for the kernel and
``N_hom(x)`` for the homogeneous part of the response.  The kernel seen by
the loss is ``alpha(x, s) N_G(x, s)`` where ``alpha`` is an approximate
distance function that vanishes on the boundary of the rectangle, so
Dirichlet zeros hold by construction.

Training is full-batch Adam in double precision.  The ``s`` integral of the
loss is a trapezoid rule on the sensor grid; to keep an epoch cheap the
network is evaluated on a coarser uniform node grid and extended to the
sensors by piecewise-linear (hat function) interpolation.  With as many nodes
as sensors this is exactly the plain trapezoid rule.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
import torch
from scipy.optimize import least_squares

from .chebcore import Domain1D, as_domain, build_adaptive
from .errors import Diverged, NonFiniteOutput, ShapeMismatch, ZeroLengthSegment, ZeroResponseNorm

DTYPE = torch.float64
EVAL_CHUNK = 1 << 16


# ---------------------------------------------------------------- ADF


def adf_segment(point, seg) -> np.ndarray:
    """Approximate distance ``beta`` from ``point = (x, s)`` to a line segment.

    ``seg = ((x1, s1), (x2, s2))``.  ``beta`` vanishes exactly on the segment
    and behaves like the Euclidean distance to first order near it.
    """
    (x1, s1), (x2, s2) = seg
    L = math.hypot(x2 - x1, s2 - s1)
    if L == 0.0:
        raise ZeroLengthSegment("segment endpoints coincide")
    x, s = (np.asarray(v, dtype=float) for v in point)
    xc, sc = 0.5 * (x1 + x2), 0.5 * (s1 + s2)
    h = ((x - x1) * (s2 - s1) - (s - s1) * (x2 - x1)) / L
    t = ((L / 2) ** 2 - ((x - xc) ** 2 + (s - sc) ** 2)) / L
    phi = np.sqrt(t**2 + h**4)
    return np.sqrt(h**2 + ((phi - t) / 2) ** 2)


@dataclass(frozen=True)
class AdfSpec:
    xdomain: Domain1D
    sdomain: Domain1D
    m: int = 1
    enabled: bool = True

    def __post_init__(self):
        object.__setattr__(self, "xdomain", as_domain(self.xdomain))
        object.__setattr__(self, "sdomain", as_domain(self.sdomain))
        if self.m != 1:
            raise ValueError("only the order-1 R-equivalence is supported")

    def segments(self):
        xa, xb = self.xdomain.as_tuple()
        sa, sb = self.sdomain.as_tuple()
        c = [(xa, sa), (xb, sa), (xb, sb), (xa, sb)]
        return [(c[i], c[(i + 1) % 4]) for i in range(4)]


def adf_rect(point, spec: AdfSpec) -> np.ndarray:
    """``alpha = 1 / sum_i 1/beta_i`` over the four sides; 0 on the boundary."""
    x, s = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in point))
    if not spec.enabled:
        return np.ones(x.shape)
    betas = [adf_segment((x, s), seg) for seg in spec.segments()]
    on_edge = np.zeros(x.shape, dtype=bool)
    for b in betas:
        on_edge |= b == 0.0
    with np.errstate(divide="ignore"):
        inv = sum(1.0 / np.where(b == 0.0, 1.0, b) for b in betas)
    return np.where(on_edge, 0.0, 1.0 / inv)


# ---------------------------------------------------------------- networks


@functools.lru_cache(maxsize=1)
def relu_rational_init() -> tuple[np.ndarray, np.ndarray]:
    """Type (3, 2) least-squares rational fit of ReLU on 1000 points of [-1, 1].

    Returns ``(p, q)`` in increasing-power order with ``q[0] = 1``.
    """
    x = np.linspace(-1.0, 1.0, 1000)
    y = np.maximum(x, 0.0)
    # linearised problem P - y Q = 0 gives the starting point
    A = np.column_stack([np.ones_like(x), x, x**2, x**3, -y * x, -y * x**2])
    c0 = np.linalg.lstsq(A, y, rcond=None)[0]

    def resid(c):
        return np.polynomial.polynomial.polyval(x, c[:4]) / np.polynomial.polynomial.polyval(x, np.r_[1.0, c[4:]]) - y

    c = least_squares(resid, c0, xtol=1e-15, ftol=1e-15, gtol=1e-15).x
    p, q = c[:4], np.r_[1.0, c[4:]]
    t = np.linspace(-3.0, 3.0, 6001)
    if np.min(np.abs(np.polynomial.polynomial.polyval(t, q))) < 1e-2:
        raise RuntimeError("rational ReLU fit has a denominator root on [-3, 3]")
    return p, q


class RationalActivation(torch.nn.Module):
    """``r(z) = (p0 + p1 z + p2 z^2 + p3 z^3) / (q0 + q1 z + q2 z^2)``, trainable."""

    def __init__(self, p=None, q=None):
        super().__init__()
        p0, q0 = relu_rational_init()
        p = p0 if p is None else p
        q = q0 if q is None else q
        self.p = torch.nn.Parameter(torch.tensor(np.asarray(p, dtype=float), dtype=DTYPE))
        self.q = torch.nn.Parameter(torch.tensor(np.asarray(q, dtype=float), dtype=DTYPE))

    def forward(self, z):
        p, q = self.p, self.q
        num = ((p[3] * z + p[2]) * z + p[1]) * z + p[0]
        den = (q[2] * z + q[1]) * z + q[0]
        return num / den


class RatNet(torch.nn.Module):
    """Fully connected network with a trainable rational activation per hidden layer.

    Inputs are mapped affinely from the box ``lo..hi`` to ``[-1, 1]`` before
    the first layer; the final layer is affine.
    """

    def __init__(self, n_in: int, n_out: int = 1, width: int = 50, depth: int = 4, lo=None, hi=None, seed: int = 0):
        super().__init__()
        self.dims = [n_in] + [width] * depth + [n_out]
        lo = np.full(n_in, -1.0) if lo is None else np.asarray(lo, dtype=float)
        hi = np.full(n_in, 1.0) if hi is None else np.asarray(hi, dtype=float)
        if lo.shape != (n_in,) or hi.shape != (n_in,) or np.any(hi <= lo):
            raise ShapeMismatch("input box must have one (lo, hi) pair per input with lo < hi")
        self.register_buffer("lo", torch.tensor(lo, dtype=DTYPE))
        self.register_buffer("hi", torch.tensor(hi, dtype=DTYPE))
        gen = torch.Generator().manual_seed(int(seed))
        self.linears = torch.nn.ModuleList()
        for a, b in zip(self.dims[:-1], self.dims[1:]):
            lin = torch.nn.Linear(a, b, dtype=DTYPE)
            bound = 1.0 / math.sqrt(a)
            with torch.no_grad():
                lin.weight.copy_(torch.rand(b, a, generator=gen, dtype=DTYPE) * 2 * bound - bound)
                lin.bias.copy_(torch.rand(b, generator=gen, dtype=DTYPE) * 2 * bound - bound)
            self.linears.append(lin)
        self.acts = torch.nn.ModuleList(RationalActivation() for _ in range(depth))

    def forward(self, z):
        z = 2.0 * (z - self.lo) / (self.hi - self.lo) - 1.0
        for lin, act in zip(self.linears[:-1], self.acts):
            z = act(lin(z))
        out = self.linears[-1](z)
        if not torch.isfinite(out).all():
            raise NonFiniteOutput("network produced non-finite values")
        return out


def forward(net: RatNet, inputs) -> np.ndarray:
    """Evaluate ``net`` on an ``(n, n_in)`` array without tracking gradients."""
    z = np.asarray(inputs, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if z.shape[1] != net.dims[0]:
        raise ShapeMismatch(f"expected {net.dims[0]} inputs, got {z.shape[1]}")
    out = np.empty((z.shape[0], net.dims[-1]))
    with torch.no_grad():
        for i in range(0, z.shape[0], EVAL_CHUNK):
            out[i : i + EVAL_CHUNK] = net(torch.from_numpy(np.ascontiguousarray(z[i : i + EVAL_CHUNK]))).numpy()
    return out


def kernel_function(netG: RatNet, adf: AdfSpec):
    """Vectorised ``g(x, s) = alpha(x, s) N_G(x, s)`` with numpy broadcasting."""

    def g(x, s):
        x, s = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(s, dtype=float))
        vals = forward(netG, np.column_stack([x.ravel(), s.ravel()]))[:, 0].reshape(x.shape)
        return adf_rect((x, s), adf) * vals

    return g


def homogeneous_function(netH: RatNet):
    def h(x):
        x = np.asarray(x, dtype=float)
        return forward(netH, x.reshape(-1, 1))[:, 0].reshape(x.shape)

    return h


# ---------------------------------------------------------------- loss


def trapezoid_weights(grid) -> np.ndarray:
    """Trapezoid weights for an increasing, possibly non-uniform grid."""
    g = np.asarray(grid, dtype=float)
    if g.size < 2 or np.any(np.diff(g) <= 0):
        raise ValueError("grid must be strictly increasing with at least two points")
    w = np.zeros_like(g)
    dg = np.diff(g)
    w[:-1] += dg / 2
    w[1:] += dg / 2
    return w


def hat_matrix(points, nodes) -> np.ndarray:
    """Piecewise-linear interpolation matrix from values at ``nodes`` to ``points``."""
    nodes = np.asarray(nodes, dtype=float)
    eye = np.eye(nodes.size)
    return np.column_stack([np.interp(points, nodes, eye[j]) for j in range(nodes.size)])


@dataclass
class TrainData:
    """Sensor grids and forcing/response pairs (one pair per column)."""

    x: np.ndarray
    s: np.ndarray
    F: np.ndarray
    U: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.s = np.asarray(self.s, dtype=float)
        self.F = np.atleast_2d(np.asarray(self.F, dtype=float).T).T
        self.U = np.atleast_2d(np.asarray(self.U, dtype=float).T).T
        if self.F.shape != (self.s.size, self.U.shape[1]) or self.U.shape[0] != self.x.size:
            raise ShapeMismatch(f"F {self.F.shape} / U {self.U.shape} do not match grids ({self.s.size}, {self.x.size})")


class GreenLoss:
    """Relative residual loss with the kernel sampled on a node grid.

    ``nodes=None`` evaluates the kernel at every sensor pair (plain trapezoid
    rule in both variables).  An integer uses that many uniform nodes per
    variable: the kernel is extended bilinearly to the sensors, which turns
    the ``s`` integral into ``G_nodes @ (P_s^T W_s F)``.
    """

    def __init__(self, data: TrainData, adf: AdfSpec, nodes: int | None = None):
        norms = trapezoid_weights(data.x) @ data.U**2
        for i, n in enumerate(norms):
            if not n > 0:
                raise ZeroResponseNorm(i)
        ws = trapezoid_weights(data.s)
        self.wx = torch.tensor(trapezoid_weights(data.x), dtype=DTYPE)
        self.U = torch.tensor(data.U, dtype=DTYPE)
        self.norms = torch.tensor(norms, dtype=DTYPE)
        if nodes is None or nodes >= max(data.x.size, data.s.size):
            xn, sn = data.x, data.s
            Px = None
            Fh = ws[:, None] * data.F
        else:
            xn = np.linspace(data.x[0], data.x[-1], nodes)
            sn = np.linspace(data.s[0], data.s[-1], nodes)
            Px = torch.tensor(hat_matrix(data.x, xn), dtype=DTYPE)
            Fh = hat_matrix(data.s, sn).T @ (ws[:, None] * data.F)
        self.Px = Px
        self.Fh = torch.tensor(Fh, dtype=DTYPE)
        X, S = np.meshgrid(xn, sn, indexing="ij")
        self.shape = X.shape
        self.XS = torch.tensor(np.column_stack([X.ravel(), S.ravel()]), dtype=DTYPE)
        self.alpha = torch.tensor(adf_rect((X, S), adf), dtype=DTYPE)
        self.xin = torch.tensor(data.x[:, None], dtype=DTYPE)

    def __call__(self, netG: RatNet, netH: RatNet, cols=None) -> torch.Tensor:
        return self.per_sample(netG, netH, cols).mean()

    def per_sample(self, netG, netH, cols=None, G=None):
        if G is None:
            G = self.kernel(netG)
        Fh, U, norms = self.Fh, self.U, self.norms
        if cols is not None:
            Fh, U, norms = Fh[:, cols], U[:, cols], norms[cols]
        pred = G @ Fh
        if self.Px is not None:
            pred = self.Px @ pred
        r = U - netH(self.xin) - pred
        return (self.wx @ r**2) / norms

    def kernel(self, netG):
        return self.alpha * netG(self.XS).reshape(self.shape)


def loss(data: TrainData, netG: RatNet, netH: RatNet, adf: AdfSpec, nodes: int | None = None) -> float:
    """Mean over pairs of ``||u - N_hom - int alpha N_G f ds||^2 / ||u||^2``."""
    with torch.no_grad():
        return float(GreenLoss(data, adf, nodes)(netG, netH))


# ---------------------------------------------------------------- training


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2000
    lr_start: float = 1e-2
    lr_end: float = 1e-3
    seed: int = 0
    quadrature: str = "trapezoid"
    nodes: int | None = 64
    width: int = 50
    depth: int = 4

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0 < self.lr_end <= self.lr_start:
            raise ValueError("need 0 < lr_end <= lr_start")
        if self.quadrature != "trapezoid":
            raise ValueError("only trapezoid quadrature is implemented")


@dataclass
class TrainResult:
    netG: RatNet
    netH: RatNet
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)


def make_networks(xd, sd, config: TrainConfig) -> tuple[RatNet, RatNet]:
    xd, sd = as_domain(xd), as_domain(sd)
    netG = RatNet(2, 1, config.width, config.depth, lo=[xd.a, sd.a], hi=[xd.b, sd.b], seed=config.seed)
    netH = RatNet(1, 1, config.width, config.depth, lo=[xd.a], hi=[xd.b], seed=config.seed + 1)
    return netG, netH


def train(
    data: TrainData,
    config: TrainConfig = TrainConfig(),
    adf: AdfSpec | None = None,
    val: TrainData | None = None,
    log_every: int = 0,
) -> TrainResult:
    """Full-batch Adam with ``lr = lr_start (lr_end / lr_start)^(t / epochs)``.

    The validation pairs share the sensor grids of the training pairs and are
    scored with the same kernel evaluation at no extra network cost.
    """
    xd = Domain1D(float(data.x[0]), float(data.x[-1]))
    sd = Domain1D(float(data.s[0]), float(data.s[-1]))
    adf = adf or AdfSpec(xd, sd)
    netG, netH = make_networks(xd, sd, config)
    n_train = data.U.shape[1]
    if val is not None:
        both = TrainData(data.x, data.s, np.hstack([data.F, val.F]), np.hstack([data.U, val.U]))
    else:
        both = data
    L = GreenLoss(both, adf, config.nodes)
    tr = torch.arange(n_train)
    va = torch.arange(n_train, both.U.shape[1])
    params = list(netG.parameters()) + list(netH.parameters())
    opt = torch.optim.Adam(params, lr=config.lr_start, betas=(0.9, 0.999), eps=1e-8)
    gamma = (config.lr_end / config.lr_start) ** (1.0 / config.epochs)
    sched = torch.optim.lr_scheduler.ExponentialLR(opt, gamma)
    res = TrainResult(netG, netH)
    for epoch in range(config.epochs):
        opt.zero_grad()
        try:
            per = L.per_sample(netG, netH)
        except NonFiniteOutput:
            raise Diverged(epoch) from None
        total = per[tr].mean()
        if not torch.isfinite(total):
            raise Diverged(epoch)
        total.backward()
        opt.step()
        sched.step()
        res.train_loss.append(float(total.detach()))
        if va.numel():
            res.val_loss.append(float(per[va].detach().mean()))
        if log_every and (epoch % log_every == 0 or epoch == config.epochs - 1):
            v = f" val {res.val_loss[-1]:.3e}" if res.val_loss else ""
            print(f"epoch {epoch:5d} loss {res.train_loss[-1]:.3e}{v}", flush=True)
    return res


def to_green_model(netG: RatNet, netH: RatNet, adf: AdfSpec, xdomain, sdomain, tol=None, theta: float = 0.0,
                   max_rank: int = 256, zero_mean: bool = False):
    """Compress the trained pair into an :class:`~greencheb.manifold.SveModel`.

    ``zero_mean`` projects out the constant directions on both sides (see
    :func:`~greencheb.manifold.project_zero_mean`), as needed for periodic
    problems whose forcings are mean-free.
    """
    from .bivariate import build_cdr, sve
    from .manifold import SveModel, project_zero_mean

    xdomain, sdomain = as_domain(xdomain), as_domain(sdomain)
    cdr = build_cdr(kernel_function(netG, adf), xdomain, sdomain, tol, tol, max_rank=max_rank)
    H = build_adaptive(homogeneous_function(netH), xdomain, tol)
    model = SveModel.from_sve(sve(cdr), H, theta, flags=cdr.flags)
    return project_zero_mean(model) if zero_mean else model
