"""The singular kernel ``|x - y|^(-N - ps)`` and everything integrated against it.

This module provides

* the pair weights ``W_ij`` and exterior weights ``E_i`` of the two-point
  discrete Dirichlet form,
* the nonlocal tail of a function outside a ball,
* pointwise principal-value evaluation of the fractional p-Laplacian, together
  with its truncated ``|x - y| > eps`` approximations, and
* the right-hand side generated by a perturbation supported away from a set.

The operator is ``2 * normalization * PV int (u(x) - u(y))^(p-1) |x - y|^(-N-ps) dy``
where ``a^(p-1)`` denotes the signed power ``|a|^(p-2) a``.  With the default
``normalization = 1`` this is the unnormalised operator whose minimisers solve
the Dirichlet problem for ``(1/p) [u]^p - int f u``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Union

import numpy as np
from scipy import integrate

from .domain import AnalyticField, DomainSpec, Grid, GridFunction
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DivergenceError,
    GeometryError,
    PreconditionError,
    SingularCaseError,
)
from .quadrature import graded_edges, panel_points

__all__ = [
    "OperatorParams",
    "KernelWeights",
    "EpsilonSchedule",
    "EpsSeries",
    "PointValue",
    "fractional_laplacian_constant",
    "signed_power",
    "cell_pair_weight",
    "exterior_weight",
    "assemble_weights",
    "tail",
    "eval_pointwise",
    "eps_limit_series",
    "perturbation_rhs",
]

_EPS = np.finfo(float).eps
_SERIES_FROM = 16


def fractional_laplacian_constant(dim: int, s: float) -> float:
    """``C_{N,s} = s 4^s Gamma(N/2 + s) / (pi^(N/2) Gamma(1 - s))``."""
    return s * 4.0**s * math.gamma(0.5 * dim + s) / (math.pi ** (0.5 * dim) * math.gamma(1.0 - s))


@dataclass(frozen=True)
class OperatorParams:
    """Exponents ``p > 1``, ``0 < s < 1`` and a positive kernel prefactor."""

    p: float
    s: float
    normalization: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.p) or self.p <= 1.0:
            raise ConfigurationError(f"p must exceed 1 (p in (1, inf)), got p={self.p}")
        if not 0.0 < self.s < 1.0:
            raise ConfigurationError(f"s must lie in (0, 1), got s={self.s}")
        if not math.isfinite(self.normalization) or self.normalization <= 0:
            raise ConfigurationError(f"normalization must be positive, got {self.normalization}")

    @classmethod
    def classical(cls, p: float, s: float, dim: int) -> "OperatorParams":
        """Prefactor ``C_{N,s} / 2``: for ``p = 2`` the operator is the usual ``(-Delta)^s``."""
        return cls(p, s, 0.5 * fractional_laplacian_constant(dim, s))

    @property
    def ps(self) -> float:
        return self.p * self.s

    @property
    def q(self) -> float:
        """The exponent ``p - 1`` of the signed power."""
        return self.p - 1.0

    @property
    def singular_threshold(self) -> float:
        return 2.0 * (self.p - 1.0) / self.p

    @property
    def pointwise_valid(self) -> bool:
        """Whether the principal value converges at smooth points (``p >= 2`` or ``s < 2(p-1)/p``)."""
        return self.p >= 2.0 or self.s < self.singular_threshold


def signed_power(a, q: float):
    """``|a|^q sign(a)``, i.e. ``|a|^(p-2) a`` for ``q = p - 1``; zero at zero."""
    if q <= 0:
        raise ConfigurationError(f"signed power needs a positive exponent, got {q}")
    arr = np.asarray(a, dtype=float)
    if q == 1.0:
        out = arr.copy()
    elif q == 2.0:
        out = arr * np.abs(arr)
    else:
        out = np.sign(arr) * np.abs(arr) ** q
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# pair weights


def _G(t, a):
    """Double antiderivative of ``t^(-1-a)`` vanishing at 0 when ``a < 1``."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if a == 1.0:
            return -np.log(t)
        return -(t ** (1.0 - a)) / (a * (1.0 - a))


def _G_cut(t, a, cut):
    """Double antiderivative of ``t^(-1-a) 1[t > cut]`` with value and slope 0 at 0."""
    t = np.asarray(t, dtype=float)
    if cut <= 0:
        if a >= 1.0 and np.any(t <= 0):
            raise GeometryError("touching cells need regularisation when ps >= 1")
        return np.where(t > 0, _G(np.maximum(t, 1e-300), a), 0.0)
    g0 = _G(cut, a)
    d0 = -(cut ** -a) / a
    tt = np.maximum(t, cut)
    return np.where(t > cut, _G(tt, a) - g0 - d0 * (tt - cut), 0.0)


def _interval_pair(a0, a1, b0, b1, a, cut):
    return (
        _G_cut(b1 - a0, a, cut)
        - _G_cut(b1 - a1, a, cut)
        - _G_cut(b0 - a0, a, cut)
        + _G_cut(b0 - a1, a, cut)
    )


def _unit_weights(count: int, a: float) -> np.ndarray:
    """Weights of unit cells ``[0,1]`` and ``[d, d+1]`` for ``d = 0..count-1`` (``w[0] = 0``)."""
    w = np.zeros(max(count, 2))
    cut = 0.5 if a >= 1.0 else 0.0
    w[1] = float(_interval_pair(0.0, 1.0, 1.0, 2.0, a, cut))
    near = np.arange(2, min(count, _SERIES_FROM))
    if near.size:
        w[near] = _G(near + 1.0, a) - 2.0 * _G(near.astype(float), a) + _G(near - 1.0, a)
    far = np.arange(_SERIES_FROM, count).astype(float)
    if far.size:
        # central second difference of G expanded in even derivatives of t^(-1-a)
        total = np.zeros_like(far)
        coeff, fact = 1.0, 2.0
        for m in range(8):
            total += 2.0 * coeff / fact * far ** (-1.0 - a - 2 * m)
            coeff *= (a + 2 * m + 1) * (a + 2 * m + 2)
            fact *= (2 * m + 3) * (2 * m + 4)
        w[_SERIES_FROM:count] = total
    return w[:count]


def _box_gap(ca, cb):
    dx = max(0.0, cb[0] - ca[1], ca[0] - cb[1])
    dy = max(0.0, cb[2] - ca[3], ca[2] - cb[3])
    return math.hypot(dx, dy), dx, dy


def _box_rule(cell, order, domain):
    from .quadrature import gauss_legendre

    x, w = gauss_legendre(order)
    px = cell[0] + (cell[1] - cell[0]) * x
    py = cell[2] + (cell[3] - cell[2]) * x
    PX, PY = np.meshgrid(px, py, indexing="ij")
    pts = np.stack([PX.ravel(), PY.ravel()], axis=1)
    wts = np.outer(w * (cell[1] - cell[0]), w * (cell[3] - cell[2])).ravel()
    if domain is not None:
        wts = wts * domain.contains(pts)
    return pts, wts


def cell_pair_weight(cell_a, cell_b, params: OperatorParams, domain: Optional[DomainSpec] = None) -> float:
    """``normalization * int_A int_B |x - y|^(-N-ps)`` for two disjoint or touching cells.

    1D cells are ``(lo, hi)`` and use the closed form.  2D cells are
    ``(xlo, xhi, ylo, yhi)`` squares, optionally clipped to ``domain``, and use
    tensor Gauss rules (2x2 per cell at gap >= 2h, 4x4 otherwise).  Touching
    cells with ``ps >= 1`` only count pairs with ``|x - y| > h/2``.
    """
    a = params.ps
    ca = np.asarray(cell_a, dtype=float)
    cb = np.asarray(cell_b, dtype=float)
    if ca.shape != cb.shape or ca.shape not in ((2,), (4,)):
        raise GeometryError("cells must both be (lo, hi) or (xlo, xhi, ylo, yhi)")
    if ca.size == 2:
        if ca[0] > cb[0]:
            ca, cb = cb, ca
        if cb[0] < ca[1]:
            raise GeometryError(f"cells {tuple(ca)} and {tuple(cb)} overlap")
        h = min(ca[1] - ca[0], cb[1] - cb[0])
        cut = 0.5 * h if (cb[0] == ca[1] and a >= 1.0) else 0.0
        return params.normalization * float(_interval_pair(ca[0], ca[1], cb[0], cb[1], a, cut))

    gap, dx, dy = _box_gap(ca, cb)
    overlap_x = min(ca[1], cb[1]) - max(ca[0], cb[0])
    overlap_y = min(ca[3], cb[3]) - max(ca[2], cb[2])
    if overlap_x > 0 and overlap_y > 0:
        raise GeometryError("cells overlap")
    h = max(ca[1] - ca[0], ca[3] - ca[2], cb[1] - cb[0], cb[3] - cb[2])
    order = 2 if gap >= 2.0 * h else 4
    pa, wa = _box_rule(ca, order, domain)
    pb, wb = _box_rule(cb, order, domain)
    r = np.linalg.norm(pa[:, None, :] - pb[None, :, :], axis=-1)
    kern = r ** (-2.0 - a)
    if gap == 0.0 and a >= 1.0:
        kern = np.where(r > 0.5 * h, kern, 0.0)
    return params.normalization * float(wa @ kern @ wb)


def exterior_weight(x, domain: DomainSpec, params: OperatorParams, angles: int = 64):
    """``normalization * int_{complement} |x - y|^(-N-ps) dy`` at interior points ``x``.

    Closed form on intervals; on the disc the radial integral is exact and the
    angular one uses the ``angles``-point periodic trapezoid rule.
    """
    a = params.ps
    pts = np.asarray(x, dtype=float)
    if domain.kind == "interval":
        dl, dr = pts - domain.a, domain.b - pts
        if np.any(np.minimum(dl, dr) <= 0):
            raise GeometryError("exterior weight requested at a point outside the open interval")
        out = (dl ** -a + dr ** -a) / a
    else:
        pts2 = pts.reshape(-1, 2)
        R = domain.radius
        r2 = np.einsum("ik,ik->i", pts2, pts2)
        if np.any(r2 >= R * R):
            raise GeometryError("exterior weight requested at a point outside the open disc")
        theta = 2.0 * np.pi * np.arange(angles) / angles
        e = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        b = pts2 @ e.T
        rho = -b + np.sqrt(b * b + (R * R - r2)[:, None])
        out = (2.0 * np.pi / angles) * np.sum(rho ** -a, axis=1) / a
        out = out.reshape(pts.shape[:-1])
    out = params.normalization * out
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# boundary closure calibrated on the half-line solution


@lru_cache(maxsize=64)
def half_line_closure(p: float, s: float, count: int = 128, far: int = 20000) -> np.ndarray:
    """Exterior weights making ``(x)_+^s`` discretely p-harmonic on the unit half-line lattice.

    Node ``i`` sits at ``i + 1/2``.  Entry ``i`` solves
    ``sum_j w_ij (g_i - g_j)^(p-1) + e_i g_i^(p-1) = 0`` with ``g = (i + 1/2)^s``
    summed over the whole half-line; the sum beyond ``far`` cells is replaced
    by its integral.
    """
    a, q = p * s, p - 1.0
    w = _unit_weights(far + count, a)
    j = np.arange(far)
    g = (j + 0.5) ** s
    out = np.empty(count)
    for i in range(count):
        gi = g[i]
        head = float(np.sum(w[np.abs(j - i)] * signed_power(gi - g, q)))
        xi = i + 0.5

        def integrand(tau, gi=gi, xi=xi):
            y = far * math.exp(tau)
            return signed_power(gi - y**s, q) * (y - xi) ** (-1.0 - a) * y

        # the integrand decays like exp(-s tau) in the log variable
        rest, _ = integrate.quad(integrand, 0.0, min(600.0, 40.0 / s), epsabs=0.0, epsrel=1e-12,
                                 limit=400)
        out[i] = -(head + rest) / gi**q
    if np.any(out <= 0):
        raise ConfigurationError(f"half-line closure is not positive for p={p}, s={s}")
    out.setflags(write=False)
    return out


@lru_cache(maxsize=64)
def _barrier_available(p: float, s: float) -> bool:
    try:
        half_line_closure(p, s)
    except ConfigurationError:
        return False
    return True


def _closure_profile(k, a, table):
    k = np.asarray(k)
    cont = (k + 0.5) ** -a / a
    inside = k < len(table)
    return np.where(inside, table[np.minimum(k, len(table) - 1)], cont)


@dataclass(frozen=True, eq=False)
class KernelWeights:
    """Symmetric pair weights ``W`` (zero diagonal) and exterior weights ``E`` on a grid."""

    grid: Grid
    params: OperatorParams
    W: np.ndarray
    E: np.ndarray
    closure: str

    @property
    def row_sums(self) -> np.ndarray:
        return self.W.sum(axis=1)


def _assemble_1d(grid: Grid, params: OperatorParams, closure: str):
    a, n, h = params.ps, grid.n, grid.h
    scale = params.normalization * h ** (1.0 - a)
    w = _unit_weights(n, a)
    idx = grid.lattice
    W = scale * w[np.abs(idx[:, None] - idx[None, :])]
    left, right = idx, n - 1 - idx
    if closure == "barrier":
        table = half_line_closure(params.p, params.s)
        E = scale * (_closure_profile(left, a, table) + _closure_profile(right, a, table))
    else:
        E = scale * ((left + 0.5) ** -a + (right + 0.5) ** -a) / a
    return W, E


def _assemble_2d(grid: Grid, params: OperatorParams):
    a, h, m = params.ps, grid.h, grid.size
    qp, qw = grid.quad_points, grid.quad_weights
    order = int(round(math.sqrt(qp.shape[1])))
    # 2x2 Gauss points carrying the clipped volume of each quadrant
    g2 = 0.5 * h * np.array([-1.0, 1.0]) / math.sqrt(3.0)
    ox, oy = np.meshgrid(g2, g2, indexing="ij")
    off = np.stack([ox.ravel(), oy.ravel()], axis=1)
    fp = grid.nodes[:, None, :] + off[None, :, :]
    half = order // 2
    blocks = qw.reshape(m, order, order)
    fw = np.stack(
        [blocks[:, :half, :half].sum((1, 2)), blocks[:, :half, half:].sum((1, 2)),
         blocks[:, half:, :half].sum((1, 2)), blocks[:, half:, half:].sum((1, 2))],
        axis=1,
    )
    P = fp.reshape(-1, 2)
    Wq = fw.ravel()
    W = np.zeros((m, m))
    chunk = 128
    for start in range(0, m, chunk):
        stop = min(start + chunk, m)
        Pa = P[4 * start:4 * stop]
        d2 = ((Pa[:, None, :] - P[None, :, :]) ** 2).sum(-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            # self pairs are infinite here; the diagonal is discarded below
            K = d2 ** (-1.0 - 0.5 * a)
            K *= Wq[4 * start:4 * stop, None] * Wq[None, :]
        W[start:stop] = K.reshape(stop - start, 4, m, 4).sum(axis=(1, 3))

    # near pairs: 4x4 rule per cell, touching cells regularised for ps >= 1
    lat = grid.lattice // 1
    di = (lat[:, None, 0] - lat[None, :, 0]) // 2
    dj = (lat[:, None, 1] - lat[None, :, 1]) // 2
    gx = np.maximum(np.abs(di) - 1, 0)
    gy = np.maximum(np.abs(dj) - 1, 0)
    near = (gx**2 + gy**2 < 4) & ~np.eye(m, dtype=bool)
    touching = (gx == 0) & (gy == 0)
    ii, jj = np.nonzero(np.triu(near))
    for lo in range(0, len(ii), 2048):
        bi, bj = ii[lo:lo + 2048], jj[lo:lo + 2048]
        diff = qp[bi][:, :, None, :] - qp[bj][:, None, :, :]
        r = np.sqrt((diff**2).sum(-1))
        K = r ** (-2.0 - a)
        if a >= 1.0:
            excl = touching[bi, bj][:, None, None] & (r <= 0.5 * h)
            K = np.where(excl, 0.0, K)
        vals = np.einsum("bq,bqr,br->b", qw[bi], K, qw[bj])
        W[bi, bj] = vals
        W[bj, bi] = vals
    W = 0.5 * (W + W.T)
    np.fill_diagonal(W, 0.0)
    W *= params.normalization
    E = grid.volumes * exterior_weight(grid.nodes, grid.domain, params)
    return W, E


def assemble_weights(grid: Grid, params: OperatorParams, closure: str = "auto") -> KernelWeights:
    """Assemble the discrete Dirichlet form on ``grid``.

    ``closure`` selects the exterior weights: ``"midpoint"`` uses
    ``vol_i * exterior_weight(x_i)``; ``"barrier"`` (intervals only, the
    default there) replaces the near-boundary values by weights calibrated so
    that the half-line solution ``(x)_+^s`` is discretely p-harmonic.
    ``"auto"`` picks the barrier on intervals and falls back to the midpoint
    rule when the calibrated weights are not all positive, which happens in a
    narrow band near ``ps = 1`` with ``p < 2``.  The choice is recorded in
    ``KernelWeights.closure``.
    """
    if closure == "auto":
        closure = "midpoint"
        if grid.dim == 1:
            if _barrier_available(params.p, params.s):
                closure = "barrier"
    if closure not in ("barrier", "midpoint"):
        raise ConfigurationError(f"unknown closure {closure!r}")
    if grid.dim == 1:
        W, E = _assemble_1d(grid, params, closure)
    else:
        if closure == "barrier":
            raise ConfigurationError("the barrier closure is only available on intervals")
        W, E = _assemble_2d(grid, params)
    if not (np.all(np.isfinite(W)) and np.all(np.isfinite(E))):
        raise GeometryError("non-finite kernel weights")
    W.setflags(write=False)
    E = np.asarray(E, dtype=float)
    E.setflags(write=False)
    return KernelWeights(grid=grid, params=params, W=W, E=E, closure=closure)


# ---------------------------------------------------------------------------
# rays and far fields


def _directions(dim: int, angles: int):
    """Pairs (unit vector e, weight) covering the sphere by e and -e."""
    if dim == 1:
        return [(np.array(1.0), 1.0)]
    theta = np.pi * (np.arange(angles) + 0.5) / angles
    return [(np.array([math.cos(t), math.sin(t)]), math.pi / angles) for t in theta]


def _ray_breaks(field: AnalyticField, x, e):
    """Positive distances along ``x + t e`` where ``field`` may be non-smooth."""
    out = []
    if field.dim == 1:
        for b in field.breakpoints:
            t = (b - float(x)) * float(e)
            if t > 0:
                out.append(t)
        if field.support is not None:
            for box in field.support:
                for b in box[0]:
                    t = (b - float(x)) * float(e)
                    if t > 0:
                        out.append(t)
        return sorted(set(out))
    x = np.asarray(x, dtype=float)
    xe = float(x @ e)
    xx = float(x @ x)
    for b in field.breakpoints:
        if isinstance(b, tuple):
            nrm = np.asarray(b[:2], dtype=float)
            den = float(nrm @ e)
            if den != 0.0:
                t = (b[2] - float(nrm @ x)) / den
                if t > 0:
                    out.append(t)
        else:
            disc = xe * xe - xx + b * b
            if disc >= 0:
                for t in (-xe - math.sqrt(disc), -xe + math.sqrt(disc)):
                    if t > 0:
                        out.append(t)
    if field.support is not None:
        for box in field.support:
            for k in range(2):
                if e[k] != 0.0:
                    for b in box[k]:
                        t = (b - x[k]) / e[k]
                        if t > 0:
                            out.append(t)
    return sorted(set(out))


def _along(field: AnalyticField, x, e, t):
    if field.dim == 1:
        return field(float(x) + float(e) * t)
    return field(np.asarray(x)[None, :] + np.multiply.outer(t, e).reshape(-1, 2)).reshape(np.shape(t))


def _drop(field: AnalyticField, x, e, t):
    """``u(x) - u(x + t e)`` for an array of distances ``t``."""
    t = np.asarray(t, dtype=float)
    if field.dim == 1:
        return field.difference(x, float(e) * t)
    return field.difference(x, t[..., None] * np.asarray(e)).reshape(t.shape)


def _log_quad(func, lo, hi, breaks, epsrel=1e-11, decay=None):
    """``int_lo^hi func(t) dt`` via ``t = exp(tau)``.

    ``hi`` may be infinite when ``t func(t)`` decays at least like ``t^-decay``;
    the log variable is then truncated where ``exp(-decay tau)`` drops below ``e^-40``.
    """
    tl = math.log(lo)
    inner = sorted(math.log(b) for b in breaks if lo < b < (hi if math.isfinite(hi) else np.inf))

    def g(tau):
        t = math.exp(tau)
        return func(t) * t

    total, err = 0.0, 0.0
    cuts = [tl] + inner
    if math.isfinite(hi):
        cuts.append(math.log(hi))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for u0, u1 in zip(cuts[:-1], cuts[1:]):
            if u1 > u0:
                v, e = integrate.quad(g, u0, u1, epsabs=0.0, epsrel=epsrel, limit=500)
                total += v
                err += e
        if not math.isfinite(hi):
            if not decay or decay <= 0:
                raise DivergenceError("infinite ray integral without a decay rate")
            top = min(700.0, cuts[-1] + 40.0 / decay)
            v, e = integrate.quad(g, cuts[-1], top, epsabs=0.0, epsrel=epsrel, limit=500)
            total += v
            err += e + abs(v) * math.exp(-(top - cuts[-1]) * decay)
    return total, err


def _check_growth(field: AnalyticField, params: OperatorParams):
    if field.support is None and not field.growth_admissible(params.p, params.s):
        raise DivergenceError(
            f"growth exponent {field.growth} of {field.name!r} violates gamma (p-1) < ps "
            f"for p={params.p}, s={params.s}"
        )


# ---------------------------------------------------------------------------
# tail


def _tail_grid(u: GridFunction, center, R, params: OperatorParams) -> float:
    grid = u.grid
    a, q = params.ps, params.q
    mag = np.abs(u.values) ** q
    if grid.dim == 1:
        x = float(center)
        cells = grid.cells()
        c0, c1 = cells[:, 0], cells[:, 1]
        total = 0.0
        # right of the ball: y - x in [max(c0, x+R), c1]
        lo = np.maximum(c0, x + R) - x
        hi = c1 - x
        ok = hi > lo
        total += np.sum(mag[ok] * (lo[ok] ** -a - hi[ok] ** -a)) / a
        # left of the ball: x - y in [max(x - c1, R), x - c0]
        lo = np.maximum(x - c1, R)
        hi = x - c0
        ok = hi > lo
        total += np.sum(mag[ok] * (lo[ok] ** -a - hi[ok] ** -a)) / a
        return float(total)
    c = np.asarray(center, dtype=float)
    r = np.linalg.norm(grid.quad_points - c, axis=-1)
    with np.errstate(divide="ignore"):
        k = np.where(r >= R, r ** (-2.0 - a), 0.0)
    return float(np.sum(mag * np.sum(grid.quad_weights * k, axis=1)))


def _tail_field(field: AnalyticField, center, R, params: OperatorParams, angles: int) -> float:
    _check_growth(field, params)
    a, q = params.ps, params.q
    total = 0.0
    for e, wgt in _directions(field.dim, angles):
        for sign in (1.0, -1.0):
            ee = sign * e
            breaks = _ray_breaks(field, center, ee)
            hi = np.inf
            if field.support is not None:
                if not breaks:
                    continue
                hi = max(breaks)
                if hi <= R:
                    continue

            def f(t, ee=ee):
                return float(np.abs(_along(field, center, ee, np.array(t))) ** q) * t ** (-1.0 - a)

            v, _ = _log_quad(f, R, hi, breaks, decay=a - field.growth * q)
            total += wgt * v
    return total


def tail(field: Union[AnalyticField, GridFunction], center, radius: float, params: OperatorParams,
         angles: int = 64) -> float:
    """``Tail(u; x, R) = (R^ps int_{|y-x| >= R} |u(y)|^(p-1) |x-y|^(-N-ps) dy)^(1/(p-1))``.

    Grid functions contribute only from the parts of their cells outside the
    ball; analytic fields are integrated over all of space.
    """
    if radius <= 0:
        raise ConfigurationError("tail radius must be positive")
    if isinstance(field, GridFunction):
        integral = _tail_grid(field, center, radius, params)
    else:
        integral = _tail_field(field, center, radius, params, angles)
    integral = max(integral, 0.0)
    return float((radius**params.ps * integral) ** (1.0 / params.q))


# ---------------------------------------------------------------------------
# pointwise operator


@dataclass(frozen=True)
class EpsilonSchedule:
    """Strictly decreasing truncation radii ``eps_0 > eps_1 > ... > 0``."""

    eps: tuple

    def __post_init__(self):
        e = tuple(float(v) for v in self.eps)
        if len(e) < 2 or any(v <= 0 for v in e) or any(b >= a for a, b in zip(e, e[1:])):
            raise ConfigurationError("epsilon schedule must be positive and strictly decreasing")
        object.__setattr__(self, "eps", e)

    @classmethod
    def geometric(cls, eps0: float = 1.0, levels: int = 24, ratio: float = 0.5) -> "EpsilonSchedule":
        if levels < 12:
            raise ConfigurationError("use at least 12 refinement levels")
        return cls(tuple(eps0 * ratio**k for k in range(levels + 1)))

    def __len__(self):
        return len(self.eps)


@dataclass(frozen=True)
class EpsSeries:
    """Truncated integrals over ``|x - y| > eps_k`` with convergence diagnostics.

    ``resolved`` is the last level whose increment stands clear of the
    rounding noise; ``ratio`` the median contraction of the increments up to
    it; ``remainder`` the geometric extrapolation of what lies below
    ``eps[resolved]``.  ``limit_error`` estimates the error of the
    extrapolated limit from how much it moved over the last levels.
    """

    eps: np.ndarray
    values: np.ndarray
    increments: np.ndarray
    noise: np.ndarray
    resolved: int
    ratio: float
    remainder: float
    cauchy_tail: float
    decaying: bool
    tol: float
    limit_error: float = math.nan

    @property
    def converged(self) -> bool:
        return self.decaying and self.cauchy_tail < self.tol

    @property
    def limit(self) -> float:
        return float(self.values[self.resolved] + (self.remainder if self.decaying else 0.0))

    def __len__(self):
        return len(self.values)

    def __getitem__(self, k):
        return self.values[k]


@dataclass(frozen=True)
class PointValue:
    """Result of :func:`eval_pointwise`; behaves like its ``value`` in arithmetic."""

    value: float
    error_bar: float
    series: EpsSeries
    far_value: float
    far_error: float
    tail_bound: float
    tail_exact: bool

    def __float__(self):
        return float(self.value)


def _series_diagnostics(values, noise, tol, noise_factor=1e5):
    inc = np.diff(values)
    nz = noise[1:]
    resolved = len(values) - 1
    for k in range(len(inc)):
        if inc[k] != 0.0 and abs(inc[k]) < noise_factor * nz[k]:
            resolved = k  # values[k] is the last trustworthy partial integral
            break
    d = inc[:resolved]
    window = d[-6:] if d.size else d
    if window.size == 0 or np.all(window == 0.0):
        ratio, decaying, remainder = 0.0, True, 0.0
    else:
        prev, cur = window[:-1], window[1:]
        ok = prev != 0.0
        ratios = np.abs(cur[ok] / prev[ok]) if np.any(ok) else np.array([np.inf])
        ratio = float(np.median(ratios)) if ratios.size else 0.0
        decaying = ratio < 0.9
        remainder = float(d[-1] * ratio / (1.0 - ratio)) if decaying else math.nan
    cauchy = abs(remainder) if decaying else math.inf
    return inc, resolved, ratio, remainder, cauchy, decaying, _limit_error(values, d, ratio, remainder)


def _limit_error(values, d, ratio, remainder, window=3):
    """Spread of the extrapolated limits over the last ``window`` levels.

    A true contraction ``rho`` that differs from the estimate ``ratio`` leaves
    an error of about ``rho / (1 - rho)`` times the spread, hence the factor.
    """
    if not 0.0 <= ratio < 0.9:
        return math.inf
    if d.size < window + 1:
        return abs(remainder)
    gain = ratio / (1.0 - ratio)
    limits = values[1 : d.size + 1][-(window + 1):] + d[-(window + 1):] * gain
    return float(2.0 * max(1.0, gain) * np.max(np.abs(np.diff(limits))))


def _pv_parts(field: AnalyticField, x, params: OperatorParams, schedule: EpsilonSchedule,
              far_cutoff: float, near_radius: float, order: int, angles: int):
    a, q = params.ps, params.q
    eps = np.asarray(schedule.eps)
    if near_radius < eps[0]:
        raise ConfigurationError("the pairing radius must not be smaller than eps_0")
    if far_cutoff <= near_radius:
        raise ConfigurationError("far cutoff must exceed the pairing radius")
    xv = np.asarray(x, dtype=float) if field.dim == 2 else float(x)
    ux = float(field(xv))
    if not math.isfinite(ux):
        raise ConfigurationError(f"field is not finite at x={x}")
    levels = len(eps)
    bounds = [near_radius] + list(eps)
    near = np.zeros(levels)
    near_hi = np.zeros(levels)
    noise = np.zeros(levels)
    far_v, far_e, tail_b = 0.0, 0.0, 0.0
    support_r = field.support_radius
    xnorm = float(np.linalg.norm(np.atleast_1d(xv)))
    exact_tail = support_r + xnorm <= far_cutoff
    if not exact_tail:
        _check_growth(field, params)

    for e, wgt in _directions(field.dim, angles):
        bp = sorted(set(_ray_breaks(field, xv, e)) | set(_ray_breaks(field, xv, -e)))
        for k in range(levels):
            lo, hi = bounds[k + 1], bounds[k]
            if hi <= lo:
                continue
            edges = graded_edges(lo, hi, bp)
            vals = []
            for ordr in (order, 2 * order):
                t, w = panel_points(edges, ordr)
                dp = _drop(field, xv, e, t)
                dm = _drop(field, xv, -e, t)
                kern = t ** (-1.0 - a)
                vals.append(float(np.sum(w * (signed_power(dp, q) + signed_power(dm, q)) * kern)))
                if ordr == order:
                    if field.diff is not None:
                        eta_p, eta_m = 4 * _EPS * np.abs(dp), 4 * _EPS * np.abs(dm)
                    else:
                        eta_p = 4 * _EPS * (abs(ux) + np.abs(ux - dp))
                        eta_m = 4 * _EPS * (abs(ux) + np.abs(ux - dm))
                    nz = ((np.abs(dp) + eta_p) ** q - np.abs(dp) ** q) + ((np.abs(dm) + eta_m) ** q - np.abs(dm) ** q)
                    noise[k] += wgt * float(np.sum(w * nz * kern))
            near[k] += wgt * vals[1]
            near_hi[k] += wgt * abs(vals[1] - vals[0])

        for ee in (e, -e):
            breaks = _ray_breaks(field, xv, ee)

            def f(t, ee=ee):
                return signed_power(float(_drop(field, xv, ee, np.array(t))), q) * t ** (-1.0 - a)

            v, err = _log_quad(f, near_radius, far_cutoff, breaks)
            far_v += wgt * v
            far_e += wgt * err
            if exact_tail:
                far_v += wgt * signed_power(ux, q) * far_cutoff ** -a / a
            else:
                C, gam = field.growth_const, field.growth

                def bound(t):
                    return (abs(ux) + C * (1.0 + xnorm + t) ** gam) ** q * t ** (-1.0 - a)

                tb, _ = _log_quad(bound, far_cutoff, np.inf, [], decay=a - gam * q)
                tail_b += wgt * tb

    factor = 2.0 * params.normalization
    values = factor * (far_v + np.cumsum(near))
    return dict(
        values=values,
        noise=factor * np.cumsum(noise),
        level_noise=factor * noise,
        quad_err=factor * near_hi,
        far_value=factor * far_v,
        far_error=factor * far_e,
        tail_bound=factor * tail_b,
        tail_exact=exact_tail,
    )


def eps_limit_series(field: AnalyticField, x, params: OperatorParams,
                     schedule: Optional[EpsilonSchedule] = None, *, far_cutoff: float = 1e3,
                     near_radius: float = 1.0, order: int = 8, angles: int = 32,
                     tol: float = 1e-5) -> EpsSeries:
    """Truncated integrals ``2 int_{|x-y| > eps_k} (u(x)-u(y))^(p-1) |x-y|^(-N-ps) dy``.

    Never raises on divergence: inspect ``converged``/``decaying``.
    """
    schedule = schedule or EpsilonSchedule.geometric(near_radius)
    parts = _pv_parts(field, x, params, schedule, far_cutoff, near_radius, order, angles)
    values = parts["values"]
    inc, resolved, ratio, remainder, cauchy, decaying, lim_err = _series_diagnostics(
        values, parts["level_noise"], tol
    )
    return EpsSeries(
        eps=np.asarray(schedule.eps),
        values=values,
        increments=inc,
        noise=parts["level_noise"],
        resolved=resolved,
        ratio=ratio,
        remainder=remainder,
        cauchy_tail=cauchy,
        decaying=decaying,
        tol=tol,
        limit_error=lim_err,
    )


def eval_pointwise(field: AnalyticField, x, params: OperatorParams,
                   schedule: Optional[EpsilonSchedule] = None, far_cutoff: float = 1e3, *,
                   override_singular: bool = False, near_radius: float = 1.0, order: int = 8,
                   angles: int = 32) -> PointValue:
    """Principal value ``(-Delta)^s_p u(x)`` of an analytic field.

    Inside ``|x - y| < near_radius`` each ``y`` is paired with its reflection
    about ``x`` and integrated on geometrically graded Gauss panels (one panel
    group per level of ``schedule``); the annulus up to ``far_cutoff`` uses
    adaptive quadrature; beyond it the contribution is exact for compactly
    supported fields and otherwise bounded and reported in ``error_bar``.

    Raises
    ------
    SingularCaseError
        If ``p < 2`` and ``s >= 2(p-1)/p`` without ``override_singular``.
    ConvergenceError
        If the truncated integrals do not settle as ``eps -> 0``.
    """
    if not params.pointwise_valid and not override_singular:
        raise SingularCaseError(
            f"pointwise evaluation needs s < 2(p-1)/p = {params.singular_threshold:.6g} "
            f"when p < 2 (got p={params.p}, s={params.s}); the integral need not converge"
        )
    schedule = schedule or EpsilonSchedule.geometric(near_radius)
    parts = _pv_parts(field, x, params, schedule, far_cutoff, near_radius, order, angles)
    values = parts["values"]
    inc, resolved, ratio, remainder, cauchy, decaying, lim_err = _series_diagnostics(
        values, parts["level_noise"], math.inf
    )
    series = EpsSeries(
        eps=np.asarray(schedule.eps), values=values, increments=inc, noise=parts["level_noise"],
        resolved=resolved, ratio=ratio, remainder=remainder, cauchy_tail=cauchy,
        decaying=decaying, tol=math.inf, limit_error=lim_err,
    )
    if not decaying:
        raise ConvergenceError(
            f"truncated integrals do not converge at x={x} (increment ratio {ratio:.3g})",
            diagnostics=series,
        )
    value = float(values[resolved] + remainder)
    error_bar = (
        lim_err
        + float(np.sum(parts["quad_err"][: resolved + 1]))
        + float(np.sum(parts["level_noise"][: resolved + 1]))
        + parts["far_error"]
        + parts["tail_bound"]
    )
    return PointValue(
        value=value,
        error_bar=error_bar,
        series=series,
        far_value=parts["far_value"],
        far_error=parts["far_error"],
        tail_bound=parts["tail_bound"],
        tail_exact=parts["tail_exact"],
    )


# ---------------------------------------------------------------------------
# perturbation by a function supported away from the point


def _box_to_domain_distance(box, domain: DomainSpec) -> float:
    box = np.asarray(box, dtype=float)
    if domain.kind == "interval":
        lo, hi = box[0]
        return max(0.0, lo - domain.b, domain.a - hi)
    # distance from the disc to the box: nearest point of the box to the origin
    nearest = np.clip(0.0, box[:, 0], box[:, 1])
    return max(0.0, float(np.linalg.norm(nearest)) - domain.radius)


def _grid_lookup(u: GridFunction):
    grid = u.grid
    vals = u.values

    def func(y):
        y = np.asarray(y, dtype=float)
        if grid.dim == 1:
            k = np.floor((y - grid.domain.a) / grid.h).astype(int)
            ok = (k >= 0) & (k < grid.n)
            return np.where(ok, vals[np.clip(k, 0, grid.n - 1)], 0.0)
        pts = y.reshape(-1, 2)
        lat = np.floor(pts / grid.h + 0.5 * grid.n).astype(int) * 2 + 1 - grid.n
        table = {tuple(l): i for i, l in enumerate(grid.lattice)}
        out = np.array([vals[table[tuple(l)]] if tuple(l) in table else 0.0 for l in lat])
        return out.reshape(y.shape[:-1])

    return AnalyticField(func, dim=grid.dim, support=None, growth=0.0,
                         growth_const=u.sup_norm(), name="grid function")


def perturbation_rhs(u: Union[AnalyticField, GridFunction], v: AnalyticField, x, params: OperatorParams,
                     domain: DomainSpec, panels: int = 16, order: int = 8) -> float:
    """Change of the operator at ``x`` when ``u`` is perturbed by ``v`` supported away from ``domain``.

    ``h(x) = 2 int_{supp v} [(u(x) - u(y) - v(y))^(p-1) - (u(x) - u(y))^(p-1)] |x - y|^(-N-ps) dy``
    (times the kernel normalisation).
    """
    if v.support is None:
        raise PreconditionError("perturbation must have a bounded support descriptor")
    for box in v.support:
        if _box_to_domain_distance(box, domain) <= 0.0:
            raise PreconditionError("support of the perturbation touches the domain")
    if not bool(np.all(domain.contains(np.asarray(x, dtype=float)))):
        raise PreconditionError("evaluation point must lie inside the domain")
    uf = _grid_lookup(u) if isinstance(u, GridFunction) else u
    a, q = params.ps, params.q
    xv = np.asarray(x, dtype=float) if uf.dim == 2 else float(x)
    ux = float(uf(xv))
    total = 0.0
    for box in v.support:
        if uf.dim == 1:
            lo, hi = box[0]
            breaks = [b for b in set(uf.breakpoints) | set(v.breakpoints) if lo < b < hi]

            def f(y):
                uy = float(uf(np.array(y)))
                vy = float(v(np.array(y)))
                return (signed_power(ux - uy - vy, q) - signed_power(ux - uy, q)) * abs(xv - y) ** (-1.0 - a)

            with warnings.catch_warnings():
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                val, _ = integrate.quad(f, lo, hi, points=breaks or None, epsabs=0.0,
                                        epsrel=1e-12, limit=500)
            total += val
        else:
            ex = np.linspace(box[0, 0], box[0, 1], panels + 1)
            ey = np.linspace(box[1, 0], box[1, 1], panels + 1)
            tx, wx = panel_points(ex, order)
            ty, wy = panel_points(ey, order)
            TX, TY = np.meshgrid(tx.ravel(), ty.ravel(), indexing="ij")
            WW = np.outer(wx.ravel(), wy.ravel())
            pts = np.stack([TX, TY], axis=-1)
            uy = uf(pts)
            vy = v(pts)
            r = np.linalg.norm(pts - xv, axis=-1)
            integrand = (signed_power(ux - uy - vy, q) - signed_power(ux - uy, q)) * r ** (-2.0 - a)
            total += float(np.sum(WW * integrand))
    return 2.0 * params.normalization * total
