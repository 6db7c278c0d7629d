"""Discrete energy, its gradient (the discrete weak form) and the convex minimiser.

With pair weights ``W`` and exterior weights ``E`` from :mod:`fraclab.kernel`

    J(u) = (1/p) [sum_{i<j} 2 W_ij |u_i - u_j|^p + sum_i 2 E_i |u_i|^p] - sum_i f_i u_i vol_i

and ``dJ/du_i = vol_i * r_i`` with the residual

    r_i = [2 sum_j W_ij (u_i - u_j)^(p-1) + 2 E_i u_i^(p-1)] / vol_i - f_i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from .domain import DomainSpec, GridFunction, build_grid
from .errors import ConfigurationError, NumericalError
from .kernel import KernelWeights, OperatorParams, assemble_weights, signed_power

__all__ = [
    "SolveOptions",
    "SolveReport",
    "discrete_energy",
    "seminorm_energy",
    "energy_change",
    "apply_operator",
    "residual",
    "rounding_floor",
    "solve",
    "torsion",
]

STRATEGIES = ("auto", "adaptive-two-point", "fixed", "reweighted")
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class SolveOptions:
    """Solver settings.

    Parameters
    ----------
    tol : float
        Target for ``max|r_i|`` relative to ``max|f|``.
    max_iter : int
        Iteration cap.
    step : str
        ``"adaptive-two-point"`` (Barzilai-Borwein steps with monotone
        backtracking), ``"fixed"`` (constant step with the same safeguard),
        ``"reweighted"`` (iteratively reweighted least squares, a
        majorise-minimise scheme suited to ``p < 2``) or ``"auto"``, which
        picks two-point steps for ``p >= 2`` and reweighting below.
    initial : GridFunction, optional
        Starting point; zero by default.
    fixed_step : float, optional
        Step for ``"fixed"``; defaults to the inverse Gershgorin bound of
        the linearised operator at the first iterate.
    floor_factor : float
        Multiple of machine epsilon used in the rounding floor of the
        residual (see :func:`rounding_floor`).
    """

    tol: float = 1e-10
    max_iter: int = 50_000
    step: str = "auto"
    initial: Optional[GridFunction] = None
    fixed_step: Optional[float] = None
    floor_factor: float = 16.0

    def __post_init__(self):
        if not (self.tol > 0 and math.isfinite(self.tol)):
            raise ConfigurationError(f"tolerance must be positive, got {self.tol}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ConfigurationError(f"max_iter must be a positive integer, got {self.max_iter}")
        if self.step not in STRATEGIES:
            raise ConfigurationError(f"unknown step strategy {self.step!r}; use one of {STRATEGIES}")
        if self.fixed_step is not None and not self.fixed_step > 0:
            raise ConfigurationError("fixed_step must be positive")


@dataclass(frozen=True)
class SolveReport:
    """Outcome of :func:`solve`.

    ``residual`` is ``max|r_i|``; ``tolerance`` the absolute threshold it was
    compared with, i.e. ``max(tol * max|f|, rounding floor)``.  ``decrements``
    holds the energy change of every accepted step; each is negative even
    when it is too small to move the accumulated ``trajectory``.
    """

    iterations: int
    energy: float
    residual: float
    tolerance: float
    trajectory: np.ndarray = field(repr=False)
    converged: bool
    strategy: str
    message: str = ""
    decrements: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)


def _check(u: GridFunction, w: KernelWeights, f: Optional[GridFunction] = None):
    if not u.grid.same_as(w.grid):
        raise ConfigurationError("grid function and kernel weights live on different grids")
    if f is not None and not f.grid.same_as(w.grid):
        raise ConfigurationError("source term and kernel weights live on different grids")


def _values(u) -> np.ndarray:
    return u.values if isinstance(u, GridFunction) else np.asarray(u, dtype=float)


def _pair_sum(u, W, q):
    """``sum_j W_ij (u_i - u_j)^q`` for every ``i``."""
    D = u[:, None] - u[None, :]
    return np.einsum("ij,ij->i", W, signed_power(D, q))


def apply_operator(u, w: KernelWeights) -> np.ndarray:
    """Discrete ``(-Delta)^s_p u`` at every node (the residual without ``f``)."""
    if isinstance(u, GridFunction):
        _check(u, w)
    x = _values(u)
    q = w.params.q
    return 2.0 * (_pair_sum(x, w.W, q) + w.E * signed_power(x, q)) / w.grid.volumes


def residual(u: GridFunction, w: KernelWeights, f: GridFunction) -> GridFunction:
    """Discrete weak-form residual ``r = (-Delta)^s_p u - f`` (zero exactly at the minimiser)."""
    _check(u, w, f)
    return GridFunction(w.grid, apply_operator(u, w) - f.values)


def seminorm_energy(u, w: KernelWeights) -> float:
    """``(1/p) [sum_{i<j} 2 W_ij |u_i - u_j|^p + sum_i 2 E_i |u_i|^p]``."""
    x = _values(u)
    p = w.params.p
    D = _abs_pow(x[:, None] - x[None, :], p)
    return float((np.sum(w.W * D) + 2.0 * np.dot(w.E, _abs_pow(x, p))) / p)


def discrete_energy(u: GridFunction, w: KernelWeights, f: GridFunction) -> float:
    """``J(u)``: seminorm part minus ``sum_i f_i u_i vol_i``."""
    _check(u, w, f)
    return seminorm_energy(u, w) - float(np.dot(f.values * w.grid.volumes, u.values))


def _abs_pow(a, p):
    if p == 2.0:
        return a * a
    if p == 3.0:
        return a * a * np.abs(a)
    return np.abs(a) ** p


def _powdiff(x0, dx, p):
    """``|x0 + dx|^p - |x0|^p`` without cancellation when ``dx`` is small."""
    if p == 2.0:
        return dx * (2.0 * x0 + dx)
    x1 = x0 + dx
    if p == 3.0:
        same = x0 * x1 >= 0
        sgn = np.where(x0 != 0, np.sign(x0), np.sign(x1))
        factored = sgn * dx * (x1 * x1 + x1 * x0 + x0 * x0)
        return np.where(same, factored, _abs_pow(x1, p) - _abs_pow(x0, p))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = dx / x0
        small = (x0 != 0) & (np.abs(ratio) < 0.5)
        stable = np.abs(x0) ** p * np.expm1(p * np.log1p(np.where(small, ratio, 0.0)))
    return np.where(small, stable, np.abs(x1) ** p - np.abs(x0) ** p)


def energy_change(u, du, w: KernelWeights, f) -> float:
    """``J(u + du) - J(u)`` evaluated term by term so that tiny decreases stay visible."""
    x, d, fv = _values(u), _values(du), _values(f)
    p = w.params.p
    D0 = x[:, None] - x[None, :]
    DD = d[:, None] - d[None, :]
    pairs = np.sum(w.W * _powdiff(D0, DD, p))
    ext = 2.0 * np.dot(w.E, _powdiff(x, d, p))
    return float((pairs + ext) / p - np.dot(fv * w.grid.volumes, d))


def rounding_floor(u, w: KernelWeights, factor: float = 16.0) -> float:
    """Smallest residual that rounding lets us certify at ``u``.

    Node differences carry relative errors of order ``factor * eps``; the
    signed power turns them into errors of order ``(factor eps)^min(1, p-1)``
    in each pair term, summed with the row weights ``2 (sum_j W_ij + E_i) / vol_i``.
    """
    x = _values(u)
    q = w.params.q
    scale = float(np.max(np.abs(x))) if x.size else 0.0
    if scale == 0.0:
        return 0.0
    rows = 2.0 * (w.row_sums + w.E) / w.grid.volumes
    return float(np.max(rows)) * scale**q * (factor * _EPS) ** min(1.0, q)


def _dirichlet_size(d, w: KernelWeights) -> float:
    """``sum_{i<j} 2 W |d_i - d_j|^p + 2 sum E |d_i|^p`` (``p`` times the seminorm energy)."""
    return w.params.p * seminorm_energy(d, w)


def _ray_start(d, w, fv, vol):
    """Exact minimiser of ``t -> J(t d)`` for ``t >= 0``."""
    load = float(np.dot(fv * vol, d))
    size = _dirichlet_size(d, w)
    if load <= 0 or size <= 0:
        return 0.0
    return (load / size) ** (1.0 / w.params.q)


class _Tracker:
    def __init__(self, J0):
        self.J = J0
        self.traj = [J0]
        self.steps = []

    def accept(self, dJ):
        if not math.isfinite(dJ):
            raise NumericalError("energy became non-finite")
        self.J += dJ
        self.traj.append(self.J)
        self.steps.append(dJ)


def _backtrack(x, d, t, w, fv, halvings=80):
    for _ in range(halvings):
        dJ = energy_change(x, t * d, w, fv)
        if not math.isfinite(dJ):
            raise NumericalError("energy became non-finite during line search")
        if dJ < 0:
            return t, dJ
        t *= 0.5
    return 0.0, 0.0


def _jacobi(x, w):
    """Diagonal of the Hessian of ``J`` in the volume metric (floored to stay positive)."""
    p = w.params.p
    if p == 2.0:
        diag = 2.0 * (w.row_sums + w.E)
    else:
        D = np.abs(x[:, None] - x[None, :])
        xs = float(np.max(np.abs(x)))
        floor = (1e-3 * xs) ** (p - 2.0)
        diag = 2.0 * (p - 1.0) * (
            np.einsum("ij,ij->i", w.W, np.maximum(D ** (p - 2.0), floor))
            + w.E * np.maximum(np.abs(x) ** (p - 2.0), floor)
        )
    return diag / w.grid.volumes


def _gradient_descent(x, w, fv, opts, target, two_point, refresh=25):
    """Steepest descent in a Jacobi-scaled metric; two-point or fixed step lengths."""
    vol = w.grid.volumes
    tracker = _Tracker(_energy_of(x, w, fv))
    r = apply_operator(x, w) - fv
    alpha = opts.fixed_step
    precond = None
    it = 0
    msg = ""
    for it in range(1, opts.max_iter + 1):
        tol_abs = max(target, rounding_floor(x, w, opts.floor_factor))
        if float(np.max(np.abs(r))) <= tol_abs:
            it -= 1
            break
        if not np.any(x):
            d = -r
            t = _ray_start(d, w, fv, vol)
            dJ = energy_change(x, t * d, w, fv) if t > 0 else 0.0
            if not dJ < 0:
                t, dJ = _backtrack(x, d, 1.0, w, fv)
        else:
            if two_point and (precond is None or it % refresh == 0):
                precond = _jacobi(x, w)
            d = -r / precond if two_point else -r
            if alpha is None:
                alpha = _gershgorin_step(x, w) if not two_point else 1.0
            t, dJ = _backtrack(x, d, alpha, w, fv)
        if t == 0.0:
            msg = "line search stalled at the rounding floor"
            it -= 1
            break
        step = t * d
        x = x + step
        tracker.accept(dJ)
        r_new = apply_operator(x, w) - fv
        if two_point and precond is not None:
            y = (r_new - r) * vol
            sy = float(np.dot(step, y))
            alpha = float(np.dot(step * vol * precond, step)) / sy if sy > 0 else 2.0 * t
        r = r_new
    return x, r, tracker, it, msg


def _gershgorin_step(x, w):
    """Inverse of a Gershgorin bound for the Hessian of ``J`` at ``x`` in the volume metric."""
    rows = 2.0 * (w.params.p - 1.0) * 2.0 * (w.row_sums + w.E) / w.grid.volumes
    xs = float(np.max(np.abs(x)))
    return 1.0 / (float(np.max(rows)) * xs ** (w.params.p - 2.0))


def _energy_of(x, w, fv):
    return seminorm_energy(x, w) - float(np.dot(fv * w.grid.volumes, x))


def _weighted_solve(omega, eweights, w, rhs):
    A = -2.0 * w.W * omega
    np.fill_diagonal(A, 0.0)
    np.fill_diagonal(A, -A.sum(axis=1) + 2.0 * w.E * eweights)
    return linalg.solve(A, rhs, assume_a="pos", check_finite=False)


def _reweighted(x, w, fv, opts, target):
    """Iteratively reweighted least squares on the smoothed weights ``(D^2 + eta^2)^((p-2)/2)``."""
    p = w.params.p
    vol = w.grid.volumes
    tracker = _Tracker(_energy_of(x, w, fv))
    rhs = fv * vol
    if not np.any(x):
        d = _weighted_solve(np.ones_like(w.W), np.ones_like(w.E), w, rhs)
        t = _ray_start(d, w, fv, vol)
        if t > 0:
            dJ = energy_change(x, t * d, w, fv)
            if dJ < 0:
                x = t * d
                tracker.accept(dJ)
    eta = 0.1 * float(np.max(np.abs(x))) if np.any(x) else 1.0
    r = apply_operator(x, w) - fv
    it, msg = 0, ""
    for it in range(1, opts.max_iter + 1):
        tol_abs = max(target, rounding_floor(x, w, opts.floor_factor))
        if float(np.max(np.abs(r))) <= tol_abs:
            it -= 1
            break
        D = x[:, None] - x[None, :]
        omega = (D * D + eta * eta) ** (0.5 * (p - 2.0))
        ew = (x * x + eta * eta) ** (0.5 * (p - 2.0))
        d = _weighted_solve(omega, ew, w, rhs) - x
        t, dJ = _backtrack(x, d, 1.0, w, fv, halvings=60)
        if t == 0.0:
            # the smoothed model no longer improves J: fall back to a gradient step
            g = -r
            t, dJ = _backtrack(x, g, _ray_scale(x, g), w, fv)
            if t == 0.0:
                msg = "line search stalled at the rounding floor"
                it -= 1
                break
            d = g
        step = t * d
        x = x + step
        tracker.accept(dJ)
        xs = float(np.max(np.abs(x)))
        eta = max(min(eta, float(np.max(np.abs(step)))), 1e-15 * xs)
        r = apply_operator(x, w) - fv
    return x, r, tracker, it, msg


def _ray_scale(x, g):
    gs = float(np.max(np.abs(g)))
    return float(np.max(np.abs(x))) / gs if gs > 0 else 1.0


def solve(w: KernelWeights, f: GridFunction, opts: Optional[SolveOptions] = None):
    """Minimise the discrete energy; returns ``(u, SolveReport)``.

    Every accepted step strictly decreases ``J`` (checked with the
    cancellation-free :func:`energy_change`).  Stopping happens when
    ``max|r| <= max(tol * max|f|, rounding floor)``; if the iteration cap or a
    stalled line search comes first the report has ``converged = False``.
    """
    opts = opts or SolveOptions()
    if not f.grid.same_as(w.grid):
        raise ConfigurationError("source term and kernel weights live on different grids")
    p = w.params.p
    strategy = opts.step
    if strategy == "auto":
        strategy = "adaptive-two-point" if p >= 2 else "reweighted"
    if opts.initial is not None:
        _check(opts.initial, w)
        x0 = opts.initial.values.copy()
    else:
        x0 = np.zeros(w.grid.size)
    fv = f.values
    target = opts.tol * float(np.max(np.abs(fv))) if fv.size else 0.0
    if strategy == "reweighted":
        x, r, tracker, it, msg = _reweighted(x0, w, fv, opts, target)
    else:
        x, r, tracker, it, msg = _gradient_descent(
            x0, w, fv, opts, target, two_point=(strategy == "adaptive-two-point")
        )
    if not np.all(np.isfinite(x)):
        raise NumericalError("solver produced non-finite values")
    res = float(np.max(np.abs(r))) if r.size else 0.0
    tol_abs = max(target, rounding_floor(x, w, opts.floor_factor))
    converged = res <= tol_abs
    if not converged and not msg:
        msg = f"no convergence within {opts.max_iter} iterations"
    report = SolveReport(
        iterations=max(it, 0),
        energy=tracker.J,
        residual=res,
        tolerance=tol_abs,
        trajectory=np.asarray(tracker.traj),
        converged=converged,
        strategy=strategy,
        message=msg,
        decrements=np.asarray(tracker.steps, dtype=float),
    )
    return GridFunction(w.grid, x), report


def torsion(domain: DomainSpec, params: OperatorParams, n: int, opts: Optional[SolveOptions] = None,
            closure: str = "auto"):
    """Solve ``(-Delta)^s_p psi = 1`` in ``domain`` with zero exterior data."""
    grid = build_grid(domain, n)
    w = assemble_weights(grid, params, closure=closure)
    f = GridFunction(grid, np.ones(grid.size))
    return solve(w, f, opts)
