"""Empirical checks of comparison, a-priori bounds, boundary behaviour, Hölder decay and weak Harnack.

Every checker reports measured quantities (ratios, fitted exponents,
constants) and asserts only what the discrete scheme guarantees exactly or
what is a stability statement; no sharp constants are assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .domain import DomainSpec, Grid, GridFunction, build_grid, distance_to_complement
from .energy import SolveOptions, solve
from .errors import ConvergenceError, PreconditionError
from .fields import distance_power
from .kernel import (
    EpsilonSchedule,
    KernelWeights,
    OperatorParams,
    assemble_weights,
    eval_pointwise,
    tail,
)

__all__ = [
    "ComparisonReport",
    "AprioriReport",
    "BoundaryReport",
    "OscillationTable",
    "HolderReport",
    "HarnackReport",
    "DeltaReport",
    "comparison_check",
    "apriori_check",
    "boundary_ratio",
    "oscillation_decay",
    "holder_fit",
    "harnack_check",
    "delta_s_rhs_check",
]


# ---------------------------------------------------------------------------
# comparison


@dataclass(frozen=True)
class ComparisonReport:
    """``max_i (u1_i - u2_i)`` against ``threshold = 10 tol max(|u1|, |u2|)``."""

    passed: bool
    max_violation: float
    threshold: float
    reports: tuple = field(repr=False)

    def __bool__(self):
        return self.passed


def comparison_check(f1: GridFunction, f2: GridFunction, w: KernelWeights,
                     opts: Optional[SolveOptions] = None) -> ComparisonReport:
    """Solve with both sources and check ``u1 <= u2`` up to the solver tolerance."""
    opts = opts or SolveOptions()
    if np.any(f1.values > f2.values):
        k = int(np.argmax(f1.values - f2.values))
        raise PreconditionError(f"sources are not ordered: f1 > f2 at node {k}")
    u1, r1 = solve(w, f1, opts)
    u2, r2 = solve(w, f2, opts)
    for rep in (r1, r2):
        if not rep.converged:
            raise ConvergenceError(f"solver did not converge: {rep.message}", diagnostics=rep)
    violation = float(np.max(u1.values - u2.values)) if u1.values.size else 0.0
    threshold = 10.0 * opts.tol * max(u1.sup_norm(), u2.sup_norm())
    return ComparisonReport(violation <= threshold, violation, threshold, (r1, r2))


# ---------------------------------------------------------------------------
# a-priori bound


@dataclass(frozen=True)
class AprioriReport:
    """``|u_K|_inf`` for ``f = K``, the log-log slope in ``K`` and ``C_d = |u|^(p-1) / K``."""

    K: np.ndarray
    sup_norms: np.ndarray
    slope: float
    C_values: np.ndarray
    C_d: float
    C_spread: float
    reports: tuple = field(repr=False)


def apriori_check(domain: DomainSpec, params: OperatorParams, K_list: Sequence[float], n: int,
                  opts: Optional[SolveOptions] = None, closure: str = "auto") -> AprioriReport:
    """Solve with ``f = K`` for every ``K`` and fit ``log |u|_inf`` against ``log K``."""
    K = np.asarray(sorted(float(k) for k in K_list))
    if K.size < 3 or np.any(K <= 0) or K[-1] / K[0] < 100.0 * (1 - 1e-12):
        raise PreconditionError("need at least three positive K values spanning two decades")
    grid = build_grid(domain, n)
    w = assemble_weights(grid, params, closure=closure)
    sups, reps = [], []
    for k in K:
        u, rep = solve(w, GridFunction(grid, np.full(grid.size, k)), opts)
        if not rep.converged:
            raise ConvergenceError(f"solver failed for K={k}: {rep.message}", diagnostics=rep)
        sups.append(u.sup_norm())
        reps.append(rep)
    sups = np.asarray(sups)
    slope = float(np.polyfit(np.log(K), np.log(sups), 1)[0])
    C = sups**params.q / K
    return AprioriReport(
        K=K, sup_norms=sups, slope=slope, C_values=C, C_d=float(C.max()),
        C_spread=float(C.max() / C.min() - 1.0), reports=tuple(reps),
    )


# ---------------------------------------------------------------------------
# boundary behaviour


@dataclass(frozen=True)
class BoundaryReport:
    """``sup |u| / delta^s`` with its location and the profile inside the collar ``delta < rho``."""

    sup_ratio: float
    argsup: int
    argsup_point: np.ndarray
    rho: float
    profile: np.ndarray  # rows (delta, |u| / delta^s), sorted by delta


def boundary_ratio(u: GridFunction, grid: Grid, params: OperatorParams,
                   rho: Optional[float] = None) -> BoundaryReport:
    """Measure ``|u_i| / delta_i^s`` over all nodes; tabulate it over the collar."""
    if not u.grid.same_as(grid):
        raise PreconditionError("grid function does not live on this grid")
    rho = grid.domain.diameter / 8.0 if rho is None else float(rho)
    delta = distance_to_complement(grid).values
    ratio = np.abs(u.values) / delta**params.s
    k = int(np.argmax(ratio))
    inside = delta < rho
    order = np.argsort(delta[inside], kind="stable")
    profile = np.stack([delta[inside][order], ratio[inside][order]], axis=1)
    return BoundaryReport(
        sup_ratio=float(ratio[k]), argsup=k, argsup_point=np.asarray(grid.nodes[k]), rho=rho,
        profile=profile,
    )


# ---------------------------------------------------------------------------
# oscillation and Hölder fits


@dataclass(frozen=True)
class OscillationTable:
    center: np.ndarray
    radii: np.ndarray
    osc: np.ndarray


def _ball_values(u: GridFunction, grid: Grid, center, r: float) -> np.ndarray:
    """Values of the zero-extended ``u`` that represent ``u`` on the closed ball.

    In 1D the ball's endpoints are included by linear interpolation between
    neighbouring nodes, with the value 0 on the boundary of the interval; a
    ball that reaches the complement contributes the exterior value 0.
    """
    vals = u.values
    if grid.dim == 1:
        x = grid.nodes
        c = float(center)
        inside = np.abs(x - c) <= r
        out = list(vals[inside])
        xs = np.concatenate([[grid.domain.a], x, [grid.domain.b]])
        us = np.concatenate([[0.0], vals, [0.0]])
        for end in (c - r, c + r):
            if grid.domain.a <= end <= grid.domain.b:
                out.append(float(np.interp(end, xs, us)))
        if c - r <= grid.domain.a or c + r >= grid.domain.b:
            out.append(0.0)
        return np.asarray(out)
    c = np.asarray(center, dtype=float)
    d = np.linalg.norm(grid.nodes - c, axis=1)
    out = list(vals[d <= r])
    if np.linalg.norm(c) + r >= grid.domain.radius:
        out.append(0.0)
    return np.asarray(out)


def oscillation_decay(u: GridFunction, grid: Grid, center, radii: Sequence[float]) -> OscillationTable:
    """``osc_{B_r(center)} u`` (max minus min over the ball) for each radius.

    Raises
    ------
    PreconditionError
        If a radius is below ``2h`` or its ball holds fewer than 3 nodes.
    """
    radii = np.asarray(sorted((float(r) for r in radii), reverse=True))
    if radii.size == 0:
        raise PreconditionError("need at least one radius")
    c = np.asarray(center, dtype=float)
    osc = []
    for r in radii:
        if r < 2.0 * grid.h * (1 - 1e-12):
            raise PreconditionError(f"radius {r:g} is too small (below 2h = {2 * grid.h:g})")
        if grid.dim == 1:
            count = int(np.sum(np.abs(grid.nodes - float(c)) <= r))
        else:
            count = int(np.sum(np.linalg.norm(grid.nodes - c, axis=1) <= r))
        if count < 3:
            raise PreconditionError(f"radius {r:g} is too small: ball holds {count} nodes")
        v = _ball_values(u, grid, c, r)
        osc.append(float(v.max() - v.min()))
    return OscillationTable(center=c, radii=radii, osc=np.asarray(osc))


@dataclass(frozen=True)
class HolderReport:
    """Per-centre oscillation tables and log-log fits ``osc ~ lambda r^alpha``.

    ``alpha`` is the smallest fitted exponent (``inf`` with ``constant=True``
    when every oscillation vanishes); ``C`` is ``lambda`` divided by
    ``(K R^ps)^(1/(p-1)) + sup|u| + Tail(u; centre, R)``.
    """

    tables: tuple
    alphas: np.ndarray
    lambdas: np.ndarray
    r_squared: np.ndarray
    alpha: float
    lam: float
    C: float
    center: np.ndarray
    fit_range: tuple
    constant: bool


def _boundary_centers(grid: Grid, count: int = 8):
    """Points of the boundary: both endpoints, or ``count`` equally spaced points on the circle."""
    dom = grid.domain
    if grid.dim == 1:
        return [dom.a, dom.b]
    theta = 2.0 * np.pi * (np.arange(count) + 0.5) / count
    return [dom.radius * np.array([math.cos(t), math.sin(t)]) for t in theta]


def _default_radii(grid: Grid):
    r_max = grid.domain.inradius / 8.0
    radii = []
    r = r_max
    while r >= 4.0 * grid.h * (1 - 1e-12):
        radii.append(r)
        r *= 0.5
    return radii


def holder_fit(u: GridFunction, grid: Grid, params: OperatorParams, centers=None, radii=None,
               K: float = 1.0) -> HolderReport:
    """Fit ``log osc`` against ``log r`` at each centre and keep the worst exponent.

    By default the centres lie on the boundary, where the solution is least
    regular, and the radii are dyadic between ``4h`` and an eighth of the
    inradius.
    """
    centers = _boundary_centers(grid) if centers is None else list(centers)
    radii = _default_radii(grid) if radii is None else list(radii)
    if len(radii) < 2:
        raise PreconditionError("a fit needs at least two radii")
    delta_of = lambda c: float(grid.domain.distance(np.asarray(c, dtype=float)))
    tables, alphas, lambdas, r2 = [], [], [], []
    for c in centers:
        tab = oscillation_decay(u, grid, c, radii)
        tables.append(tab)
        if np.all(tab.osc <= 0):
            alphas.append(math.inf)
            lambdas.append(0.0)
            r2.append(1.0)
            continue
        if np.any(tab.osc <= 0):
            raise PreconditionError("oscillation vanishes on part of the fit range")
        X, Y = np.log(tab.radii), np.log(tab.osc)
        slope, icpt = np.polyfit(X, Y, 1)
        pred = slope * X + icpt
        ss = float(np.sum((Y - Y.mean()) ** 2))
        r2.append(1.0 - float(np.sum((Y - pred) ** 2)) / ss if ss > 0 else 1.0)
        alphas.append(float(slope))
        lambdas.append(float(math.exp(icpt)))
    alphas = np.asarray(alphas)
    best = float(alphas.min())
    ties = [k for k, a in enumerate(alphas) if a <= best + 1e-3]
    k = min(ties, key=lambda j: delta_of(centers[j]))
    constant = not math.isfinite(best)
    R = max(radii)
    if constant:
        C = 0.0
    else:
        bracket = (K * R**params.ps) ** (1.0 / params.q) + u.sup_norm() + tail(u, centers[k], R, params)
        C = lambdas[k] / bracket if bracket > 0 else math.inf
    return HolderReport(
        tables=tuple(tables), alphas=alphas, lambdas=np.asarray(lambdas), r_squared=np.asarray(r2),
        alpha=best, lam=float(lambdas[k]), C=float(C), center=np.asarray(centers[k]),
        fit_range=(min(radii), max(radii)), constant=constant,
    )


# ---------------------------------------------------------------------------
# weak Harnack


@dataclass(frozen=True)
class HarnackReport:
    """Terms of the weak Harnack inequality and the implied ``sigma``.

    ``sigma = (inf_{B_R/4} u + C penalty + eps sup_{B_R} u + C_eps tail_neg) / average``.
    """

    inf_inner: float
    average: float
    penalty: float
    sup_ball: float
    tail_neg: float
    sigma: float
    C: float
    C_eps: float
    eps: float
    R: float


def _node_distance(grid: Grid, center):
    if grid.dim == 1:
        return np.abs(grid.nodes - float(center))
    return np.linalg.norm(grid.nodes - np.asarray(center, dtype=float), axis=1)


def harnack_check(u: GridFunction, grid: Grid, params: OperatorParams, K: float, center, R: float,
                  C: float = 1.0, C_eps: float = 1.0, eps: float = 0.0) -> HarnackReport:
    """Evaluate the weak Harnack terms for a supersolution ``u`` on ``B_R(center)``.

    The annulus average ``(|B_R \\ B_R/2|^-1 sum u^(p-1) vol)^(1/(p-1))`` uses
    the exact annulus measure; nodes outside the domain carry ``u = 0``.
    """
    if R <= 0 or K < 0:
        raise PreconditionError("need R > 0 and K >= 0")
    if not bool(np.all(grid.domain.contains(np.asarray(center, dtype=float)))):
        raise PreconditionError("Harnack centre must lie inside the domain")
    d = _node_distance(grid, center)
    vals = u.values
    ball = d < R
    if np.any(vals[ball] < 0):
        raise PreconditionError("u must be nonnegative on B_R")
    inner = d < R / 4.0
    if not np.any(inner):
        raise PreconditionError("no nodes inside B_{R/4}")
    q = params.q
    inf_inner = float(vals[inner].min())
    ann = (d >= R / 2.0) & ball
    measure = R if grid.dim == 1 else math.pi * (R * R - R * R / 4.0)
    average = float((np.sum(vals[ann] ** q * grid.volumes[ann]) / measure) ** (1.0 / q))
    penalty = float((K * R**params.ps) ** (1.0 / q))
    sup_ball = float(vals[ball].max()) if np.any(ball) else 0.0
    neg = np.minimum(vals, 0.0)
    tail_neg = tail(GridFunction(grid, -neg), center, R, params) if np.any(neg < 0) else 0.0
    top = inf_inner + C * penalty + eps * sup_ball + C_eps * tail_neg
    sigma = top / average if average > 0 else math.inf
    return HarnackReport(
        inf_inner=inf_inner, average=average, penalty=penalty, sup_ball=sup_ball,
        tail_neg=float(tail_neg), sigma=float(sigma), C=C, C_eps=C_eps, eps=eps, R=R,
    )


# ---------------------------------------------------------------------------
# the operator applied to delta^s


@dataclass(frozen=True)
class DeltaReport:
    """``(-Delta)^s_p delta^s`` at probe points, at two quadrature depths."""

    probes: np.ndarray
    delta: np.ndarray
    values: np.ndarray
    error_bars: np.ndarray
    refined: np.ndarray
    sup: float
    refined_sup: float
    drift: float
    passed: bool


def _probe_points(domain: DomainSpec, deltas):
    if domain.kind == "interval":
        return [domain.a + d for d in deltas]
    return [np.array([domain.radius - d, 0.0]) for d in deltas]


def delta_s_rhs_check(domain: DomainSpec, params: OperatorParams, rho: Optional[float] = None,
                      probes=None, levels: int = 24, far_cutoff: float = 1e3,
                      override_singular: bool = False, max_drift: float = 0.2) -> DeltaReport:
    """Evaluate the operator on the exact ``delta^s`` at probes in the collar ``delta < rho``.

    ``probes`` are points (default: distances ``rho/5, 2rho/5, 4rho/5`` from
    the boundary).  The evaluation is repeated with one more refinement level
    and order-doubled panels; the check passes when every value is finite and
    the supremum moves by less than ``max_drift`` (relative).
    """
    rho = domain.diameter / 4.0 if rho is None else float(rho)
    if probes is None:
        probes = _probe_points(domain, [rho / 5.0, 2.0 * rho / 5.0, 4.0 * rho / 5.0])
    probes = [np.asarray(x, dtype=float) for x in probes]
    delta = np.array([float(domain.distance(x)) for x in probes])
    if np.any(delta <= 0) or np.any(delta >= rho):
        raise PreconditionError(f"probes must lie in the collar 0 < delta < {rho:g}")
    field_ = distance_power(domain, params.s)
    coarse = EpsilonSchedule.geometric(1.0, levels)
    fine = EpsilonSchedule.geometric(1.0, levels + 1)
    vals, bars, ref = [], [], []
    for x in probes:
        pt = float(x) if domain.dim == 1 else x
        a = eval_pointwise(field_, pt, params, coarse, far_cutoff, override_singular=override_singular)
        b = eval_pointwise(field_, pt, params, fine, far_cutoff, override_singular=override_singular,
                           order=16)
        vals.append(a.value)
        bars.append(a.error_bar)
        ref.append(b.value)
    vals, ref = np.asarray(vals), np.asarray(ref)
    sup = float(np.max(np.abs(vals)))
    refined_sup = float(np.max(np.abs(ref)))
    drift = abs(refined_sup - sup) / sup if sup > 0 else (0.0 if refined_sup == 0 else math.inf)
    passed = bool(np.all(np.isfinite(vals)) and np.all(np.isfinite(ref)) and drift < max_drift)
    return DeltaReport(
        probes=np.asarray(probes), delta=delta, values=vals, error_bars=np.asarray(bars),
        refined=ref, sup=sup, refined_sup=refined_sup, drift=float(drift), passed=passed,
    )
