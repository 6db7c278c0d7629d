"""The acceptance battery A1-A12 as plain functions returning :class:`CriterionResult`.

Each criterion runs at its documented parameters by default; the grid sizes
can be lowered through :class:`Settings` for quick runs of the CLI suite.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, Iterable, Optional, Tuple

import numpy as np

from . import fields
from .domain import DomainSpec, GridFunction, build_grid
from .energy import apply_operator, torsion
from .kernel import (
    OperatorParams,
    assemble_weights,
    eps_limit_series,
    eval_pointwise,
    perturbation_rhs,
)
from .regularity import (
    apriori_check,
    boundary_ratio,
    comparison_check,
    delta_s_rhs_check,
    harnack_check,
    holder_fit,
)

__all__ = ["Settings", "CriterionResult", "CRITERIA", "run_criterion", "run_all"]

P_GRID = (1.5, 2.0, 3.0)
S_GRID = (0.3, 0.5, 0.7)


@dataclass(frozen=True)
class Settings:
    """Resolution knobs; the defaults are the documented acceptance parameters."""

    n: int = 512
    scan: Tuple[int, ...] = (128, 256, 512)
    pairs: int = 100
    pair_n: int = 128
    apriori_n: int = 256
    disc_n: int = 32
    seed: int = 20240601

    @classmethod
    def from_resolution(cls, n: int, pairs: int = 100) -> "Settings":
        n = int(n)
        return cls(n=n, scan=(max(n // 4, 8), max(n // 2, 8), n), pairs=pairs,
                   pair_n=min(128, n), apriori_n=min(256, n))


@dataclass(frozen=True)
class CriterionResult:
    key: str
    title: str
    passed: bool
    summary: str
    details: dict = field(default_factory=dict, repr=False)
    seconds: float = 0.0

    def line(self) -> str:
        return f"{self.key} {'PASS' if self.passed else 'FAIL'}  {self.title}: {self.summary}"


@lru_cache(maxsize=64)
def _torsion(p: float, s: float, n: int, classical: bool = False):
    dom = DomainSpec.interval(-1.0, 1.0)
    params = OperatorParams.classical(p, s, 1) if classical else OperatorParams(p, s)
    u, rep = torsion(dom, params, n)
    return u, rep, params


def clear_cache():
    _torsion.cache_clear()


# ---------------------------------------------------------------------------


def a1_homogeneity(cfg: Settings) -> CriterionResult:
    rng = np.random.default_rng(cfg.seed)
    grid = build_grid(DomainSpec.interval(-1.0, 1.0), 64)
    worst_op, worst_pv = 0.0, 0.0
    for p in P_GRID:
        params = OperatorParams(p, 0.4)
        w = assemble_weights(grid, params)
        u = rng.standard_normal(grid.size)
        base = apply_operator(u, w)
        bump = fields.bump(0.1, 0.8)
        pv = eval_pointwise(bump, 0.3, params).value
        for lam in (2.0, 10.0):
            scaled = lam ** (p - 1.0)
            op = apply_operator(lam * u, w)
            worst_op = max(worst_op, float(np.max(np.abs(op - scaled * base)) / np.max(np.abs(scaled * base))))
            pv_l = eval_pointwise(lam * bump, 0.3, params).value
            worst_pv = max(worst_pv, abs(pv_l - scaled * pv) / abs(scaled * pv))
    ok = worst_op <= 1e-12 and worst_pv <= 1e-12
    return CriterionResult("A1", "homogeneity", ok,
                           f"max rel. error residual {worst_op:.2e}, pointwise {worst_pv:.2e} (limit 1e-12)",
                           {"residual": worst_op, "pointwise": worst_pv})


def a2_closed_form(cfg: Settings) -> CriterionResult:
    u, rep, params = _torsion(2.0, 0.5, cfg.n, classical=True)
    x = u.grid.nodes
    err = float(np.max(np.abs(u.values - np.sqrt(1.0 - x**2))))
    ratio = boundary_ratio(u, u.grid, params).sup_ratio
    rel = abs(ratio / math.sqrt(2.0) - 1.0)
    ok = rep.converged and err <= 5e-3 and rel <= 0.02
    return CriterionResult("A2", "p=2 closed form", ok,
                           f"sup error {err:.2e} (<= 5e-3), ratio {ratio:.5f} vs sqrt2 ({rel:.2%} <= 2%)",
                           {"sup_error": err, "ratio": ratio, "n": cfg.n})


def a3_half_space(cfg: Settings) -> CriterionResult:
    rows, ok = [], True
    for p, s in ((2.0, 0.5), (3.0, 0.5), (3.0, 0.8), (1.5, 0.4)):
        for x in (0.25, 0.5, 1.0):
            r = eval_pointwise(fields.half_line_power(s), x, OperatorParams(p, s))
            good = abs(r.value) <= max(1e-4, r.error_bar)
            ok &= good
            rows.append((p, s, x, r.value, r.error_bar, good))
    worst = max(abs(r[3]) - max(1e-4, r[4]) for r in rows)
    return CriterionResult("A3", "half-space solution", ok,
                           f"{sum(r[5] for r in rows)}/{len(rows)} points within max(1e-4, error bar); "
                           f"worst margin {worst:.2e}", {"rows": rows})


def a4_comparison(cfg: Settings) -> CriterionResult:
    rng = np.random.default_rng(cfg.seed + 4)
    params = OperatorParams(2.5, 0.6)
    grid = build_grid(DomainSpec.interval(-1.0, 1.0), cfg.pair_n)
    w = assemble_weights(grid, params)
    violations, worst = 0, -math.inf
    for _ in range(cfg.pairs):
        f2 = rng.uniform(-1.0, 2.0, grid.size)
        f1 = f2 - np.abs(rng.standard_normal(grid.size))
        rep = comparison_check(GridFunction(grid, f1), GridFunction(grid, f2), w)
        violations += not rep.passed
        worst = max(worst, rep.max_violation)
    return CriterionResult("A4", "comparison principle", violations == 0,
                           f"{violations} violations in {cfg.pairs} pairs; max(u1-u2) = {worst:.3e}",
                           {"violations": violations, "max_violation": worst})


def a5_apriori(cfg: Settings) -> CriterionResult:
    ok, parts = True, []
    for p in P_GRID:
        rep = apriori_check(DomainSpec.interval(-1.0, 1.0), OperatorParams(p, 0.5), (0.1, 1.0, 10.0),
                            cfg.apriori_n)
        dev = abs(rep.slope - 1.0 / (p - 1.0))
        ok &= dev <= 1e-6 and rep.C_spread <= 1e-6
        parts.append((p, rep.slope, dev, rep.C_d, rep.C_spread))
    worst_dev = max(q[2] for q in parts)
    worst_spread = max(q[4] for q in parts)
    return CriterionResult("A5", "a-priori scaling", ok,
                           f"max |slope - 1/(p-1)| {worst_dev:.2e}, max C_d spread {worst_spread:.2e} (limits 1e-6)",
                           {"rows": parts})


def a6_boundary(cfg: Settings) -> CriterionResult:
    ok, rows = True, []
    for p in P_GRID:
        for s in S_GRID:
            ratios = []
            for n in cfg.scan:
                u, rep, params = _torsion(p, s, n)
                ok &= rep.converged
                ratios.append(boundary_ratio(u, u.grid, params).sup_ratio)
            var = max(ratios) / min(ratios) - 1.0
            ok &= var < 0.10
            rows.append((p, s, *ratios, var))
    worst = max(r[-1] for r in rows)
    return CriterionResult("A6", "boundary estimate", ok,
                           f"max variation of sup|u|/delta^s across n={list(cfg.scan)}: {worst:.2%} (< 10%)",
                           {"rows": rows})


def a7_holder(cfg: Settings) -> CriterionResult:
    u, _, params = _torsion(2.0, 0.5, cfg.n, classical=True)
    ref = holder_fit(u, u.grid, params).alpha
    ok = abs(ref - 0.5) <= 0.05
    rows = [(2.0, 0.5, ref)]
    for p in (1.5, 3.0):
        for s in S_GRID:
            v, _, prm = _torsion(p, s, cfg.n)
            a = holder_fit(v, v.grid, prm).alpha
            ok &= 0.0 < a <= s + 0.05
            rows.append((p, s, a))
    rec = ", ".join(f"({p:g},{s:g}):{a:.3f}" for p, s, a in rows[1:])
    return CriterionResult("A7", "Hölder exponent", ok,
                           f"reference alpha {ref:.4f} (0.5 +- 0.05); recorded {rec}", {"rows": rows})


def a8_harnack(cfg: Settings) -> CriterionResult:
    ok, rows = True, []
    coarse, fine = cfg.scan[-2], cfg.scan[-1]
    for p in P_GRID:
        for s in S_GRID:
            sig = []
            for n in (coarse, fine):
                u, _, params = _torsion(p, s, n)
                sig.append(harnack_check(u, u.grid, params, 0.0, 0.0, 0.9).sigma)
            drift = abs(sig[1] / sig[0] - 1.0)
            ok &= sig[0] > 0 and sig[1] > 0 and drift < 0.10
            rows.append((p, s, sig[0], sig[1], drift))
    lo = min(min(r[2], r[3]) for r in rows)
    worst = max(r[4] for r in rows)
    return CriterionResult("A8", "weak Harnack", ok,
                           f"min sigma {lo:.4f} (> 0), max drift n={coarse}->{fine} {worst:.2%} (< 10%)",
                           {"rows": rows})


def a9_nonlocal(cfg: Settings) -> CriterionResult:
    dom = DomainSpec.interval(-1.0, 1.0)
    closed = perturbation_rhs(fields.half_line_power(0.5), fields.indicator(2.0, 3.0), 0.0,
                              OperatorParams(2.0, 0.5), dom)
    ok = abs(closed + 1.0 / 3.0) <= 1e-10
    rows = []
    for p, s in ((2.0, 0.5), (3.0, 0.5), (1.5, 0.4)):
        params = OperatorParams(p, s)
        u = fields.half_line_power(s)
        v = fields.bump(2.5, 0.5)
        for x in (-0.5, 0.1, 0.3, 0.5, 0.9):
            a = eval_pointwise(u + v, x, params, far_cutoff=1e12)
            b = eval_pointwise(u, x, params, far_cutoff=1e12)
            h = perturbation_rhs(u, v, x, params, dom)
            gap = abs(a.value - b.value - h)
            bar = a.error_bar + b.error_bar
            ok &= gap <= bar
            rows.append((p, s, x, a.value - b.value, h, gap, bar))
    worst = max(r[5] / r[6] for r in rows)
    return CriterionResult("A9", "non-local perturbation", ok,
                           f"p=2 indicator h = {closed:.15f} (-1/3); 15 probes, max gap/bar {worst:.2e}",
                           {"closed_form": closed, "rows": rows})


def a10_series(cfg: Settings) -> CriterionResult:
    tails, ok = [], True
    for p, s in ((2.0, 0.5), (3.0, 0.5), (1.5, 0.4)):
        ser = eps_limit_series(fields.half_line_power(s), 0.5, OperatorParams(p, s))
        tails.append(ser.cauchy_tail)
        ok &= ser.converged and ser.cauchy_tail < 1e-5
    bad = eps_limit_series(fields.bump(0.0, 1.0), 0.0, OperatorParams(1.5, 0.9))
    ok &= not bad.converged
    return CriterionResult("A10", "strong-solution series", ok,
                           f"Cauchy tails {', '.join(f'{t:.1e}' for t in tails)} (< 1e-5); "
                           f"p=1.5 s=0.9 bump flagged non-convergent: {not bad.converged} "
                           f"(increment ratio {bad.ratio:.3f})",
                           {"tails": tails, "counterexample_ratio": bad.ratio})


def a11_delta(cfg: Settings) -> CriterionResult:
    ok, rows = True, []
    for p, s in ((2.0, 0.5), (3.0, 0.5)):
        rep = delta_s_rhs_check(DomainSpec.interval(0.0, 1.0), OperatorParams(p, s), rho=0.25,
                                probes=[0.05, 0.1, 0.2])
        ok &= rep.passed and math.isfinite(rep.sup)
        rows.append((p, s, rep.sup, rep.drift))
    return CriterionResult("A11", "delta^s boundedness", ok,
                           "; ".join(f"(p={p:g},s={s:g}) sup {v:.4f} drift {d:.1e}" for p, s, v, d in rows)
                           + " (< 20%)", {"rows": rows})


def a12_disc(cfg: Settings) -> CriterionResult:
    params = OperatorParams(2.0, 0.5)
    u, rep = torsion(DomainSpec.disc(1.0), params, cfg.disc_n)
    grid = u.grid
    positive = bool(np.all(u.values > 0))
    r2 = np.sum(grid.lattice.astype(np.int64) ** 2, axis=1)
    dev = 0.0
    for v in np.unique(r2):
        vals = u.values[r2 == v]
        dev = max(dev, float((vals.max() - vals.min()) / vals.mean()))
    ratio = boundary_ratio(u, grid, params).sup_ratio
    ok = rep.converged and positive and dev <= 0.05 and math.isfinite(ratio)
    return CriterionResult("A12", "2D smoke test", ok,
                           f"{grid.size} nodes, positive={positive}, radial deviation {dev:.2%} (<= 5%), "
                           f"boundary ratio {ratio:.4f}", {"deviation": dev, "ratio": ratio})


CRITERIA: Dict[str, Callable[[Settings], CriterionResult]] = {
    "A1": a1_homogeneity,
    "A2": a2_closed_form,
    "A3": a3_half_space,
    "A4": a4_comparison,
    "A5": a5_apriori,
    "A6": a6_boundary,
    "A7": a7_holder,
    "A8": a8_harnack,
    "A9": a9_nonlocal,
    "A10": a10_series,
    "A11": a11_delta,
    "A12": a12_disc,
}


def run_criterion(key: str, settings: Optional[Settings] = None) -> CriterionResult:
    settings = settings or Settings()
    t0 = time.perf_counter()
    res = CRITERIA[key](settings)
    return CriterionResult(res.key, res.title, bool(res.passed), res.summary, res.details,
                           time.perf_counter() - t0)


def run_all(keys: Optional[Iterable[str]] = None, settings: Optional[Settings] = None):
    keys = list(CRITERIA) if keys is None else list(keys)
    return [run_criterion(k, settings) for k in keys]
