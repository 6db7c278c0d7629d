"""Command-line runner: ``fraclab <subcommand> --config <path> [options]``.

Subcommands
-----------
solve
    Solve the Dirichlet problem and write ``solution.csv`` (coordinates,
    ``delta``, ``u``, ``u/delta^s``).
eval-op
    Evaluate the operator pointwise on a catalogue field and write the value,
    error bar and the truncated-integral series per point.
verify
    Run one named check (``check = "..."`` in the config).
suite
    Run the acceptance battery and write ``summary.csv``.

Every run writes ``manifest.json`` next to its outputs.  Exit codes: 0 when
every assertion passes, 1 when one fails, 2 on configuration or numerical
errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .acceptance import Settings, run_criterion
from .config import ExperimentConfig, load_config
from .domain import GridFunction, build_grid, distance_to_complement, sample
from .energy import SolveOptions, solve
from .errors import ConvergenceError, FraclabError
from .fields import make_field
from .kernel import EpsilonSchedule, assemble_weights, eps_limit_series, eval_pointwise
from .regularity import (
    apriori_check,
    boundary_ratio,
    comparison_check,
    delta_s_rhs_check,
    harnack_check,
    holder_fit,
)

__all__ = ["RunManifest", "run", "main", "format_float", "write_csv"]

EXIT_OK, EXIT_ASSERTION, EXIT_ERROR = 0, 1, 2
MANIFEST = "manifest.json"


def format_float(v) -> str:
    """17 significant digits: enough for an exact round trip of a double."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


def write_csv(path, header, rows) -> Path:
    """Write a CSV atomically (temporary file, then rename)."""
    path = Path(path)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(v) for v in row])
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(buf.getvalue(), encoding="utf-8")
    os.replace(tmp, path)
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


@dataclass
class RunManifest:
    subcommand: str
    version: str
    config: dict
    resolved: dict
    stages: List[dict] = field(default_factory=list)
    files: List[str] = field(default_factory=list)
    assertions: List[dict] = field(default_factory=list)
    status: str = "running"
    failure_stage: Optional[str] = None
    error: Optional[str] = None
    exit_code: int = EXIT_OK

    @property
    def failures(self) -> List[str]:
        return [a["name"] for a in self.assertions if not a["passed"]]


class _Run:
    def __init__(self, cfg: ExperimentConfig, subcommand: str, figures: bool, quiet: bool):
        self.cfg = cfg
        self.out = Path(cfg["out"])
        self.figures = figures
        self.quiet = quiet
        self.manifest = RunManifest(
            subcommand=subcommand, version=__version__, config=_jsonable(cfg.echo),
            resolved=_jsonable({k: v for k, v in cfg.values.items() if v is not None}),
        )

    def say(self, msg: str):
        if not self.quiet:
            print(msg, flush=True)

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        entry = {"name": name, "seconds": None, "status": "running"}
        self.manifest.stages.append(entry)
        try:
            yield
        except BaseException:
            entry["status"] = "failed"
            self.manifest.failure_stage = name
            raise
        else:
            entry["status"] = "ok"
        finally:
            entry["seconds"] = round(time.perf_counter() - t0, 6)

    def csv(self, name, header, rows):
        write_csv(self.out / name, header, rows)
        self._add(name)

    def figure(self, name, draw, *args, **kwargs):
        if not self.figures:
            return
        from . import plotting

        getattr(plotting, draw)(*args, path=self.out / name, **kwargs)
        self._add(name)

    def _add(self, name):
        if name not in self.manifest.files:
            self.manifest.files.append(name)

    def check(self, name: str, passed: bool, detail: str):
        self.manifest.assertions.append({"name": name, "passed": bool(passed), "detail": detail})
        self.say(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")

    def finish(self):
        m = self.manifest
        if m.status == "running":
            m.status = "failed" if m.failures else "ok"
            m.exit_code = EXIT_ASSERTION if m.failures else EXIT_OK
        self._add(MANIFEST)
        text = json.dumps(_jsonable(asdict(m)), indent=2, sort_keys=False) + "\n"
        tmp = self.out / (MANIFEST + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, self.out / MANIFEST)
        return m


def _clear_previous(out: Path):
    """Remove the files a previous run listed, so the new manifest describes the directory."""
    old = out / MANIFEST
    if not old.exists():
        return
    try:
        listed = json.loads(old.read_text(encoding="utf-8")).get("files", [])
    except (OSError, ValueError):
        return
    for name in listed:
        target = out / name
        if target.parent == out and target.is_file():
            target.unlink()


# ---------------------------------------------------------------------------
# helpers shared by the pipelines


def _coords(grid):
    return ["x"] if grid.dim == 1 else ["x", "y"]


def _node_rows(grid):
    nodes = grid.nodes
    return [[x] for x in nodes] if grid.dim == 1 else [list(x) for x in nodes]


def _point(v, dim):
    return float(v) if dim == 1 else np.asarray(v, dtype=float)


def _field_options(cfg):
    dim = cfg.domain.dim
    opts = {}
    for key in ("exponent", "radius", "height", "value"):
        if cfg[f"field_{key}"] is not None:
            opts[key] = cfg[f"field_{key}"]
    if cfg["field_center"] is not None:
        opts["center"] = _point(cfg["field_center"], dim)
    return opts


def _source(cfg, grid, key="source") -> GridFunction:
    v = cfg[key]
    if isinstance(v, str):
        return sample(make_field(v, s=cfg.params.s, domain=cfg.domain), grid)
    return GridFunction(grid, np.full(grid.size, float(v)))


def _solve_options(cfg) -> SolveOptions:
    return SolveOptions(tol=cfg["tol"], max_iter=cfg["max_iter"], step=cfg["step"])


def _solve(run: _Run, key="source"):
    cfg = run.cfg
    with run.stage("grid"):
        grid = build_grid(cfg.domain, cfg.n)
    with run.stage("weights"):
        w = assemble_weights(grid, cfg.params, closure=cfg["closure"])
    with run.stage("solve"):
        u, rep = solve(w, _source(cfg, grid, key), _solve_options(cfg))
    run.check("solver_converged", rep.converged,
              f"{rep.iterations} iterations, residual {rep.residual:.3e} "
              f"(tolerance {rep.tolerance:.3e}, {rep.strategy})")
    return grid, w, u, rep


def _default_points(cfg):
    if cfg["points"] is not None:
        return cfg["points"]
    if cfg.domain.dim == 1:
        return [0.25, 0.5, 1.0]
    return [[0.25, 0.0], [0.5, 0.0]]


# ---------------------------------------------------------------------------
# pipelines


def _run_solve(run: _Run):
    cfg = run.cfg
    grid, w, u, rep = _solve(run)
    with run.stage("write"):
        delta = distance_to_complement(grid).values
        ratio = u.values / delta**cfg.params.s
        rows = [c + [d, v, r] for c, d, v, r in zip(_node_rows(grid), delta, u.values, ratio)]
        run.csv("solution.csv", _coords(grid) + ["delta", "u", "ratio"], rows)
        run.figure("solution.png", "solution_figure", grid.nodes, u.values, ratio,
                   title=f"p={cfg.params.p:g}, s={cfg.params.s:g}, n={cfg.n}")


def _series_rows(points, outcomes, levels, dim):
    rows = []
    for x, (value, bar, ser, ok) in zip(points, outcomes):
        coords = [x] if dim == 1 else list(x)
        rows.append(coords + [value, bar, ser.cauchy_tail, ok, ser.resolved] + list(ser.values[:levels]))
    return rows


def _pointwise(run: _Run, evaluate: bool):
    cfg = run.cfg
    dim = cfg.domain.dim
    with run.stage("field"):
        fld = make_field(cfg["field"], s=cfg.params.s, domain=cfg.domain, options=_field_options(cfg))
        schedule = EpsilonSchedule.geometric(1.0, cfg["levels"])
    points = _default_points(cfg)
    outcomes = []
    with run.stage("evaluate"):
        for x in points:
            pt = _point(x, dim)
            kw = dict(far_cutoff=cfg["far_cutoff"], order=cfg["order"], angles=cfg["angles"])
            if evaluate:
                try:
                    pv = eval_pointwise(fld, pt, cfg.params, schedule,
                                        override_singular=cfg.override_singular, **kw)
                    outcomes.append((pv.value, pv.error_bar, pv.series, True))
                except ConvergenceError as err:
                    outcomes.append((math.nan, math.inf, err.diagnostics, False))
            else:
                ser = eps_limit_series(fld, pt, cfg.params, schedule, tol=cfg["series_tol"], **kw)
                outcomes.append((ser.limit, ser.cauchy_tail, ser, ser.converged))
    for x, (value, bar, ser, ok) in zip(points, outcomes):
        label = f"series_converged(x={x})"
        run.check(label, ok, f"increment ratio {ser.ratio:.4g}, Cauchy tail {ser.cauchy_tail:.3e}")
        if evaluate and cfg["expect"] is not None and ok:
            gap = abs(value - cfg["expect"])
            limit = max(cfg["expect_tol"], bar)
            run.check(f"expected_value(x={x})", gap <= limit,
                      f"|value - {cfg['expect']:g}| = {gap:.3e} (limit {limit:.3e})")
    with run.stage("write"):
        levels = cfg["levels"]
        head = (["x"] if dim == 1 else ["x", "y"]) + ["value", "error_bar", "cauchy_tail", "converged",
                                                      "resolved_level"]
        head += [f"series_{k}" for k in range(levels)]
        name = "eval_op.csv" if evaluate else "series.csv"
        run.csv(name, head, _series_rows(points, outcomes, levels, dim))
        run.csv("eps_schedule.csv", ["level", "eps"], list(enumerate(schedule.eps)))
        run.figure("series.png", "series_figure", points, [o[2] for o in outcomes],
                   title=f"{fld.name}, p={cfg.params.p:g}, s={cfg.params.s:g}")


def _verify(run: _Run):
    cfg = run.cfg
    params = cfg.params
    check = cfg["check"]
    run.say(f"check: {check}")
    if check == "series":
        return _pointwise(run, evaluate=False)
    if check == "delta":
        with run.stage("evaluate"):
            probes = None
            if cfg["probes"] is not None:
                probes = [_point(x, cfg.domain.dim) for x in cfg["probes"]]
            rep = delta_s_rhs_check(cfg.domain, params, rho=cfg["rho"], probes=probes,
                                    levels=cfg["levels"], far_cutoff=cfg["far_cutoff"],
                                    override_singular=cfg.override_singular)
        run.check("delta_s_bounded", rep.passed,
                  f"sup {rep.sup:.6g}, refined {rep.refined_sup:.6g}, drift {rep.drift:.2%}")
        with run.stage("write"):
            rows = [[np.atleast_1d(x)[0], d, v, b, r]
                    for x, d, v, b, r in zip(rep.probes, rep.delta, rep.values, rep.error_bars, rep.refined)]
            run.csv("delta_check.csv", ["x", "delta", "value", "error_bar", "refined"], rows)
        return
    if check == "apriori":
        with run.stage("solve"):
            rep = apriori_check(cfg.domain, params, cfg["K_list"], cfg.n, _solve_options(cfg),
                                closure=cfg["closure"])
        want = 1.0 / params.q
        ok = abs(rep.slope - want) <= 1e-6 and rep.C_spread <= 1e-6
        run.check("apriori_scaling", ok,
                  f"slope {rep.slope:.10f} (expected {want:.10f}), C_d spread {rep.C_spread:.2e}")
        with run.stage("write"):
            run.csv("apriori.csv", ["K", "sup_norm", "C"], zip(rep.K, rep.sup_norms, rep.C_values))
            run.figure("apriori.png", "apriori_figure", rep.K, rep.sup_norms, rep.slope)
        return
    if check == "comparison":
        with run.stage("grid"):
            grid = build_grid(cfg.domain, cfg.n)
            w = assemble_weights(grid, params, closure=cfg["closure"])
        with run.stage("solve"):
            rep = comparison_check(_source(cfg, grid), _source(cfg, grid, "source_upper"), w,
                                   _solve_options(cfg))
        run.check("comparison_principle", rep.passed,
                  f"max(u1 - u2) = {rep.max_violation:.3e} (threshold {rep.threshold:.3e})")
        with run.stage("write"):
            run.csv("comparison.csv", ["max_violation", "threshold", "passed"],
                    [[rep.max_violation, rep.threshold, rep.passed]])
        return

    grid, w, u, _ = _solve(run)
    K = float(cfg["source"]) if not isinstance(cfg["source"], str) else 1.0
    if check == "boundary":
        with run.stage("measure"):
            rep = boundary_ratio(u, grid, params, rho=cfg["rho"])
        run.check("boundary_ratio_finite", math.isfinite(rep.sup_ratio),
                  f"sup |u|/delta^s = {rep.sup_ratio:.6g}")
        with run.stage("write"):
            run.csv("boundary_profile.csv", ["delta", "ratio"], rep.profile)
            run.figure("boundary.png", "boundary_figure", rep.profile[:, 0], rep.profile[:, 1])
    elif check == "holder":
        with run.stage("measure"):
            centers = None
            if cfg["centers"] is not None:
                centers = [_point(c, cfg.domain.dim) for c in cfg["centers"]]
            rep = holder_fit(u, grid, params, centers=centers, radii=cfg["radii"], K=K)
        ok = 0.0 < rep.alpha <= params.s + 0.05
        run.check("holder_exponent", ok, f"alpha = {rep.alpha:.4f} (expected in (0, {params.s + 0.05:g}])")
        with run.stage("write"):
            rows = [[k, r, o] for k, tab in enumerate(rep.tables) for r, o in zip(tab.radii, tab.osc)]
            run.csv("oscillation.csv", ["center", "r", "osc"], rows)
            run.csv("holder_fit.csv", ["center", "alpha", "lambda", "r_squared"],
                    [[k, a, lam, r2] for k, (a, lam, r2)
                     in enumerate(zip(rep.alphas, rep.lambdas, rep.r_squared))])
            run.figure("oscillation.png", "oscillation_figure", list(rep.tables), rep.alpha)
    elif check == "harnack":
        center = cfg["harnack_center"]
        center = cfg.domain.center if center is None else _point(center, cfg.domain.dim)
        R = cfg["harnack_radius"] or cfg.domain.inradius
        with run.stage("measure"):
            rep = harnack_check(u, grid, params, K, center, R, C=cfg["harnack_C"],
                                C_eps=cfg["harnack_C_eps"], eps=cfg["harnack_eps"])
        run.check("harnack_sigma_positive", rep.sigma > 0, f"sigma = {rep.sigma:.6g}")
        with run.stage("write"):
            run.csv("harnack.csv", ["inf_inner", "average", "penalty", "sup_ball", "tail_neg", "sigma"],
                    [[rep.inf_inner, rep.average, rep.penalty, rep.sup_ball, rep.tail_neg, rep.sigma]])


def _run_suite(run: _Run):
    cfg = run.cfg
    settings = Settings.from_resolution(cfg.n, pairs=cfg["pairs"])
    keys = list(cfg["criteria"])
    with run.stage("criteria"):
        if cfg["jobs"] > 1:
            with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
                results = list(pool.map(run_criterion, keys, [settings] * len(keys)))
        else:
            results = []
            for k in keys:
                results.append(run_criterion(k, settings))
    for res in results:
        run.check(res.key, res.passed, f"{res.title}: {res.summary}")
    with run.stage("write"):
        # runtimes go to the manifest only, so the CSV is reproducible byte for byte
        run.csv("summary.csv", ["criterion", "title", "passed", "summary"],
                [[r.key, r.title, r.passed, r.summary] for r in results])
        run.manifest.resolved["criterion_seconds"] = {r.key: round(r.seconds, 3) for r in results}
        run.figure("suite.png", "suite_figure", results)


PIPELINES = {
    "solve": _run_solve,
    "eval-op": lambda run: _pointwise(run, evaluate=True),
    "verify": _verify,
    "suite": _run_suite,
}


def run(subcommand: str, cfg: ExperimentConfig, *, figures: bool = True,
        quiet: bool = False) -> RunManifest:
    """Execute a pipeline, write its outputs and manifest, and return the manifest.

    Errors raised by the library end the run with exit code 2; everything
    written up to that point stays on disk and is listed in the manifest.
    """
    state = _Run(cfg, subcommand, figures, quiet)
    state.out.mkdir(parents=True, exist_ok=True)
    _clear_previous(state.out)
    try:
        PIPELINES[subcommand](state)
    except FraclabError as err:
        state.manifest.status = "error"
        state.manifest.error = f"{type(err).__name__}: {err}"
        state.manifest.exit_code = EXIT_ERROR
        if state.manifest.failure_stage is None:
            state.manifest.failure_stage = "setup"
        print(f"error in stage {state.manifest.failure_stage!r}: {err}", file=sys.stderr)
    return state.finish()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fraclab", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    helps = {
        "solve": "solve the Dirichlet problem and write the solution table",
        "eval-op": "evaluate the operator pointwise on an analytic field",
        "verify": "run one named check",
        "suite": "run the acceptance battery",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="TOML configuration file")
        p.add_argument("--out", help="output directory (overrides the 'out' key)")
        p.add_argument("--override-singular-check", action="store_true",
                       help="allow pointwise evaluation for p < 2 and s >= 2(p-1)/p")
        p.add_argument("--quiet", action="store_true", help="print errors only")
        p.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.subcommand, override_singular=args.override_singular_check)
    except FraclabError as err:
        print(f"fraclab: {err}", file=sys.stderr)
        return EXIT_ERROR
    if args.out:
        cfg = cfg.with_out(args.out)
    manifest = run(args.subcommand, cfg, figures=not args.no_figures, quiet=args.quiet)
    if not args.quiet:
        state = {EXIT_OK: "all assertions passed", EXIT_ASSERTION: "assertion failures: "
                 + ", ".join(manifest.failures), EXIT_ERROR: f"error: {manifest.error}"}
        print(f"{state[manifest.exit_code]}; wrote {len(manifest.files)} files to {cfg['out']}")
    return manifest.exit_code


if __name__ == "__main__":
    sys.exit(main())
