"""Experiment configuration: a flat TOML key-value file, validated before any computation.

Every key is optional except ``p`` and ``s``.  The accepted keys, their
types and defaults are listed in :data:`SCHEMA`; anything else is rejected.
Errors are collected rather than raised one at a time, and each one names
the line and key it refers to.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .domain import MIN_NODES, DomainSpec
from .errors import ConfigurationError
from .fields import FIELD_NAMES, _ALIASES
from .kernel import OperatorParams

__all__ = [
    "SUBCOMMANDS",
    "CHECKS",
    "SCHEMA",
    "ConfigIssue",
    "ExperimentConfig",
    "parse_config",
    "load_config",
]

SUBCOMMANDS = ("solve", "eval-op", "verify", "suite")
CHECKS = ("comparison", "apriori", "boundary", "holder", "harnack", "delta", "series")
STEPS = ("auto", "adaptive-two-point", "fixed", "reweighted")
CRITERION_KEYS = tuple(f"A{k}" for k in range(1, 13))


def _real(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _is_float(v):
    return _real(v) and math.isfinite(v)


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_str(v):
    return isinstance(v, str)


def _is_point(v):
    return _is_float(v) or (isinstance(v, list) and len(v) == 2 and all(_is_float(c) for c in v))


def _list_of(pred):
    return lambda v: isinstance(v, list) and len(v) > 0 and all(pred(x) for x in v)


def _source(v):
    return _is_float(v) or _is_str(v)


# key -> (type check, type description, default)
SCHEMA: Dict[str, Tuple[Any, str, Any]] = {
    # operator and domain
    "p": (_is_float, "number", None),
    "s": (_is_float, "number", None),
    "normalization": (_is_str, "string", "unit"),
    "domain": (_is_str, "string", "interval"),
    "a": (_is_float, "number", -1.0),
    "b": (_is_float, "number", 1.0),
    "radius": (_is_float, "number", 1.0),
    "n": (_is_int, "integer", 256),
    "out": (_is_str, "string", "fraclab-out"),
    # solver
    "source": (_source, "number or field name", 1.0),
    "tol": (_is_float, "number", 1e-10),
    "max_iter": (_is_int, "integer", 50_000),
    "step": (_is_str, "string", "auto"),
    "closure": (_is_str, "string", "auto"),
    # pointwise evaluation
    "field": (_is_str, "string", "half_line_power"),
    "field_exponent": (_is_float, "number", None),
    "field_radius": (_is_float, "number", None),
    "field_center": (_is_point, "number or [x, y]", None),
    "field_height": (_is_float, "number", None),
    "field_value": (_is_float, "number", None),
    "points": (_list_of(_is_point), "non-empty list of points", None),
    "far_cutoff": (_is_float, "number", 1e3),
    "levels": (_is_int, "integer", 24),
    "order": (_is_int, "integer", 8),
    "angles": (_is_int, "integer", 32),
    "series_tol": (_is_float, "number", 1e-5),
    "expect": (_is_float, "number", None),
    "expect_tol": (_is_float, "number", 1e-4),
    # verify
    "check": (_is_str, "string", "boundary"),
    "source_upper": (_source, "number or field name", 2.0),
    "K_list": (_list_of(_is_float), "non-empty list of numbers", [1.0, 10.0, 100.0]),
    "radii": (_list_of(_is_float), "non-empty list of numbers", None),
    "centers": (_list_of(_is_point), "non-empty list of points", None),
    "rho": (_is_float, "number", None),
    "probes": (_list_of(_is_point), "non-empty list of points", None),
    "K": (_is_float, "number", 1.0),
    "harnack_center": (_is_point, "number or [x, y]", None),
    "harnack_radius": (_is_float, "number", None),
    "harnack_C": (_is_float, "number", 1.0),
    "harnack_C_eps": (_is_float, "number", 1.0),
    "harnack_eps": (_is_float, "number", 0.0),
    # suite
    "criteria": (_list_of(_is_str), "non-empty list of criterion keys", list(CRITERION_KEYS)),
    "pairs": (_is_int, "integer", 100),
    "jobs": (_is_int, "integer", 1),
}


@dataclass(frozen=True)
class ConfigIssue:
    line: Optional[int]
    key: Optional[str]
    message: str

    def __str__(self):
        where = f"line {self.line}" if self.line is not None else "config"
        return f"{where}: key '{self.key}': {self.message}" if self.key else f"{where}: {self.message}"


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated configuration.

    ``values`` holds every schema key with defaults filled in; ``echo`` only
    the keys present in the file (for the run manifest).
    """

    subcommand: Optional[str]
    params: OperatorParams
    domain: DomainSpec
    values: Dict[str, Any]
    echo: Dict[str, Any] = field(default_factory=dict)
    override_singular: bool = False

    def __getitem__(self, key):
        return self.values[key]

    @property
    def n(self) -> int:
        return self.values["n"]

    def with_out(self, out: str) -> "ExperimentConfig":
        vals = dict(self.values, out=str(out))
        return ExperimentConfig(self.subcommand, self.params, self.domain, vals, self.echo,
                                self.override_singular)


def _key_lines(text: str) -> Dict[str, int]:
    lines = {}
    for k, line in enumerate(text.splitlines(), start=1):
        m = re.match(r"\s*([A-Za-z0-9_\-]+|\"[^\"]*\"|'[^']*')\s*=", line)
        if m:
            lines.setdefault(m.group(1).strip("\"'"), k)
    return lines


def _syntax_line(err) -> Optional[int]:
    m = re.search(r"line (\d+)", str(err))
    return int(m.group(1)) if m else None


def _field_name_ok(name: str) -> bool:
    return name in FIELD_NAMES or name in _ALIASES


def parse_config(text: str, subcommand: Optional[str] = None, *,
                 override_singular: bool = False) -> ExperimentConfig:
    """Parse and validate configuration text.

    Raises
    ------
    ConfigurationError
        With ``errors`` listing every :class:`ConfigIssue` found.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        issue = ConfigIssue(_syntax_line(err), None, f"syntax error: {err}")
        raise ConfigurationError(str(issue), [issue]) from None
    lines = _key_lines(text)
    issues: List[ConfigIssue] = []

    def bad(key, msg):
        issues.append(ConfigIssue(lines.get(key), key, msg))

    if subcommand is not None and subcommand not in SUBCOMMANDS:
        issues.append(ConfigIssue(None, None, f"unknown subcommand {subcommand!r}"))

    values: Dict[str, Any] = {}
    for key, val in raw.items():
        if key not in SCHEMA:
            bad(key, "unknown key" + (" (tables are not supported)" if isinstance(val, dict) else ""))
            continue
        check, desc, _ = SCHEMA[key]
        if desc != "integer":
            val = _coerce(val)
        if not check(val):
            bad(key, f"expected {desc}, got {val!r}")
            continue
        values[key] = val
    for key in ("p", "s"):
        if key not in raw:
            issues.append(ConfigIssue(None, key, "missing required key"))
    echo = dict(raw)
    full = {k: (values[k] if k in values else spec[2]) for k, spec in SCHEMA.items()}

    p, s = full["p"], full["s"]
    if p is not None and "p" in values and not p > 1:
        bad("p", f"p must exceed 1 (the operator is defined for p in (1, inf)); got {p}")
    if s is not None and "s" in values and not 0 < s < 1:
        bad("s", f"s must lie in (0, 1); got {s}")
    if full["normalization"] not in ("unit", "classical"):
        bad("normalization", "expected 'unit' or 'classical'")
    if full["domain"] not in ("interval", "disc"):
        bad("domain", "expected 'interval' or 'disc'")
    if full["n"] < MIN_NODES:
        bad("n", f"grid size must be at least {MIN_NODES}, got {full['n']}")
    if not full["tol"] > 0:
        bad("tol", "tolerance must be positive")
    if full["max_iter"] < 1:
        bad("max_iter", "must be positive")
    if full["step"] not in STEPS:
        bad("step", f"expected one of {', '.join(STEPS)}")
    if full["closure"] not in ("auto", "barrier", "midpoint"):
        bad("closure", "expected 'auto', 'barrier' or 'midpoint'")
    elif full["closure"] == "barrier" and full["domain"] == "disc":
        bad("closure", "the barrier closure is only available on intervals")
    for key in ("source", "source_upper"):
        v = full[key]
        if isinstance(v, str) and not _field_name_ok(v):
            bad(key, f"unknown field {v!r}; choose a number or one of {', '.join(FIELD_NAMES)}")
    if not _field_name_ok(full["field"]):
        bad("field", f"unknown field {full['field']!r}; choose one of {', '.join(FIELD_NAMES)}")
    if not full["far_cutoff"] > 1.0:
        bad("far_cutoff", "must exceed the pairing radius 1")
    if full["levels"] < 12:
        bad("levels", "need at least 12 levels")
    if full["order"] < 2 or full["angles"] < 1:
        bad("order" if full["order"] < 2 else "angles", "must be positive (order at least 2)")
    if full["check"] not in CHECKS:
        bad("check", f"expected one of {', '.join(CHECKS)}")
    for k in full["criteria"]:
        if k not in CRITERION_KEYS:
            bad("criteria", f"unknown criterion {k!r}; expected A1..A12")
    if full["jobs"] < 1:
        bad("jobs", "must be at least 1")
    if full["pairs"] < 1:
        bad("pairs", "must be at least 1")
    if any(k <= 0 for k in full["K_list"]):
        bad("K_list", "values must be positive")

    domain = None
    try:
        if full["domain"] == "interval":
            domain = DomainSpec.interval(full["a"], full["b"])
        elif full["domain"] == "disc":
            domain = DomainSpec.disc(full["radius"])
    except ConfigurationError as err:
        bad("a" if full["domain"] == "interval" else "radius", str(err))

    if domain is not None:
        want = 1 if domain.dim == 1 else 2
        for key in ("points", "centers", "probes"):
            if full[key] is not None and any(_dim_of(v) != want for v in full[key]):
                bad(key, f"points must have dimension {want} for a {full['domain']}")
        for key in ("field_center", "harnack_center"):
            if full[key] is not None and _dim_of(full[key]) != want:
                bad(key, f"point must have dimension {want} for a {full['domain']}")

    params = None
    if not issues:
        if full["normalization"] == "classical":
            params = OperatorParams.classical(p, s, domain.dim)
        else:
            params = OperatorParams(p, s)
        pointwise = subcommand == "eval-op" or (
            subcommand == "verify" and full["check"] in ("delta", "series")
        )
        if pointwise and not params.pointwise_valid and not override_singular:
            key = "s" if "s" in lines else "p"
            bad(key, f"s = {s:g} is not below the singular-case threshold 2(p-1)/p = "
                     f"{params.singular_threshold:.6g} for p = {p:g}; pointwise evaluation "
                     f"is only available for s < 2(p-1)/p (use --override-singular-check to force)")

    if issues:
        issues.sort(key=lambda i: (i.line is None, i.line or 0))
        msg = "invalid configuration:\n" + "\n".join(f"  {i}" for i in issues)
        raise ConfigurationError(msg, issues)
    return ExperimentConfig(subcommand, params, domain, full, echo, override_singular)


def _coerce(val):
    """Integers become floats, also inside (nested) lists; strings and booleans stay."""
    if _is_int(val):
        return float(val)
    if isinstance(val, list):
        return [_coerce(v) for v in val]
    return val


def _dim_of(v) -> int:
    return 2 if isinstance(v, list) else 1


def load_config(path, subcommand: Optional[str] = None, *,
                override_singular: bool = False) -> ExperimentConfig:
    """Read ``path`` and :func:`parse_config` it."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        issue = ConfigIssue(None, None, f"cannot read {path}: {err.strerror}")
        raise ConfigurationError(str(issue), [issue]) from None
    return parse_config(text, subcommand, override_singular=override_singular)
