"""Catalogue of closed-form fields used as data, barriers and references."""

from __future__ import annotations

import math

import numpy as np

from .domain import AnalyticField, DomainSpec
from .errors import ConfigurationError

__all__ = [
    "zero",
    "constant",
    "identity",
    "half_line_power",
    "ball_profile",
    "distance_power",
    "bump",
    "indicator",
    "FIELD_NAMES",
    "make_field",
]


def _radius(x, dim):
    return np.abs(x) if dim == 1 else np.linalg.norm(x, axis=-1)


def _box(lo, hi, dim):
    return np.array([[lo, hi]] * dim, dtype=float)


def _dot(a, b, dim):
    return a * b if dim == 1 else np.sum(a * b, axis=-1)


def power_drop(base0, dbase, e):
    """``(base0)_+^e - (base0 + dbase)_+^e`` from the base value and its exact increment."""
    dbase = np.asarray(dbase, dtype=float)
    base1 = base0 + dbase
    if base0 <= 0:
        return -np.where(base1 > 0, np.abs(base1) ** e, 0.0)
    small = np.abs(dbase) < 0.5 * base0
    ratio = np.where(small, dbase, 0.0) / base0
    stable = -(base0**e) * np.expm1(e * np.log1p(ratio))
    direct = base0**e - np.where(base1 > 0, np.abs(base1) ** e, 0.0)
    return np.where(small, stable, direct)


def _no_change(dim):
    if dim == 1:
        return lambda x0, h: np.zeros_like(h)
    return lambda x0, h: np.zeros(h.shape[:-1])


def zero(dim: int = 1) -> AnalyticField:
    shape = (lambda x: np.zeros_like(x)) if dim == 1 else (lambda x: np.zeros(x.shape[:-1]))
    return AnalyticField(shape, dim=dim, support=(), growth=0.0, growth_const=0.0, name="zero",
                         diff=_no_change(dim))


def constant(c: float, dim: int = 1) -> AnalyticField:
    c = float(c)
    if dim == 1:
        func = lambda x: np.full_like(x, c)
    else:
        func = lambda x: np.full(x.shape[:-1], c)
    return AnalyticField(func, dim=dim, growth=0.0, growth_const=abs(c), name=f"const({c:g})",
                         diff=_no_change(dim))


def identity() -> AnalyticField:
    """``x -> x`` on the line (growth exponent 1)."""
    return AnalyticField(lambda x: x.copy(), dim=1, growth=1.0, growth_const=1.0, name="x",
                         diff=lambda x0, h: -h)


def half_line_power(s: float, dim: int = 1) -> AnalyticField:
    """``(x_N)_+^s``, the one-dimensional profile of the half-space solution."""
    s = float(s)
    if dim == 1:
        func = lambda x: np.where(x > 0, np.abs(x) ** s, 0.0)
        diff = lambda x0, h: power_drop(float(x0), h, s)
        breaks = (0.0,)
    else:
        func = lambda x: np.where(x[..., -1] > 0, np.abs(x[..., -1]) ** s, 0.0)
        diff = lambda x0, h: power_drop(float(np.asarray(x0)[-1]), h[..., -1], s)
        breaks = ((0.0, 1.0, 0.0),)
    return AnalyticField(func, dim=dim, growth=s, growth_const=1.0, breakpoints=breaks,
                         smooth=False, name=f"(x)_+^{s:g}", diff=diff)


def ball_profile(exponent: float, radius: float = 1.0, dim: int = 1, scale: float = 1.0) -> AnalyticField:
    """``scale * (radius**2 - |x|**2)_+**exponent``."""
    e, R, c = float(exponent), float(radius), float(scale)

    def func(x):
        q = R * R - _radius(x, dim) ** 2
        return c * np.where(q > 0, np.abs(q) ** e, 0.0)

    def diff(x0, h):
        x0 = np.asarray(x0, dtype=float)
        q0 = R * R - float(_dot(x0, x0, dim))
        dq = -(2.0 * _dot(x0, h, dim) + _dot(h, h, dim))
        return c * power_drop(q0, dq, e)

    breaks = (-R, R) if dim == 1 else (R,)
    return AnalyticField(func, dim=dim, support=(_box(-R, R, dim),), growth=0.0,
                         growth_const=abs(c) * R ** (2 * e), breakpoints=breaks,
                         smooth=False, name=f"(R^2-|x|^2)_+^{e:g}", diff=diff)


def distance_power(domain: DomainSpec, s: float) -> AnalyticField:
    """``delta(x)**s`` with ``delta = dist(x, complement)``, zero outside the domain."""
    s = float(s)
    if domain.kind == "interval":
        a, b = domain.a, domain.b

        def func(x):
            d = np.minimum(x - a, b - x)
            return np.where(d > 0, np.abs(d) ** s, 0.0)

        def diff(x0, h):
            x0 = float(x0)
            left, right = x0 - a, b - x0
            d0 = min(left, right)
            new = np.minimum(left + h, right - h)
            same_left = (d0 == left) & (left + h <= right - h)
            same_right = (d0 == right) & (right - h <= left + h)
            dd = np.where(same_left, h, np.where(same_right, -h, new - d0))
            return power_drop(d0, dd, s)

        breaks = (a, 0.5 * (a + b), b)
        support = (_box(a, b, 1),)
    else:
        R0 = domain.radius

        def func(x):
            d = R0 - np.linalg.norm(x, axis=-1)
            return np.where(d > 0, np.abs(d) ** s, 0.0)

        def diff(x0, h):
            x0 = np.asarray(x0, dtype=float)
            r0 = float(np.linalg.norm(x0))
            r1 = np.linalg.norm(x0 + h, axis=-1)
            # |x0| - |x0 + h| without cancellation
            dd = (2.0 * (h @ x0) + np.sum(h * h, axis=-1)) / np.maximum(r0 + r1, 1e-300)
            return power_drop(R0 - r0, -dd, s)

        breaks = (0.0, R0)
        support = (_box(-R0, R0, 2),)
    return AnalyticField(func, dim=domain.dim, support=support, growth=0.0,
                         growth_const=(0.5 * domain.diameter) ** s, breakpoints=breaks,
                         smooth=False, name=f"delta^{s:g}", diff=diff)


def bump(center=0.0, radius: float = 1.0, height: float = 1.0, dim: int = 1) -> AnalyticField:
    """Smooth compactly supported bump ``height * exp(1 - 1/(1 - r^2))`` with ``r = |x - c| / radius``."""
    c = np.asarray(center, dtype=float)
    if dim == 2 and c.shape != (2,):
        c = np.broadcast_to(c, (2,)).copy()
    R, H = float(radius), float(height)

    def func(x):
        r2 = (_radius(x - c, dim) / R) ** 2
        inside = r2 < 1.0
        safe = np.where(inside, r2, 0.0)
        return np.where(inside, H * np.exp(1.0 - 1.0 / (1.0 - safe)), 0.0)

    def diff(x0, h):
        z = np.asarray(x0, dtype=float) - c
        r0 = float(_dot(z, z, dim)) / (R * R)
        dr = (2.0 * _dot(z, h, dim) + _dot(h, h, dim)) / (R * R)
        r1 = r0 + dr
        inside1 = r1 < 1.0
        if r0 >= 1.0:
            safe = np.where(inside1, r1, 0.0)
            return -np.where(inside1, H * np.exp(1.0 - 1.0 / (1.0 - safe)), 0.0)
        g0 = 1.0 - 1.0 / (1.0 - r0)
        safe = np.where(inside1, r1, 0.0)
        dg = -dr / ((1.0 - r0) * (1.0 - safe))
        return np.where(inside1, -H * math.exp(g0) * np.expm1(dg), H * math.exp(g0))

    if dim == 1:
        support = (_box(float(c) - R, float(c) + R, 1),)
    else:
        support = (np.array([[c[0] - R, c[0] + R], [c[1] - R, c[1] + R]]),)
    return AnalyticField(func, dim=dim, support=support, growth=0.0, growth_const=abs(H),
                         name="bump", diff=diff)


def indicator(lo: float, hi: float) -> AnalyticField:
    """Indicator of ``[lo, hi]`` on the line."""
    lo, hi = float(lo), float(hi)
    if not lo < hi:
        raise ConfigurationError("indicator needs lo < hi")
    return AnalyticField(lambda x: np.where((x >= lo) & (x <= hi), 1.0, 0.0), dim=1,
                         support=(_box(lo, hi, 1),), growth=0.0, growth_const=1.0,
                         breakpoints=(lo, hi), smooth=False, name=f"1[{lo:g},{hi:g}]")


FIELD_NAMES = (
    "zero", "constant", "identity", "half_line_power", "ball_profile",
    "distance_power", "bump", "indicator",
)

_ALIASES = {
    "(x)_+^s": "half_line_power",
    "half-line": "half_line_power",
    "delta^s": "distance_power",
    "(1-x^2)_+^s": "ball_profile",
}


def make_field(name: str, *, s: float, domain: DomainSpec, options: dict | None = None) -> AnalyticField:
    """Build a catalogue field by name; ``options`` holds per-field keywords."""
    opts = dict(options or {})
    key = _ALIASES.get(name, name)
    dim = domain.dim
    if key == "zero":
        return zero(dim)
    if key == "constant":
        return constant(opts.get("value", 1.0), dim)
    if key == "identity":
        return identity()
    if key == "half_line_power":
        return half_line_power(opts.get("exponent", s), dim)
    if key == "ball_profile":
        return ball_profile(opts.get("exponent", s), opts.get("radius", domain.inradius), dim,
                            opts.get("scale", 1.0))
    if key == "distance_power":
        return distance_power(domain, opts.get("exponent", s))
    if key == "bump":
        return bump(opts.get("center", 0.0), opts.get("radius", 0.5 * domain.inradius),
                    opts.get("height", 1.0), dim)
    if key == "indicator":
        lo, hi = opts.get("interval", (domain.a, domain.b) if dim == 1 else (-1.0, 1.0))
        return indicator(lo, hi)
    raise ConfigurationError(f"unknown field {name!r}; choose one of {', '.join(FIELD_NAMES)}")


def ball_torsion_constant(dim: int, s: float) -> float:
    """Value of the normalised fractional Laplacian of ``(1 - |x|^2)_+^s`` (linear case).

    Equals ``4**s * Gamma(1 + s) * Gamma(dim/2 + s) / Gamma(dim/2)``.
    """
    return 4.0**s * math.gamma(1 + s) * math.gamma(0.5 * dim + s) / math.gamma(0.5 * dim)
