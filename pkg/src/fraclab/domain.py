"""Geometry: domains, uniform cell-centred grids, distance fields, sampling.

Two domain shapes are supported, an interval ``(a, b)`` in one dimension and
a disc of radius ``R0`` centred at the origin in two.  Grids are uniform with
nodes at cell midpoints, so every node is strictly interior and functions are
extended by zero outside the domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, EvaluationError, GeometryError

__all__ = [
    "DomainSpec",
    "Grid",
    "GridFunction",
    "AnalyticField",
    "build_grid",
    "distance_to_complement",
    "sample",
]

MIN_NODES = 8
_CLIP_ORDER = 4


def _frozen(arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DomainSpec:
    """Bounded domain: ``kind`` is ``"interval"`` (``a < b``) or ``"disc"`` (``radius``)."""

    kind: str
    a: Optional[float] = None
    b: Optional[float] = None
    radius: Optional[float] = None

    def __post_init__(self):
        if self.kind == "interval":
            if self.a is None or self.b is None:
                raise ConfigurationError("interval needs endpoints a and b")
            if not (math.isfinite(self.a) and math.isfinite(self.b)) or not self.a < self.b:
                raise ConfigurationError(f"interval needs finite a < b, got a={self.a}, b={self.b}")
        elif self.kind == "disc":
            if self.radius is None or not math.isfinite(self.radius) or self.radius <= 0:
                raise ConfigurationError(f"disc radius must be positive, got {self.radius}")
        else:
            raise ConfigurationError(f"unknown domain kind {self.kind!r}")

    @classmethod
    def interval(cls, a: float, b: float) -> "DomainSpec":
        return cls("interval", a=float(a), b=float(b))

    @classmethod
    def disc(cls, radius: float = 1.0) -> "DomainSpec":
        return cls("disc", radius=float(radius))

    @property
    def dim(self) -> int:
        return 1 if self.kind == "interval" else 2

    @property
    def diameter(self) -> float:
        return self.b - self.a if self.kind == "interval" else 2.0 * self.radius

    @property
    def measure(self) -> float:
        return self.b - self.a if self.kind == "interval" else math.pi * self.radius**2

    @property
    def inradius(self) -> float:
        return 0.5 * (self.b - self.a) if self.kind == "interval" else self.radius

    @property
    def center(self) -> np.ndarray:
        if self.kind == "interval":
            return np.array(0.5 * (self.a + self.b))
        return np.zeros(2)

    def distance(self, points) -> np.ndarray:
        """Signed distance to the complement: positive inside, negative outside."""
        x = np.asarray(points, dtype=float)
        if self.kind == "interval":
            return np.minimum(x - self.a, self.b - x)
        return self.radius - np.linalg.norm(x, axis=-1)

    def contains(self, points) -> np.ndarray:
        return self.distance(points) > 0

    def dilate(self, lam: float) -> "DomainSpec":
        if self.kind == "interval":
            return DomainSpec.interval(lam * self.a, lam * self.b)
        return DomainSpec.disc(lam * self.radius)


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform cell-centred grid restricted to the interior of a domain.

    ``nodes`` has shape ``(m,)`` in 1D and ``(m, 2)`` in 2D; ``lattice`` holds
    the integer cell indices, which makes reflections exact.  For the disc,
    ``quad_points``/``quad_weights`` are the tensor Gauss points of each cell
    with weights multiplied by the indicator of the disc (clipped cells).
    Disc ``volumes`` are the clipped areas, with the area of cells whose
    centre falls outside the disc spread over the cut cells, so that they
    sum to the disc area up to quadrature error.
    """

    domain: DomainSpec
    n: int
    h: float
    nodes: np.ndarray
    volumes: np.ndarray
    lattice: np.ndarray
    quad_points: Optional[np.ndarray] = None
    quad_weights: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def size(self) -> int:
        return len(self.volumes)

    def __len__(self):
        return self.size

    def cells(self) -> np.ndarray:
        """Cell bounds, ``(m, 2)`` as ``[lo, hi]`` in 1D, ``(m, 4)`` as ``[xlo, xhi, ylo, yhi]`` in 2D."""
        half = 0.5 * self.h
        if self.dim == 1:
            return np.stack([self.nodes - half, self.nodes + half], axis=1)
        x, y = self.nodes[:, 0], self.nodes[:, 1]
        return np.stack([x - half, x + half, y - half, y + half], axis=1)

    def same_as(self, other: "Grid") -> bool:
        return self is other or (self.domain == other.domain and self.n == other.n)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Nodal values on the interior nodes of ``grid``; zero on the complement."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.size,):
            raise ConfigurationError(
                f"grid function needs {self.grid.size} values, got shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise EvaluationError("grid function has non-finite values")
        object.__setattr__(self, "values", _frozen(vals.copy()))

    def __len__(self):
        return self.grid.size

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.grid, values)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.grid.size else 0.0


def _support_radius(boxes) -> float:
    if boxes is None:
        return math.inf
    r = 0.0
    for box in boxes:
        corners = np.abs(np.asarray(box, dtype=float))
        r = max(r, float(np.linalg.norm(corners.max(axis=1))))
    return r


@dataclass(frozen=True)
class AnalyticField:
    """A closed-form function on the whole space with integrability metadata.

    Parameters
    ----------
    func : callable
        Vectorised evaluator.  In 1D it maps an array of abscissae to an array
        of the same shape; in 2D it maps ``(..., 2)`` points to ``(...)``.
    dim : int
        Space dimension, 1 or 2.
    support : sequence of boxes or None
        Union of axis-aligned boxes (each an ``(dim, 2)`` array of
        ``[lo, hi]`` rows) containing the support, or None if unbounded.
    growth : float
        Exponent ``gamma`` with ``|f(x)| <= growth_const * (1 + |x|)**gamma``.
    diff : callable, optional
        ``diff(x0, h)`` returning ``f(x0) - f(x0 + h)`` for one point ``x0``
        and an array of offsets ``h`` (shape ``(..., 2)`` in 2D) without the
        cancellation of subtracting two rounded values.  Singular integrals
        use it when present.
    breakpoints : tuple of float
        Locations where the field is not smooth: abscissae in 1D; in 2D radii
        of origin-centred circles or ``(nx, ny, c)`` lines ``n . x = c``.
        Quadrature panels are split there.
    """

    func: Callable[[np.ndarray], np.ndarray]
    dim: int = 1
    support: Optional[tuple] = None
    growth: float = 0.0
    growth_const: float = 1.0
    breakpoints: tuple = ()
    smooth: bool = True
    name: str = "field"
    diff: Optional[Callable] = None

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigurationError(f"field dimension must be 1 or 2, got {self.dim}")
        if self.support is not None:
            boxes = tuple(_frozen(np.asarray(b, dtype=float).reshape(self.dim, 2)) for b in self.support)
            object.__setattr__(self, "support", boxes)
        radii = sorted(float(b) for b in self.breakpoints if not isinstance(b, tuple))
        lines = [tuple(float(c) for c in b) for b in self.breakpoints if isinstance(b, tuple)]
        object.__setattr__(self, "breakpoints", tuple(radii) + tuple(sorted(set(lines))))

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)

    def difference(self, x0, h) -> np.ndarray:
        """``f(x0) - f(x0 + h)``, cancellation-free when the field provides ``diff``."""
        h = np.asarray(h, dtype=float)
        if self.diff is not None:
            return np.asarray(self.diff(x0, h), dtype=float)
        return float(self(x0)) - self(np.asarray(x0, dtype=float) + h)

    @property
    def support_radius(self) -> float:
        return _support_radius(self.support)

    def growth_admissible(self, p: float, s: float) -> bool:
        """Far-field integrability ``gamma (p - 1) < p s`` of the tail kernel."""
        return self.growth * (p - 1.0) < p * s

    def _combine(self, other: "AnalyticField", a: float, b: float) -> "AnalyticField":
        if other.dim != self.dim:
            raise ConfigurationError("cannot combine fields of different dimension")
        f, g = self.func, other.func
        df, dg = self.diff, other.diff
        diff = None
        if df is not None and dg is not None:
            diff = lambda x0, y: a * df(x0, y) + b * dg(x0, y)
        support = None
        if self.support is not None and other.support is not None:
            support = self.support + other.support
        return AnalyticField(
            func=lambda x: a * f(x) + b * g(x),
            dim=self.dim,
            support=support,
            growth=max(self.growth, other.growth),
            growth_const=abs(a) * self.growth_const + abs(b) * other.growth_const,
            breakpoints=tuple(set(self.breakpoints) | set(other.breakpoints)),
            smooth=self.smooth and other.smooth,
            name=f"{self.name}+{other.name}",
            diff=diff,
        )

    def __add__(self, other):
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other):
        return self._combine(other, 1.0, -1.0)

    def __mul__(self, lam):
        lam = float(lam)
        f, df = self.func, self.diff
        return AnalyticField(
            func=lambda x: lam * f(x),
            dim=self.dim,
            support=self.support,
            growth=self.growth,
            growth_const=abs(lam) * self.growth_const,
            breakpoints=self.breakpoints,
            smooth=self.smooth,
            name=f"{lam:g}*{self.name}",
            diff=None if df is None else (lambda x0, y: lam * df(x0, y)),
        )

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def dilate(self, lam: float) -> "AnalyticField":
        """The field ``x -> f(x / lam)``."""
        lam = float(lam)
        f, df = self.func, self.diff
        support = None
        if self.support is not None:
            support = tuple(lam * box for box in self.support)
        return AnalyticField(
            func=lambda x: f(x / lam),
            dim=self.dim,
            support=support,
            growth=self.growth,
            growth_const=self.growth_const * max(1.0, lam ** -self.growth),
            breakpoints=tuple((b[0], b[1], lam * b[2]) if isinstance(b, tuple) else lam * b
                              for b in self.breakpoints),
            smooth=self.smooth,
            name=f"{self.name}(x/{lam:g})",
            diff=None if df is None else (lambda x0, y: df(np.asarray(x0) / lam, y / lam)),
        )


def _interval_grid(domain: DomainSpec, n: int) -> Grid:
    h = (domain.b - domain.a) / n
    idx = np.arange(n)
    nodes = domain.a + (idx + 0.5) * h
    return Grid(
        domain=domain,
        n=n,
        h=h,
        nodes=_frozen(nodes),
        volumes=_frozen(np.full(n, h)),
        lattice=_frozen(idx),
    )


def _orphan_area(ki, kj, h, R0, offsets, wts):
    """Total clipped area of the cells whose centre lies outside the disc."""
    centres = np.stack([ki, kj], axis=1) * (0.5 * h)
    pts = centres[:, None, :] + offsets[None, :, :]
    return float((wts[None, :] * (np.einsum("mqk,mqk->mq", pts, pts) < R0 * R0)).sum())


def _disc_grid(domain: DomainSpec, n: int) -> Grid:
    R0 = domain.radius
    h = 2.0 * R0 / n
    # odd integer coordinates: node = k * h / 2 with k = 2 i + 1 - n
    k = 2 * np.arange(n) + 1 - n
    KI, KJ = np.meshgrid(k, k, indexing="ij")
    inside = KI.astype(np.int64) ** 2 + KJ.astype(np.int64) ** 2 < n * n
    lattice = np.stack([KI[inside], KJ[inside]], axis=1)
    nodes = lattice * (0.5 * h)

    g, w = np.polynomial.legendre.leggauss(_CLIP_ORDER)
    offs = 0.5 * h * g
    ox, oy = np.meshgrid(offs, offs, indexing="ij")
    offsets = np.stack([ox.ravel(), oy.ravel()], axis=1)
    wts = np.outer(w, w).ravel() * (0.25 * h * h)
    qp = nodes[:, None, :] + offsets[None, :, :]
    qw = wts[None, :] * (np.einsum("mqk,mqk->mq", qp, qp) < R0 * R0)
    volumes = qw.sum(axis=1)
    # cells without a node still overlap the disc; hand their area to the cut cells
    # in proportion to each cut cell's own clipped area
    cut = volumes < h * h * (1 - 1e-12)
    orphan = _orphan_area(KI[~inside], KJ[~inside], h, R0, offsets, wts)
    volumes[cut] *= 1.0 + orphan / volumes[cut].sum()
    return Grid(
        domain=domain,
        n=n,
        h=h,
        nodes=_frozen(nodes),
        volumes=_frozen(volumes),
        lattice=_frozen(lattice),
        quad_points=_frozen(qp),
        quad_weights=_frozen(qw),
    )


def build_grid(domain: DomainSpec, n: int, *, allow_coarse: bool = False) -> Grid:
    """Uniform grid with ``n`` cells across the domain's bounding box.

    ``n`` must be at least 8; ``allow_coarse`` lowers the limit to 2 for
    illustrative toy grids.
    """
    if int(n) != n:
        raise ConfigurationError(f"grid size must be an integer, got {n}")
    n = int(n)
    lo = 2 if allow_coarse else MIN_NODES
    if n < lo:
        raise ConfigurationError(f"grid size n={n} is too small (need n >= {lo})")
    if domain.kind == "interval":
        return _interval_grid(domain, n)
    return _disc_grid(domain, n)


def distance_to_complement(grid: Grid) -> GridFunction:
    """``delta_i = dist(x_i, complement)``, computed from lattice indices on intervals."""
    dom = grid.domain
    if dom.kind == "interval":
        idx = grid.lattice
        left = (idx + 0.5) * grid.h
        right = (grid.n - 1 - idx + 0.5) * grid.h
        delta = np.minimum(left, right)
    else:
        delta = dom.radius - np.linalg.norm(grid.nodes, axis=1)
    if np.any(delta <= 0):
        raise GeometryError("grid has a node outside the open domain")
    return GridFunction(grid, delta)


def sample(field: AnalyticField, grid: Grid) -> GridFunction:
    """Nodal values of ``field``; exterior values are discarded (zero extension)."""
    if field.dim != grid.dim:
        raise ConfigurationError(f"field is {field.dim}D but grid is {grid.dim}D")
    vals = np.broadcast_to(field(grid.nodes), (grid.size,)).astype(float)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        where = grid.nodes[np.argmax(bad)]
        raise EvaluationError(f"field {field.name!r} is not finite at node {where}")
    return GridFunction(grid, vals)


def exterior_sides(grid: Grid) -> tuple:
    """Distances from each 1D node to the left and right endpoints (exact in lattice units)."""
    if grid.dim != 1:
        raise GeometryError("left/right distances only exist for intervals")
    idx = grid.lattice
    return (idx + 0.5) * grid.h, (grid.n - 1 - idx + 0.5) * grid.h
