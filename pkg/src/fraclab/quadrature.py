"""Gauss-Legendre panels and geometrically graded partitions."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def gauss_legendre(order: int):
    """Nodes and weights on ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(order)
    nodes = 0.5 * (x + 1.0)
    weights = 0.5 * w
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def panel_points(edges, order: int):
    """Gauss points and weights for consecutive panels ``[edges[k], edges[k+1]]``.

    Returns arrays of shape ``(panels, order)``.
    """
    edges = np.asarray(edges, dtype=float)
    lo, width = edges[:-1, None], np.diff(edges)[:, None]
    x, w = gauss_legendre(order)
    return lo + width * x, width * w


def graded_edges(lo: float, hi: float, points=(), levels: int = 30, ratio: float = 0.5):
    """Sorted edges of ``[lo, hi]`` refined geometrically toward each interior point.

    Every point in ``points`` strictly inside ``(lo, hi)`` becomes an edge, and
    on both sides of it the partition is graded with ``levels`` panels whose
    widths shrink by ``ratio``.
    """
    inner = sorted(p for p in points if lo < p < hi)
    cuts = [lo] + inner + [hi]
    edges = set(cuts)
    targets = sorted(set(p for p in points if lo <= p <= hi))
    for c in targets:
        k = cuts.index(c) if c in cuts else None
        if k is None:
            continue
        sides = []
        if k > 0:
            sides.append(cuts[k - 1])
        if k < len(cuts) - 1:
            sides.append(cuts[k + 1])
        for side in sides:
            step = side - c
            for _ in range(levels):
                step *= ratio
                edges.add(c + step)
    return np.array(sorted(edges))
