"""PNG figures for the CLI report path, rendered with the non-interactive Agg backend."""

from __future__ import annotations

import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = [
    "solution_figure",
    "series_figure",
    "oscillation_figure",
    "apriori_figure",
    "boundary_figure",
    "suite_figure",
]

_STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 120,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _save(fig, path) -> Path:
    # Agg output is stable for a fixed matplotlib version; drop the timestamp metadata
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    fig.savefig(tmp, format="png", metadata={"Software": None})
    plt.close(fig)
    os.replace(tmp, path)
    return path


def solution_figure(nodes, u, ratio, path, title: str = ""):
    """Solution and the boundary ratio ``u / delta^s``.

    1D data is drawn as curves; 2D data as scatter plots coloured by value.
    """
    nodes = np.asarray(nodes)
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
        if nodes.ndim == 1:
            axes[0].plot(nodes, u, lw=1.2)
            axes[0].set_xlabel("x")
            axes[0].set_ylabel("u")
            axes[1].plot(nodes, ratio, lw=1.2, color="C1")
            axes[1].set_xlabel("x")
            axes[1].set_ylabel(r"$u/\delta^s$")
        else:
            for ax, vals, lab in ((axes[0], u, "u"), (axes[1], ratio, r"$u/\delta^s$")):
                sc = ax.scatter(nodes[:, 0], nodes[:, 1], c=vals, s=6, cmap="viridis")
                ax.set_aspect("equal")
                ax.set_xlabel("x")
                ax.set_ylabel("y")
                fig.colorbar(sc, ax=ax, label=lab)
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        return _save(fig, path)


def series_figure(points, series_list, path, title: str = ""):
    """Truncated integrals against ``eps`` for each probe point."""
    with plt.rc_context(_STYLE):
        fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3.5))
        for x, ser in zip(points, series_list):
            lab = f"x={x}"
            ax0.semilogx(ser.eps, ser.values, marker=".", lw=1, label=lab)
            inc = np.abs(ser.increments)
            keep = inc > 0
            if np.any(keep):
                ax1.loglog(ser.eps[1:][keep], inc[keep], marker=".", lw=1, label=lab)
        ax0.set_xlabel(r"$\varepsilon$")
        ax0.set_ylabel("truncated integral")
        ax1.set_xlabel(r"$\varepsilon$")
        ax1.set_ylabel("|increment|")
        ax0.legend(fontsize=7)
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        return _save(fig, path)


def oscillation_figure(tables, alpha: float, path, title: str = ""):
    """Log-log oscillation against radius, one curve per centre."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.8))
        for k, tab in enumerate(tables):
            ax.loglog(tab.radii, tab.osc, marker="o", ms=3, lw=1, label=f"centre {k}")
        if tables:
            r = np.asarray(tables[0].radii)
            o = np.asarray(tables[0].osc)
            ref = o[0] * (r / r[0]) ** alpha
            ax.loglog(r, ref, "k--", lw=1, label=rf"$r^{{{alpha:.3f}}}$")
        ax.set_xlabel("r")
        ax.set_ylabel("osc")
        ax.legend(fontsize=7)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        return _save(fig, path)


def apriori_figure(K, sup, slope: float, path, title: str = ""):
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.8))
        ax.loglog(K, sup, "o-", ms=4, lw=1)
        ax.set_xlabel("K")
        ax.set_ylabel(r"$\|u\|_\infty$")
        ax.set_title(title or f"slope {slope:.8f}")
        fig.tight_layout()
        return _save(fig, path)


def boundary_figure(delta, ratio, path, title: str = ""):
    """Boundary ratio against distance to the complement."""
    delta = np.asarray(delta)
    order = np.argsort(delta)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.8))
        ax.semilogx(delta[order], np.asarray(ratio)[order], ".", ms=3)
        ax.set_xlabel(r"$\delta$")
        ax.set_ylabel(r"$u/\delta^s$")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        return _save(fig, path)


def suite_figure(results, path):
    """Pass/fail and runtime per acceptance criterion."""
    keys = [r.key for r in results]
    secs = [max(r.seconds, 1e-3) for r in results]
    colors = ["C2" if r.passed else "C3" for r in results]
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(7, 3.5))
        ax.bar(keys, secs, color=colors)
        ax.set_yscale("log")
        ax.set_ylabel("seconds")
        ax.set_title("acceptance suite (green = pass)")
        fig.tight_layout()
        return _save(fig, path)
