"""Report figures, written to files next to the CSV/JSON outputs.

Built on ``matplotlib.figure.Figure`` directly, so no pyplot global state
or interactive backend is touched.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

from .grid import GridField

__all__ = [
    "plot_solution",
    "plot_residual_history",
    "plot_convergence",
    "plot_kernel_profile",
]

RC = {"figsize": (6.0, 4.0), "dpi": 120}


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    return path


def plot_solution(u: GridField, path, a: float | None = None, title: str = "") -> Path:
    """Line plot in 1D, colour map in 2D, mid-plane slice in 3D."""
    d = u.domain
    fig = Figure(**RC)
    ax = fig.add_subplot()
    full = u.full()
    axes = d.axes(include_boundary=True)
    if d.dim == 1:
        ax.plot(axes[0], full, lw=1.5, label="u")
        if a is not None:
            for s in (a, -a):
                ax.axhline(s, color="0.5", ls="--", lw=0.8)
            ax.plot([], [], color="0.5", ls="--", lw=0.8, label=r"$\pm a$")
        ax.set_xlabel("x")
        ax.set_ylabel("u")
        ax.legend(frameon=False)
    else:
        if d.dim == 3:
            full = full[:, :, full.shape[2] // 2]
            title = (title + " " if title else "") + "(z mid-plane)"
        mesh = ax.pcolormesh(axes[0], axes[1], full.T, shading="auto", cmap="viridis")
        fig.colorbar(mesh, ax=ax, label="u")
        ax.set_aspect("equal")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_residual_history(residuals, path, tol: float | None = None) -> Path:
    res = np.asarray(residuals, dtype=float)
    fig = Figure(**RC)
    ax = fig.add_subplot()
    # zero residuals (F = 0) cannot sit on a log axis
    ax.semilogy(np.arange(res.size), np.where(res > 0, res, np.nan), marker=".", lw=1)
    if tol is not None:
        ax.axhline(tol, color="tab:red", ls=":", lw=1, label="tolerance")
        ax.legend(frameon=False)
    ax.set_xlabel("iteration")
    ax.set_ylabel(r"$\|Au + F(u)\|_\infty$")
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, path)


def plot_convergence(h, differences, path, order: float = 2.0) -> Path:
    """Successive sup differences against ``h`` with a reference slope."""
    h = np.asarray(h, dtype=float)
    diff = np.asarray(differences, dtype=float)
    fig = Figure(**RC)
    ax = fig.add_subplot()
    ax.loglog(h, diff, "o-", label=r"$\|u_h - u_{h/2}\|_\infty$")
    if diff.size and diff[0] > 0:
        ax.loglog(h, diff[0] * (h / h[0]) ** order, "k--", lw=0.8, label=f"slope {order:g}")
    ax.set_xlabel("h")
    ax.set_ylabel("difference")
    ax.legend(frameon=False)
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, path)


def plot_kernel_profile(r, g_h, k: float, path, exclusion: float | None = None) -> Path:
    """Discrete kernel column against distance, with the free-space kernel."""
    r = np.asarray(r, dtype=float)
    fig = Figure(**RC)
    ax = fig.add_subplot()
    ax.loglog(r, np.maximum(g_h, 1e-300), ".", ms=2, alpha=0.4, label=r"$G_h(x, y)$")
    rr = np.geomspace(r.min(), r.max(), 200)
    ax.loglog(rr, np.exp(-k * rr) / (4 * np.pi * rr), "k-", lw=1, label=r"$e^{-kr}/(4\pi r)$")
    if exclusion is not None:
        ax.axvline(exclusion, color="0.5", ls=":", lw=0.8)
    ax.set_xlabel("|x - y|")
    ax.set_ylabel("kernel")
    ax.legend(frameon=False)
    return _save(fig, path)
