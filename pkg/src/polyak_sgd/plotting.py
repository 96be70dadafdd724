"""Matplotlib figures for experiment curves and step-size heatmaps."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

COLORS = ["tab:blue", "tab:red", "tab:green", "tab:orange", "tab:purple", "tab:brown"]


def plot_curves(curves: dict, path, ylabel: str = r"mean $q_k$", title: str | None = None) -> Path:
    """Log-scale mean ``q_k`` per policy with a 3-SE band and dashed bounds."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for i, (label, c) in enumerate(curves.items()):
        if not len(c):
            continue
        color = COLORS[i % len(COLORS)]
        k = c.k
        ax.plot(k, c.mean_q, color=color, lw=1.5, label=label)
        lo = np.clip(c.mean_q - 3 * c.se_q, np.finfo(float).tiny, None)
        ax.fill_between(k, lo, c.mean_q + 3 * c.se_q, color=color, alpha=0.15, lw=0)
        if c.bound is not None:
            ax.plot(k, c.bound, color=color, ls="--", lw=1.0, label=f"{label} bound")
    ax.set_yscale("log")
    ax.set_xlabel("iteration $k$")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def plot_heatmap(problem, grid, path, levels: int = 12) -> Path:
    """Filled contours of the step size with level sets of ``f`` on top."""
    X, Y = np.meshgrid(grid.xs, grid.ys)
    F = np.vectorize(lambda a, b: problem.value(np.array([a, b])))(X, Y)
    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    H = np.ma.masked_invalid(grid.h)
    cf = ax.contourf(X, Y, H, levels=levels, cmap="viridis")
    fig.colorbar(cf, ax=ax, label="$h(x)$")
    ax.contour(X, Y, F, levels=levels, colors="white", linewidths=0.7)
    ax.set_aspect("equal")
    ax.set_xlabel("$x_1$")
    ax.set_ylabel("$x_2$")
    fig.tight_layout()
    return _save(fig, path)


def plot_bounds(bounds: dict, path) -> Path:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for i, (label, b) in enumerate(bounds.items()):
        ax.plot(b.k, b.values, color=COLORS[i % len(COLORS)], label=label)
    ax.set_yscale("log")
    ax.set_xlabel("iteration $k$")
    ax.set_ylabel(r"bound on $E[q_k]$")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps repeated renders identical
    fig.savefig(path, metadata={"Date": None} if path.suffix == ".svg" else None)
    plt.close(fig)
    return path
