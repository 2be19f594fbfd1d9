"""Figures written next to the CSV outputs when ``--figures`` is given."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .core import rate_exponent, u_h  # noqa: E402


def _finish(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_deviation(result, path: Path, evaluator=None) -> Path:
    """Log-log sup-deviation against t, with the predicted slope drawn through the last point."""
    arr = np.asarray(result.deviation)
    p = result.params.p
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.loglog(arr[:, 0], arr[:, 1], "o-", ms=3, label="sup deviation")
    t_ref = arr[-1, 0]
    guide = arr[-1, 1] * (arr[:, 0] / t_ref) ** rate_exponent(p)
    ax.loglog(arr[:, 0], guide, "k--", lw=1, label=f"slope {rate_exponent(p):.3g}")
    if evaluator is not None:
        late = arr[arr[:, 0] >= 1.0, 0]
        if late.size:
            ax.loglog(late, evaluator.c_minus(0.0, late) * ((1 - p) * late) ** rate_exponent(p),
                      ":", label="lower bound at x=0")
    ax.set_xlabel("t")
    ax.set_ylabel(r"$\sup_x\,(u-u_h)$")
    ax.set_title(f"p = {p:.4g}")
    ax.legend(fontsize=8)
    return _finish(fig, path)


def plot_profiles(result, path: Path, x_max: float = 30.0) -> Path:
    """u(x, t) - u_h(t) near the origin for every stored frame."""
    fig, ax = plt.subplots(figsize=(5.5, 4))
    sel = np.abs(result.grid) <= x_max
    for fr in result.frames:
        ax.plot(result.grid[sel], fr.values[sel] - u_h(fr.t, result.params.p), lw=1, label=f"t={fr.t:g}")
    ax.set_xlabel("x")
    ax.set_ylabel(r"$u-u_h$")
    ax.legend(fontsize=7, ncol=2)
    return _finish(fig, path)


def plot_rate_table(rows, path: Path) -> Path:
    """Fitted against predicted slopes across a sweep of p."""
    p = np.array([r[0] for r in rows])
    fitted = np.array([r[2] for r in rows])
    grid = np.linspace(0.05, 0.8, 200)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.plot(grid, [rate_exponent(v) for v in grid], "k-", lw=1, label="(3p-1)/(2(1-p))")
    ax.plot(p, fitted, "o", label="fitted")
    ax.axvline(1 / 3, color="grey", ls=":")
    ax.axhline(0, color="grey", lw=0.5)
    ax.set_xlabel("p")
    ax.set_ylabel("slope")
    ax.legend(fontsize=8)
    return _finish(fig, path)
