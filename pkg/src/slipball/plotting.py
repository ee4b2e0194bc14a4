"""SVG figures for CLI runs (matplotlib, Agg backend, reproducible output)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "lines.linewidth": 1.2,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.figsize": (5.0, 3.4),
    "svg.hashsalt": "slipball",  # stable element ids across runs
    "svg.fonttype": "path",
}


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)


def decay_plot(t, e_dev, predicted_rate, path, label="|u - target|^2") -> None:
    """Semilog plot of the deviation energy against the predicted envelope."""
    t = np.asarray(t)
    e_dev = np.asarray(e_dev)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.semilogy(t, e_dev, color="#08589e", label=label)
        if predicted_rate is not None and e_dev[0] > 0:
            ax.semilogy(
                t, e_dev[0] * np.exp(-predicted_rate * t), "--", color="#d95f02",
                label=f"envelope exp(-{predicted_rate:.4g} t)",
            )
        ax.set_xlabel("t")
        ax.set_ylabel("energy")
        ax.legend(loc="upper right")
        _save(fig, path)


def spectrum_plot(eigenvalues, path, null_tol=1e-9) -> None:
    vals = np.asarray(eigenvalues)
    idx = np.arange(vals.size)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        nz = np.abs(vals) > null_tol
        ax.semilogy(idx[nz], vals[nz], ".", color="#08589e", label="eigenvalues")
        if (~nz).any():
            ax.plot(idx[~nz], np.full((~nz).sum(), vals[nz].min() if nz.any() else 1.0), "x",
                    color="#d95f02", label="null (plotted at floor)")
        ax.set_xlabel("index")
        ax.set_ylabel("Stokes eigenvalue")
        ax.legend(loc="lower right")
        _save(fig, path)


def gronwall_plot(t, y, K, path) -> None:
    t = np.asarray(t)
    y = np.asarray(y)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.semilogy(t, y, color="#08589e", label="y(t)")
        ax.semilogy(t, y[0] * np.exp(-K * (t - t[0])), "--", color="#d95f02", label=f"y(0) exp(-{K:.4g} t)")
        ax.set_xlabel("t")
        ax.legend(loc="upper right")
        _save(fig, path)
