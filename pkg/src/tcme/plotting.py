"""Figures for the CLI report paths.

Everything renders through the non-interactive Agg backend straight to a file;
nothing here opens a window.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiments import ConfusionMatrix  # noqa: E402
from .mpc.cost import CostReport, linear_fit  # noqa: E402


def _pct(x: float | None) -> str:
    return "n/a" if x is None else f"{100 * x:.1f}%"


def plot_confusion(matrix: ConfusionMatrix, path, title: str = "Coloring verification") -> Path:
    """Heatmap with ground truth on rows and predictions on columns, YES first."""
    cells = np.array([[matrix.tp, matrix.fn], [matrix.fp, matrix.tn]])
    fig, ax = plt.subplots(figsize=(4.2, 4.0))
    ax.imshow(cells, cmap="Blues", vmin=0, vmax=max(int(cells.max()), 1))
    ax.set_xticks([0, 1], labels=["YES", "NO"])
    ax.set_yticks([0, 1], labels=["valid", "invalid"])
    ax.set_xlabel("predicted")
    ax.set_ylabel("ground truth")
    half = cells.max() / 2
    for (i, j), v in np.ndenumerate(cells):
        ax.text(j, i, str(v), ha="center", va="center", color="white" if v > half else "black")
    ax.set_title(
        f"{title}\nacc {_pct(matrix.accuracy)}  prec {_pct(matrix.precision)}  rec {_pct(matrix.recall)}",
        fontsize=9,
    )
    fig.tight_layout()
    return _save(fig, path)


def plot_cost_scaling(reports: list[CostReport], path) -> Path:
    """Garbled-circuit bytes against circuit size, with the TCME frame count alongside."""
    n = [r.n for r in reports]
    gates = [r.gate_count for r in reports]
    size = [r.garbled_bytes for r in reports]
    slope, intercept, r2 = linear_fit(gates, size)

    fig, (left, right) = plt.subplots(1, 2, figsize=(9, 3.6))
    left.plot(gates, size, "o", label="measured")
    xs = np.linspace(0, max(gates), 50)
    left.plot(xs, slope * xs + intercept, "-", lw=1, label=f"fit, $R^2$={r2:.4f}")
    left.set_xlabel("gates")
    left.set_ylabel("garbled bytes")
    left.legend(frameon=False)

    right.plot(n, size, "o-", label="garbled circuit (bytes)")
    right.set_xscale("log")
    right.set_yscale("log")
    right.set_xlabel("vector length n")
    right.set_ylabel("bytes")
    if all(r.tcme_bytes is not None for r in reports):
        right.plot(n, [r.tcme_bytes for r in reports], "s-", label="TCME session (bytes)")
        frames = sorted({r.tcme_frames for r in reports})
        right.set_title(f"TCME frames per session: {', '.join(map(str, frames))}", fontsize=9)
    right.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
