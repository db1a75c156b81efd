"""Report figures: correlation heat maps and rank-parity histograms.

Figures are built directly on :class:`matplotlib.figure.Figure` (no
pyplot, no global state) so rendering works headless and repeated calls
cannot leak figures. Heat maps use a diverging palette pinned to
[-1, 1] so the neutral color always sits at rho = 0 and panels from
different runs are comparable at a glance; failed cells are hatched
gray with an "ERR" annotation.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib import colormaps
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure
from matplotlib.patches import Rectangle

EMPTY_LABEL = "(empty)"


def _label(text: str) -> str:
    return text if text else EMPTY_LABEL


def render_heatmap(grid) -> Figure:
    """Heat map of a grid result: terms down the side, keys across."""
    matrix = grid.rho_matrix()
    n_rows, n_cols = matrix.shape
    fig = Figure(
        figsize=(
            max(4.0, 1.8 + 0.95 * n_cols),
            max(3.2, 1.4 + 0.62 * n_rows),
        )
    )
    FigureCanvasAgg(fig)
    ax = fig.add_subplot(111)

    cmap = colormaps["RdBu_r"].copy()
    cmap.set_bad(color="0.82")
    data = np.ma.masked_invalid(matrix)
    image = ax.imshow(data, cmap=cmap, vmin=-1.0, vmax=1.0, aspect="auto")

    ax.set_xticks(range(n_cols))
    ax.set_xticklabels(
        [_label(k) for k in grid.query_keys], rotation=40, ha="right", fontsize=8
    )
    ax.set_yticks(range(n_rows))
    ax.set_yticklabels([_label(t) for t in grid.context_terms], fontsize=8)
    ax.set_xlabel("query key")
    ax.set_ylabel("contextualization term")

    for i in range(n_rows):
        for j in range(n_cols):
            cell = grid.cells[i][j]
            if cell.ok:
                # readable on both palette extremes
                dark = abs(cell.rho) > 0.55
                ax.text(
                    j, i, f"{cell.rho:.2f}",
                    ha="center", va="center", fontsize=7,
                    color="white" if dark else "black",
                )
            else:
                ax.add_patch(
                    Rectangle(
                        (j - 0.5, i - 0.5), 1.0, 1.0,
                        fill=False, hatch="///", edgecolor="0.55", linewidth=0,
                    )
                )
                ax.text(
                    j, i, "ERR", ha="center", va="center",
                    fontsize=7, color="0.25",
                )

    meta = grid.metadata
    title = meta.get("dataset", "")
    model = meta.get("model_id")
    if model:
        title = f"{title}  [{model}]" if title else str(model)
    if title:
        ax.set_title(title, fontsize=10)

    bar = fig.colorbar(image, ax=ax, fraction=0.046, pad=0.04)
    bar.set_label("Spearman rank correlation")
    fig.tight_layout()
    return fig


def render_parity(series) -> Figure:
    """2-D histogram of (ground-truth rank, similarity rank) pairs.

    Color encodes how many items fall in each rank-pair bin; empty bins
    stay white. A perfect ranking lights up the main diagonal.
    """
    fig = Figure(figsize=(4.8, 4.2))
    FigureCanvasAgg(fig)
    ax = fig.add_subplot(111)

    counts = np.asarray(series.counts, dtype=np.float64)
    masked = np.ma.masked_equal(counts, 0.0)
    cmap = colormaps["viridis"].copy()
    cmap.set_bad(color="white")
    lo, hi = float(series.edges[0]), float(series.edges[-1])
    image = ax.imshow(
        masked.T,
        origin="lower",
        extent=(lo, hi, lo, hi),
        cmap=cmap,
        aspect="equal",
        interpolation="nearest",
    )
    ax.plot([lo, hi], [lo, hi], linestyle=":", linewidth=0.8, color="0.4")
    ax.set_xlabel("ground-truth rank")
    ax.set_ylabel("similarity rank")
    ax.set_xlim(lo, hi)
    ax.set_ylim(lo, hi)
    bar = fig.colorbar(image, ax=ax, fraction=0.046, pad=0.04)
    bar.set_label("items per bin")
    fig.tight_layout()
    return fig


def save_svg(fig: Figure, path) -> Path:
    """Write a figure to ``path`` as SVG, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg")
    return path
