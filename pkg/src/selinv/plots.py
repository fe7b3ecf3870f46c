"""Figure rendering for the analysis exports (PNG files next to the CSVs)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analysis import MB, heatmap_rows, histogram_rows


def render_heatmap(path, ledger, grid, direction="sent", kind="all", title=None):
    img = np.zeros((grid.pr, grid.pc))
    for i, j, b in heatmap_rows(ledger, grid, direction, kind):
        img[i, j] = b / MB
    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(img, cmap="viridis")
    ax.set_xlabel("grid column")
    ax.set_ylabel("grid row")
    ax.set_title(title or f"{direction} volume per rank ({kind})")
    fig.colorbar(im, ax=ax, label="MB")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_histogram(path, ledger, direction="sent", kind="all", bins=10, title=None):
    rows = histogram_rows(ledger, direction, kind, bins)
    lowers = [lo / MB for lo, _, _ in rows]
    widths = [(hi - lo) / MB for lo, hi, _ in rows]
    counts = [c for _, _, c in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(lowers, counts, width=widths, align="edge", edgecolor="black")
    ax.set_xlabel("per-rank volume (MB)")
    ax.set_ylabel("rank count")
    ax.set_title(title or f"{direction} volume distribution ({kind})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
