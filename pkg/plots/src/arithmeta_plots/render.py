"""Drawing: validated tables in, raster images out.  Inputs are never modified."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .schemas import (
    PlaneAnnotations,
    load_adamtrace,
    load_plane,
    load_plane_annotations,
    load_sweep,
)


def render_plane(csv_path: str | Path, out_path: str | Path, meta_path: str | Path | None = None) -> None:
    """Filled-contour panel per domain, with anchor and centroid markers."""
    csv_path = Path(csv_path)
    table = load_plane(csv_path)
    if meta_path is None:
        meta_path = csv_path.with_suffix(".json")
    notes: PlaneAnnotations = load_plane_annotations(meta_path)

    n = len(table.domain_columns)
    fig, axes = plt.subplots(1, n, figsize=(4 * n, 3.6), squeeze=False, constrained_layout=True)
    aa, bb = np.meshgrid(table.a_values, table.b_values, indexing="ij")
    for d, ax in enumerate(axes[0]):
        cf = ax.contourf(aa, bb, np.log10(np.maximum(table.losses[:, :, d], 1e-12)),
                         levels=25, cmap="viridis_r")
        ax.contour(aa, bb, table.losses[:, :, d], levels=10, colors="white",
                   linewidths=0.4, alpha=0.5)
        ax.plot(notes.anchors[:, 0], notes.anchors[:, 1], "^", color="black",
                markersize=7, label="per-domain models")
        ax.plot([notes.centroid[0]], [notes.centroid[1]], "*", color="gold",
                markersize=13, markeredgecolor="black", label="averaged model")
        ax.set_title(table.domain_columns[d].replace("loss_", ""))
        ax.set_xlabel("a")
        if d == 0:
            ax.set_ylabel("b")
            ax.legend(loc="upper left", fontsize=7)
        fig.colorbar(cf, ax=ax, shrink=0.85, label="log10 loss")
    fig.savefig(out_path, dpi=130)
    plt.close(fig)


def render_adamtrace(csv_path: str | Path, out_path: str | Path) -> None:
    """Stacked-area chart of per-domain momentum shares over steps."""
    table = load_adamtrace(csv_path)
    fig, ax = plt.subplots(figsize=(6, 3.6), constrained_layout=True)
    ax.stackplot(table.steps, table.fractions.T,
                 labels=table.domain_columns, alpha=0.85)
    ax.set_xlim(table.steps[0], table.steps[-1])
    ax.set_ylim(0, 1)
    ax.set_xlabel("step")
    ax.set_ylabel("share of momentum")
    ax.legend(loc="upper right", fontsize=8)
    fig.savefig(out_path, dpi=130)
    plt.close(fig)


def render_sweep(csv_path: str | Path, out_path: str | Path) -> None:
    """Target accuracy against steps per domain, one error-bar line per scheme."""
    table = load_sweep(csv_path)
    fig, ax = plt.subplots(figsize=(5, 3.6), constrained_layout=True)
    for scheme in table.schemes:
        ax.errorbar(table.k_values[scheme], table.target_mean[scheme],
                    yerr=table.target_sd[scheme], marker="o", capsize=3, label=scheme)
    ax.set_xlabel("steps per domain")
    ax.set_ylabel("target accuracy")
    ax.legend()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)


RENDERERS = {
    "plane": render_plane,
    "adamtrace": render_adamtrace,
    "sweep": render_sweep,
}
