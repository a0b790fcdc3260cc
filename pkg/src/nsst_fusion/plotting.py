"""Figure rendering for diagnostics and batch reports (file output only)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_subband_maps", "plot_batch_metrics", "plot_fusion_triplet"]


def _map_grid(n_rows: int, n_cols: int, scale: float = 1.6):
    fig, axes = plt.subplots(n_rows, n_cols, figsize=(scale * n_cols, scale * n_rows), squeeze=False)
    for ax in axes.flat:
        ax.set_axis_off()
    return fig, axes


def plot_subband_maps(maps: dict, path, title: str = "") -> Path:
    """One row per scale, one panel per direction; values shown on [0, 1].

    ``maps`` is keyed by ``(scale, direction)``.
    """
    scales = sorted({j for j, _ in maps})
    n_cols = max(k for _, k in maps) + 1
    fig, axes = _map_grid(len(scales), n_cols)
    for (j, k), arr in maps.items():
        ax = axes[scales.index(j), k]
        ax.imshow(np.clip(arr, 0, 1), cmap="gray", vmin=0, vmax=1)
        ax.set_title(f"j={j + 1}, k={k + 1}", fontsize=7)
    if title:
        fig.suptitle(title, fontsize=9)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_fusion_triplet(a, b, f, path) -> Path:
    fig, axes = _map_grid(1, 3, scale=2.6)
    for ax, img, label in zip(axes[0], (a, b, f), ("infrared", "visible", "fused")):
        ax.imshow(img, cmap="gray", vmin=0, vmax=255)
        ax.set_title(label, fontsize=9)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_batch_metrics(rows: dict[str, dict[str, float]], path) -> Path:
    """Grouped bars, one panel per metric, one bar per image pair."""
    stems = list(rows)
    keys = list(next(iter(rows.values())))
    n_cols = 3
    n_rows = int(np.ceil(len(keys) / n_cols))
    fig, axes = plt.subplots(n_rows, n_cols, figsize=(3.2 * n_cols, 2.4 * n_rows), squeeze=False)
    x = np.arange(len(stems))
    for ax, key in zip(axes.flat, keys):
        vals = [rows[s][key] for s in stems]
        ax.bar(x, vals, color="0.45")
        ax.axhline(np.mean(vals), color="k", lw=0.8, ls="--")
        ax.set_title(key, fontsize=9)
        ax.set_xticks(x)
        ax.set_xticklabels(stems, rotation=45, ha="right", fontsize=7)
        ax.tick_params(axis="y", labelsize=7)
    for ax in list(axes.flat)[len(keys):]:
        ax.set_axis_off()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
