"""Static figure rendering: keypoint overlays and per-keypoint confidence maps."""
from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .dataio import atomic_write_bytes  # noqa: E402

# head height pair, interlock pair, bottom thickness pair
KEYPOINT_COLORS = ("red", "gold", "limegreen", "limegreen", "royalblue", "royalblue")


def _save(fig, path):
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=100, bbox_inches="tight")
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def overlay(image, gt=None, pred=None, title=None, path=None):
    """Ground truth as X marks, predictions as dots."""
    fig, ax = plt.subplots(figsize=(5, 5 * image.shape[0] / max(image.shape[1], 1) + 0.5))
    ax.imshow(image, cmap="gray", vmin=0.0, vmax=1.0)
    n = len(gt) if gt is not None else len(pred)
    colors = [KEYPOINT_COLORS[i % len(KEYPOINT_COLORS)] for i in range(n)]
    if gt is not None:
        ax.scatter(gt[:, 0], gt[:, 1], c=colors, marker="x", s=60, linewidths=2)
    if pred is not None:
        ax.scatter(pred[:, 0], pred[:, 1], c=colors, marker="o", s=25, edgecolors="black",
                   linewidths=0.5)
    if title:
        ax.set_title(title)
    ax.set_axis_off()
    if path is not None:
        _save(fig, path)
    return fig


def heatmap_panel(image, maps, confidences=None, path=None):
    """One panel per keypoint: the input with its predicted map on top."""
    k = len(maps)
    fig, axes = plt.subplots(1, k, figsize=(2.6 * k, 2.8))
    axes = np.atleast_1d(axes)
    for i, ax in enumerate(axes):
        ax.imshow(image, cmap="gray")
        ax.imshow(maps[i], cmap="inferno", alpha=0.65, vmin=0.0, vmax=max(float(maps[i].max()), 1e-6))
        label = f"keypoint {i + 1}"
        if confidences is not None:
            label += f" ({confidences[i]:.2f})"
        ax.set_title(label, fontsize=9)
        ax.set_axis_off()
    if path is not None:
        _save(fig, path)
    return fig
