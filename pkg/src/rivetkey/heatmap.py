"""Gaussian heatmap targets and peak decoding."""
from __future__ import annotations

import numpy as np

from .errors import KeypointOutOfBounds


def encode(keypoints, height: int, width: int, sigma: float) -> np.ndarray:
    """One unnormalized Gaussian map per keypoint, shape (K, height, width).

    Value at pixel (i, j) is ``exp(-((j - x)^2 + (i - y)^2) / (2 sigma^2))``;
    the peak is 1 only when the keypoint sits on a pixel centre.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    kps = np.asarray(keypoints, dtype=np.float64).reshape(-1, 2)
    x, y = kps[:, 0], kps[:, 1]
    if (not np.all(np.isfinite(kps)) or np.any(x < 0) or np.any(y < 0)
            or np.any(x > width - 1) or np.any(y > height - 1)):
        raise KeypointOutOfBounds(f"keypoints must lie inside the {width}x{height} grid")
    cols = np.arange(width, dtype=np.float64)
    rows = np.arange(height, dtype=np.float64)
    # separable: exp(a + b) = exp(a) * exp(b)
    gx = np.exp(-((cols[None, :] - x[:, None]) ** 2) / (2.0 * sigma**2))
    gy = np.exp(-((rows[None, :] - y[:, None]) ** 2) / (2.0 * sigma**2))
    return gy[:, :, None] * gx[:, None, :]


def decode(heatmaps, subpixel: bool = True):
    """Peak location and peak value of every map.

    Ties resolve to the smallest row, then the smallest column. With
    ``subpixel`` the argmax is refined by the centroid of its 3x3 neighbourhood
    after subtracting the neighbourhood minimum (a plain centroid is biased
    toward the window centre for broad peaks).

    Returns ``(keypoints (K, 2), confidences (K,))``.
    """
    maps = np.asarray(heatmaps, dtype=np.float64)
    if maps.ndim == 2:
        maps = maps[None]
    k, h, w = maps.shape
    if h == 0 or w == 0:
        raise ValueError("heatmaps must be nonempty")
    flat = maps.reshape(k, -1)
    idx = np.argmax(flat, axis=1)
    conf = flat[np.arange(k), idx]
    rows, cols = np.divmod(idx, w)
    kps = np.stack([cols, rows], axis=1).astype(np.float64)
    if subpixel:
        for m in range(k):
            kps[m] = _refine(maps[m], rows[m], cols[m])
    return kps, conf


def _refine(hm, r, c):
    h, w = hm.shape
    r0, r1 = max(r - 1, 0), min(r + 2, h)
    c0, c1 = max(c - 1, 0), min(c + 2, w)
    win = hm[r0:r1, c0:c1]
    wts = win - win.min()
    total = wts.sum()
    if total <= 0:
        return np.array([c, r], dtype=np.float64)
    yy, xx = np.mgrid[r0:r1, c0:c1]
    return np.array([(wts * xx).sum() / total, (wts * yy).sum() / total])
