"""Training-time augmentation: random affine, box-like Gaussian blur, clipping.

The image and its keypoints always go through the same 3x3 matrix, so targets
can be re-encoded from the warped keypoints.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import KeypointEjected

SCALE_RANGE = (0.8, 1.1)
TRANSLATE_MAX = 5.0
SHEAR_MAX_DEG = 3.0
ROTATE_MAX_DEG = 2.0
BLUR_KERNELS = (5, 7)
BLUR_SIGMA = 20.0


@dataclass(frozen=True)
class AugmentParams:
    scale: float = 1.0
    translate_x: float = 0.0
    translate_y: float = 0.0
    shear_deg: float = 0.0
    rotate_deg: float = 0.0
    blur_kernel: int = 5
    blur_sigma: float = BLUR_SIGMA
    blur_enabled: bool = False

    @classmethod
    def identity(cls) -> "AugmentParams":
        return cls()


def sample_params(seed: int) -> AugmentParams:
    rng = np.random.default_rng(seed)
    return AugmentParams(
        scale=float(rng.uniform(*SCALE_RANGE)),
        translate_x=float(rng.uniform(-TRANSLATE_MAX, TRANSLATE_MAX)),
        translate_y=float(rng.uniform(-TRANSLATE_MAX, TRANSLATE_MAX)),
        shear_deg=float(rng.uniform(-SHEAR_MAX_DEG, SHEAR_MAX_DEG)),
        rotate_deg=float(rng.uniform(-ROTATE_MAX_DEG, ROTATE_MAX_DEG)),
        blur_kernel=int(rng.choice(BLUR_KERNELS)),
        blur_sigma=BLUR_SIGMA,
        blur_enabled=bool(rng.integers(2)),
    )


def affine_matrix(params: AugmentParams, height: int, width: int) -> np.ndarray:
    """Homogeneous (x, y) matrix: scale, then shear, then rotate about the
    image centre, then translate."""
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    to_origin = np.array([[1, 0, -cx], [0, 1, -cy], [0, 0, 1]], dtype=np.float64)
    back = np.array([[1, 0, cx + params.translate_x],
                     [0, 1, cy + params.translate_y],
                     [0, 0, 1]], dtype=np.float64)
    s = params.scale
    scale = np.diag([s, s, 1.0])
    shear = np.array([[1, np.tan(np.deg2rad(params.shear_deg)), 0],
                      [0, 1, 0], [0, 0, 1]], dtype=np.float64)
    a = np.deg2rad(params.rotate_deg)
    rot = np.array([[np.cos(a), -np.sin(a), 0],
                    [np.sin(a), np.cos(a), 0], [0, 0, 1]], dtype=np.float64)
    return back @ rot @ shear @ scale @ to_origin


def blur_kernel(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-(r**2) / (2.0 * sigma**2))
    return k / k.sum()


def clip(image: np.ndarray) -> np.ndarray:
    return np.clip(image, -1.0, 1.0)


def apply(image: np.ndarray, keypoints, params: AugmentParams):
    """Warp ``image`` (already in [-1, 1]) and ``keypoints`` consistently.

    Raises :class:`KeypointEjected` when a warped keypoint leaves the frame.
    """
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape
    kps = np.asarray(keypoints, dtype=np.float64)
    m = affine_matrix(params, h, w)

    if not np.array_equal(m, np.eye(3)):
        kps = kps @ m[:2, :2].T + m[:2, 2]
        if np.any(kps < 0) or np.any(kps[:, 0] > w - 1) or np.any(kps[:, 1] > h - 1):
            raise KeypointEjected("augmentation moved a keypoint out of frame")
        # ndimage works in (row, col); invert the (x, y) map and swap axes
        inv = np.linalg.inv(m)
        swap = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 1]], dtype=np.float64)
        inv_rc = swap @ inv @ swap
        img = ndimage.affine_transform(img, inv_rc[:2, :2], offset=inv_rc[:2, 2],
                                       order=1, mode="nearest")
    else:
        img = img.copy()
        kps = kps.copy()

    if params.blur_enabled:
        k = blur_kernel(params.blur_kernel, params.blur_sigma)
        img = ndimage.convolve1d(img, k, axis=0, mode="nearest")
        img = ndimage.convolve1d(img, k, axis=1, mode="nearest")

    return clip(img), kps
