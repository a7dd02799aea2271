"""Joint-quality measurements from the six keypoints.

Pairs: (K1, K2) head height, (K3, K4) interlock, (K5, K6) bottom thickness.
Image y grows downward.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvertedPair


def _kps(kps) -> np.ndarray:
    arr = np.asarray(kps, dtype=np.float64)
    if arr.shape != (6, 2):
        raise ValueError(f"expected 6 keypoints, got shape {arr.shape}")
    return arr


def _check_pitch(pitch):
    if not pitch > 0:
        raise ValueError("pitch must be positive")


def head_height(kps, pitch: float) -> float:
    """Signed: positive when the head stands proud of the sheet surface."""
    _check_pitch(pitch)
    k = _kps(kps)
    return float((k[1, 1] - k[0, 1]) * pitch)


def interlock(kps, pitch: float) -> float:
    _check_pitch(pitch)
    k = _kps(kps)
    return float(abs(k[3, 0] - k[2, 0]) * pitch)


def bottom_thickness(kps, pitch: float) -> float:
    _check_pitch(pitch)
    k = _kps(kps)
    dy = k[5, 1] - k[4, 1]
    if dy < 0:
        raise InvertedPair("bottom keypoint K6 lies above K5")
    return float(dy * pitch)


@dataclass(frozen=True)
class MeasurementReport:
    head_height_mm: float
    interlock_mm: float
    bottom_thickness_mm: float

    def to_dict(self, sample_id: str) -> dict:
        return {"id": sample_id, "d_h_mm": self.head_height_mm,
                "d_i_mm": self.interlock_mm, "d_b_mm": self.bottom_thickness_mm}


def measure_all(kps, pitch: float) -> MeasurementReport:
    return MeasurementReport(head_height(kps, pitch), interlock(kps, pitch),
                             bottom_thickness(kps, pitch))
