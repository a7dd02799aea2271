"""PCK, OKS and MPJPE over sets of keypoints, plus table-style reports.

All metrics pool every keypoint of every sample (micro average) unless
``average="macro"`` is requested, which averages per-sample scores instead.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import LengthMismatch, MissingHeadRadius, NonpositiveScale, UnknownId

DEFAULT_TAUS = (10.0, 50.0)
DEFAULT_OKS_K = 0.1


def _distances(pred, gt) -> np.ndarray:
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.ndim == 2:
        p = p[None]
    if g.ndim == 2:
        g = g[None]
    if p.shape != g.shape or p.shape[-1] != 2:
        raise LengthMismatch(f"prediction shape {p.shape} does not match ground truth {g.shape}")
    return np.hypot(p[..., 0] - g[..., 0], p[..., 1] - g[..., 1])


def _reduce(values: np.ndarray, average: str) -> float:
    if average == "micro":
        return float(values.mean())
    if average == "macro":
        return float(values.mean(axis=1).mean())
    raise ValueError("average must be 'micro' or 'macro'")


def pck(pred, gt, tau: float, average: str = "micro") -> float:
    """Fraction of keypoints within ``tau`` pixels (distance == tau counts)."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    return _reduce((_distances(pred, gt) <= tau).astype(np.float64), average)


def oks(pred, gt, scale, k: float = DEFAULT_OKS_K, average: str = "micro") -> float:
    """Mean of ``exp(-d^2 / (2 s^2 k^2))`` with one scale ``s`` per sample."""
    d = _distances(pred, gt)
    s = np.broadcast_to(np.asarray(scale, dtype=np.float64), (d.shape[0],))
    if np.any(~(s > 0)):
        raise NonpositiveScale("object scale must be positive for every sample")
    if not k > 0:
        raise NonpositiveScale("k must be positive")
    return _reduce(np.exp(-(d**2) / (2.0 * (s[:, None] * k) ** 2)), average)


def mpjpe(pred, gt, average: str = "micro") -> float:
    """Mean Euclidean keypoint error in pixels."""
    return _reduce(_distances(pred, gt), average)


def _tau_key(tau) -> str:
    return f"{float(tau):g}"


@dataclass
class MetricsReport:
    pck_at: dict
    oks: float
    mpjpe: float
    sample_count: int
    keypoint_count: int
    per_keypoint_mpjpe: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "pck": {_tau_key(t): v for t, v in self.pck_at.items()},
            "mpjpe": self.mpjpe,
            "oks": self.oks,
            "samples": self.sample_count,
            "keypoints": self.keypoint_count,
        }

    def table_row(self) -> str:
        cols = [f"PCK@{_tau_key(t)} {v:.2f}" for t, v in self.pck_at.items()]
        return "  ".join(cols + [f"MPJPE {self.mpjpe:.2f}", f"OKS {self.oks:.2f}"])


def evaluate(predictions, manifest, taus=DEFAULT_TAUS, k: float = DEFAULT_OKS_K,
             average: str = "micro") -> MetricsReport:
    """Score predictions against manifest ground truth in stored-image pixels."""
    gt_by_id = manifest.by_id()
    preds, gts, scales = [], [], []
    for p in predictions:
        if p.id not in gt_by_id:
            raise UnknownId(f"prediction id {p.id!r} is not in the manifest")
        sample = gt_by_id[p.id]
        if sample.head_radius_px is None or not sample.head_radius_px > 0:
            raise MissingHeadRadius(f"sample {p.id!r} has no usable head radius")
        preds.append(p.keypoints)
        gts.append(sample.keypoints)
        scales.append(sample.head_radius_px)
    if not preds:
        raise LengthMismatch("no predictions to evaluate")
    pred_arr = np.stack(preds)
    gt_arr = np.stack(gts)
    d = _distances(pred_arr, gt_arr)
    return MetricsReport(
        pck_at={float(t): pck(pred_arr, gt_arr, t, average) for t in taus},
        oks=oks(pred_arr, gt_arr, scales, k, average),
        mpjpe=mpjpe(pred_arr, gt_arr, average),
        sample_count=len(preds),
        keypoint_count=pred_arr.shape[1],
        per_keypoint_mpjpe=[float(v) for v in d.mean(axis=0)],
    )
