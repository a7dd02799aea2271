"""Keypoint estimation for self-piercing rivet joint cross-sections.

Procedural phantoms, Gaussian-heatmap UNet regression with two-phase transfer
learning, PCK / OKS / MPJPE evaluation and joint measurements.
"""
from .dataio import (Manifest, Prediction, Predictions, Sample, preprocess,
                     read_manifest, read_predictions, split_by_config,
                     write_manifest, write_predictions)
from .heatmap import decode, encode
from .measure import MeasurementReport, measure_all
from .metrics import MetricsReport, evaluate, mpjpe, oks, pck
from .phantom import (JointConfig, NoiseParams, corrupt, generate_dataset,
                      render, sample_config)

__version__ = "0.1.0"

__all__ = [
    "JointConfig", "NoiseParams", "sample_config", "render", "corrupt", "generate_dataset",
    "Sample", "Manifest", "read_manifest", "write_manifest", "split_by_config", "preprocess",
    "Prediction", "Predictions", "read_predictions", "write_predictions",
    "encode", "decode", "pck", "oks", "mpjpe", "evaluate", "MetricsReport",
    "measure_all", "MeasurementReport",
]
