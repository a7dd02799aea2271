"""Pixel-wise BCE loss, the Adam training loop and inference.

A training run is one *phase* (``pretrain``, ``finetune`` or ``scratch``).
Transfer learning is a ``pretrain`` phase on clean phantoms followed by a
``finetune`` phase on noisy ones, initialised from the pretrain checkpoint.
"""
from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import augment, heatmap
from .dataio import (INPUT_SIZE, Manifest, Prediction, Predictions, load_png,
                     preprocess)
from .errors import (CheckpointMismatch, ConfigError, EmptyDataset, KeypointEjected,
                     ShapeError)
from .model import Checkpoint, ModelConfig, UNet, build, load_checkpoint
from .phantom import derive_seed

log = logging.getLogger(__name__)

EPS = 1e-7
PHASES = ("pretrain", "finetune", "scratch")
MAX_AUGMENT_TRIES = 10


@dataclass
class TrainConfig:
    seed: int = 0
    epochs: int = 100
    batch_size: int = 8
    learning_rate: float = 1e-3
    weight_decay: float = 1e-6
    sigma_schedule: list = field(default_factory=lambda: [(100, 3.0)])
    augment_enabled: bool = True
    holdout_fraction: float = 0.1

    def __post_init__(self):
        self.sigma_schedule = [(int(e), float(s)) for e, s in self.sigma_schedule]
        self.validate()

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if not self.learning_rate > 0 or self.weight_decay < 0:
            raise ConfigError("learning_rate must be positive and weight_decay nonnegative")
        if not 0 <= self.holdout_fraction < 1:
            raise ConfigError("holdout_fraction must be in [0, 1)")
        sched = self.sigma_schedule
        if not sched:
            raise ConfigError("sigma_schedule must not be empty")
        ends = [e for e, _ in sched]
        if any(b <= a for a, b in zip(ends, ends[1:])) or ends[0] < 1:
            raise ConfigError("sigma_schedule epochs must be strictly increasing from >= 1")
        if ends[-1] < self.epochs:
            raise ConfigError("sigma_schedule must cover every epoch")
        if any(s <= 0 for _, s in sched):
            raise ConfigError("sigmas must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sigma_schedule"] = [list(p) for p in self.sigma_schedule]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train config field(s): {sorted(unknown)}")
        return cls(**d)


def pretrain_config(epochs=100, seed=0, **kw) -> TrainConfig:
    return TrainConfig(seed=seed, epochs=epochs, sigma_schedule=[(epochs, 3.0)], **kw)


def finetune_config(epochs=100, seed=0, **kw) -> TrainConfig:
    """sigma 3 for the first half of the phase, 1.5 for the second."""
    half = epochs // 2
    sched = [(half, 3.0), (epochs, 1.5)] if half >= 1 else [(epochs, 1.5)]
    return TrainConfig(seed=seed, epochs=epochs, sigma_schedule=sched, **kw)


def load_train_config(path):
    """Read a training config JSON: TrainConfig fields plus a ``model`` object."""
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    model_cfg = ModelConfig.from_dict(obj.pop("model", {}))
    return TrainConfig.from_dict(obj), model_cfg


def sigma_at(schedule, epoch: int) -> float:
    for until, sigma in schedule:
        if epoch <= until:
            return sigma
    return schedule[-1][1]


def epoch_targets(keypoints, size: int, config: TrainConfig, epoch: int) -> np.ndarray:
    return heatmap.encode(keypoints, size, size, sigma_at(config.sigma_schedule, epoch))


def bce_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean per-pixel binary cross-entropy over all maps and pixels."""
    if pred.shape != target.shape:
        raise ShapeError(f"pred {tuple(pred.shape)} and target {tuple(target.shape)} differ")
    p = pred.clamp(EPS, 1.0 - EPS)
    return -(target * torch.log(p) + (1.0 - target) * torch.log1p(-p)).mean()


# --- data -----------------------------------------------------------------

@dataclass
class _Prepared:
    image: np.ndarray       # input_size^2, normalised to [-1, 1]
    keypoints: np.ndarray   # in the input_size frame
    transform: object


def prepare(manifest: Manifest, size: int = INPUT_SIZE, with_keypoints: bool = True) -> list:
    out = []
    for s in manifest.samples:
        img = load_png(manifest.image_file(s))
        kps = s.keypoints if with_keypoints else None
        img_p, kps_p, tf = preprocess(img, kps, size=size)
        out.append(_Prepared(np.clip(img_p * 2.0 - 1.0, -1.0, 1.0), kps_p, tf))
    return out


def _augmented(item: _Prepared, seed_keys, enabled: bool):
    if not enabled:
        return item.image, item.keypoints
    for attempt in range(MAX_AUGMENT_TRIES):
        params = augment.sample_params(derive_seed(*seed_keys, attempt))
        try:
            return augment.apply(item.image, item.keypoints, params)
        except KeypointEjected:
            continue
    return augment.apply(item.image, item.keypoints, augment.AugmentParams.identity())


def _batch(items, size, config, epoch, seed_keys=None):
    imgs, tgts = [], []
    for k, item in enumerate(items):
        if seed_keys is None:
            img, kps = item.image, item.keypoints
        else:
            img, kps = _augmented(item, (*seed_keys, k), config.augment_enabled)
        imgs.append(img)
        tgts.append(epoch_targets(kps, size, config, epoch))
    x = torch.from_numpy(np.stack(imgs)[:, None].astype(np.float32))
    y = torch.from_numpy(np.stack(tgts).astype(np.float32))
    return x, y


# --- training -------------------------------------------------------------

def _resolve_init(init, model_config):
    if init is None:
        return build(model_config or ModelConfig())
    if isinstance(init, (str, Path)):
        init = load_checkpoint(init)
    if isinstance(init, Checkpoint):
        init = init.model
    if not isinstance(init, UNet):
        raise TypeError("init must be None, a UNet, a Checkpoint or a checkpoint path")
    return copy.deepcopy(init)


def run_phase(init, train_manifest: Manifest, config: TrainConfig, phase: str,
              model_config: ModelConfig | None = None, log_path=None) -> Checkpoint:
    """Train for ``config.epochs`` epochs and return the final checkpoint.

    ``init`` is None (fresh network from ``model_config``), a model, a
    checkpoint or a checkpoint path; it is never modified in place. One JSON
    line per epoch is appended to ``log_path`` when given.
    """
    if phase not in PHASES:
        raise ValueError(f"phase must be one of {PHASES}")
    if len(train_manifest) == 0:
        raise EmptyDataset("training manifest has no samples")
    config.validate()
    model = _resolve_init(init, model_config)
    size = model.config.input_size

    data = prepare(train_manifest, size)
    n = len(data)
    n_hold = int(math.floor(config.holdout_fraction * n)) if n >= 2 else 0
    n_hold = min(n_hold, n - 1)
    order = np.random.default_rng(derive_seed(config.seed, "holdout")).permutation(n)
    hold = [data[i] for i in sorted(order[:n_hold])]
    train = [data[i] for i in sorted(order[n_hold:])]

    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate,
                           weight_decay=config.weight_decay)
    log_fh = open(log_path, "a", encoding="utf-8") if log_path else None
    history = []
    try:
        for epoch in range(1, config.epochs + 1):
            model.train()
            perm = np.random.default_rng(derive_seed(config.seed, phase, "order", epoch)).permutation(len(train))
            total, seen = 0.0, 0
            for b0 in range(0, len(train), config.batch_size):
                idx = perm[b0:b0 + config.batch_size]
                x, y = _batch([train[i] for i in idx], size, config, epoch,
                              seed_keys=(config.seed, phase, "aug", epoch, b0))
                opt.zero_grad()
                loss = bce_loss(model(x), y)
                loss.backward()
                opt.step()
                total += loss.item() * len(idx)
                seen += len(idx)
            record = {
                "epoch": epoch,
                "phase": phase,
                "sigma": sigma_at(config.sigma_schedule, epoch),
                "train_loss": total / seen,
                "holdout_loss": _eval_loss(model, hold, size, config, epoch),
            }
            history.append(record)
            log.info("%s epoch %d/%d sigma=%.2f train=%.5f holdout=%s", phase, epoch,
                     config.epochs, record["sigma"], record["train_loss"], record["holdout_loss"])
            if log_fh:
                log_fh.write(json.dumps(record) + "\n")
                log_fh.flush()
    finally:
        if log_fh:
            log_fh.close()
    model.eval()
    return Checkpoint(model=model, train_config=config.to_dict(), epoch=config.epochs,
                      phase=phase, seed=config.seed, history=history)


@torch.no_grad()
def _eval_loss(model, items, size, config, epoch):
    if not items:
        return None
    model.eval()
    total = 0.0
    for b0 in range(0, len(items), config.batch_size):
        chunk = items[b0:b0 + config.batch_size]
        x, y = _batch(chunk, size, config, epoch)
        total += float(bce_loss(model(x), y)) * len(chunk)
    return total / len(items)


# --- inference ------------------------------------------------------------

@torch.no_grad()
def predict_heatmaps(model: UNet, images) -> np.ndarray:
    """Heatmaps (B, K, S, S) for preprocessed [-1, 1] images (B, S, S)."""
    model.eval()
    x = torch.from_numpy(np.asarray(images, dtype=np.float32)[:, None])
    return model(x).numpy().astype(np.float64)


def predict(checkpoint, manifest: Manifest, subpixel: bool = True, batch_size: int = 8,
            num_keypoints: int = 6) -> Predictions:
    """Keypoints and confidences for every sample, in stored-image coordinates."""
    name = str(checkpoint) if isinstance(checkpoint, (str, Path)) else ""
    if isinstance(checkpoint, (str, Path)):
        checkpoint = load_checkpoint(checkpoint)
    model = checkpoint.model if isinstance(checkpoint, Checkpoint) else checkpoint
    if model.config.num_keypoints != num_keypoints:
        raise CheckpointMismatch(
            f"checkpoint predicts {model.config.num_keypoints} keypoints, "
            f"manifest expects {num_keypoints}")
    size = model.config.input_size
    data = prepare(manifest, size, with_keypoints=False)
    out = []
    for b0 in range(0, len(data), batch_size):
        chunk = data[b0:b0 + batch_size]
        maps = predict_heatmaps(model, [d.image for d in chunk])
        for k, item in enumerate(chunk):
            kps, conf = heatmap.decode(maps[k], subpixel=subpixel)
            sample = manifest.samples[b0 + k]
            out.append(Prediction(sample.id, item.transform.apply_inverse(kps), conf))
    return Predictions(predictions=out, checkpoint=name)
