"""Manifest and predictions codecs, config-exclusive splitting and the
crop / pad-to-square / resize preprocessing with its coordinate transform."""
from __future__ import annotations

import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import InsufficientGroups, KeypointOutsideRoi, SchemaError

MANIFEST_VERSION = 1
PREDICTIONS_VERSION = 1
NUM_KEYPOINTS = 6
INPUT_SIZE = 224

_SAMPLE_FIELDS = {"id", "image", "config_id", "domain", "keypoints",
                  "pixel_pitch_mm", "head_radius_px"}
_DOMAINS = ("clean", "noisy")


@dataclass
class Sample:
    id: str
    image_path: str
    config_id: str
    domain: str
    keypoints: np.ndarray
    pixel_pitch_mm: float
    head_radius_px: float

    def __post_init__(self):
        self.keypoints = np.asarray(self.keypoints, dtype=np.float64)


@dataclass
class Manifest:
    samples: list
    version: int = MANIFEST_VERSION
    # directory relative image paths are resolved against; not serialized
    root: Path | None = field(default=None, compare=False)

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def by_id(self) -> dict:
        return {s.id: s for s in self.samples}

    def image_file(self, sample: Sample) -> Path:
        p = Path(sample.image_path)
        if p.is_absolute() or self.root is None:
            return p
        return self.root / p

    def subset(self, samples) -> "Manifest":
        return Manifest(samples=list(samples), version=self.version, root=self.root)


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path, obj) -> None:
    text = json.dumps(obj, indent=1, ensure_ascii=False) + "\n"
    atomic_write_bytes(path, text.encode("utf-8"))


def save_png(path, image: np.ndarray) -> None:
    """Write a [0, 1] float image as 16-bit grayscale PNG."""
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    raw = np.round(img * 65535.0).astype(np.uint16)
    buf = io.BytesIO()
    Image.fromarray(raw).save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


def load_png(path) -> np.ndarray:
    with Image.open(path) as im:
        raw = np.asarray(im)
    if raw.ndim != 2:
        raise SchemaError(f"{path}: expected a single-channel image")
    scale = 65535.0 if raw.dtype != np.uint8 else 255.0
    return raw.astype(np.float64) / scale


# --- manifest codec -------------------------------------------------------

def _parse_keypoints(value, where, n=NUM_KEYPOINTS) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError) as err:
        raise SchemaError(f"{where}: keypoints are not numeric") from err
    if arr.shape != (n, 2):
        raise SchemaError(f"{where}: expected {n} keypoints as [x, y] pairs, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise SchemaError(f"{where}: keypoints must be finite")
    return arr


def _sample_from_dict(d, index) -> Sample:
    where = f"samples[{index}]"
    if not isinstance(d, dict):
        raise SchemaError(f"{where}: not an object")
    missing = _SAMPLE_FIELDS - d.keys()
    if missing:
        raise SchemaError(f"{where}: missing field(s) {sorted(missing)}")
    unknown = d.keys() - _SAMPLE_FIELDS
    if unknown:
        raise SchemaError(f"{where}: unknown field(s) {sorted(unknown)}")
    if d["domain"] not in _DOMAINS:
        raise SchemaError(f"{where}: domain must be one of {_DOMAINS}")
    for key in ("id", "image", "config_id"):
        if not isinstance(d[key], str):
            raise SchemaError(f"{where}: {key} must be a string")
    try:
        pitch = float(d["pixel_pitch_mm"])
        radius = float(d["head_radius_px"])
    except (TypeError, ValueError) as err:
        raise SchemaError(f"{where}: pitch and head radius must be numbers") from err
    if not pitch > 0:
        raise SchemaError(f"{where}: pixel_pitch_mm must be positive")
    if not radius > 0:
        raise SchemaError(f"{where}: head_radius_px must be positive")
    return Sample(
        id=d["id"], image_path=d["image"], config_id=d["config_id"], domain=d["domain"],
        keypoints=_parse_keypoints(d["keypoints"], where),
        pixel_pitch_mm=pitch, head_radius_px=radius,
    )


def manifest_from_dict(obj, root=None) -> Manifest:
    if not isinstance(obj, dict):
        raise SchemaError("manifest must be a JSON object")
    if set(obj.keys()) != {"version", "samples"}:
        raise SchemaError(f"manifest must have exactly 'version' and 'samples', got {sorted(obj)}")
    if obj["version"] != MANIFEST_VERSION:
        raise SchemaError(f"unsupported manifest version {obj['version']!r}")
    if not isinstance(obj["samples"], list):
        raise SchemaError("'samples' must be a list")
    samples = [_sample_from_dict(d, i) for i, d in enumerate(obj["samples"])]
    seen = set()
    for s in samples:
        if s.id in seen:
            raise SchemaError(f"duplicate sample id {s.id!r}")
        seen.add(s.id)
    return Manifest(samples=samples, version=MANIFEST_VERSION, root=root)


def manifest_to_dict(manifest: Manifest, dest_dir=None) -> dict:
    """Serializable form. When ``dest_dir`` is given, relative image paths are
    rebased so they still resolve from the new location."""
    out = []
    for s in manifest.samples:
        image = s.image_path
        if dest_dir is not None and manifest.root is not None and not Path(image).is_absolute():
            src = Path(manifest.root) / image
            image = Path(os.path.relpath(src.resolve(), Path(dest_dir).resolve())).as_posix()
        out.append({
            "id": s.id,
            "image": image,
            "config_id": s.config_id,
            "domain": s.domain,
            "keypoints": [[float(x), float(y)] for x, y in s.keypoints],
            "pixel_pitch_mm": float(s.pixel_pitch_mm),
            "head_radius_px": float(s.head_radius_px),
        })
    return {"version": manifest.version, "samples": out}


def read_manifest(path) -> Manifest:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise SchemaError(f"{path}: invalid JSON ({err})") from err
    return manifest_from_dict(obj, root=path.parent)


def write_manifest(manifest: Manifest, path) -> None:
    path = Path(path)
    # validate through the reader so nothing unreadable is ever written
    obj = manifest_to_dict(manifest, dest_dir=path.parent)
    manifest_from_dict(obj)
    atomic_write_json(path, obj)


# --- splitting ------------------------------------------------------------

def split_by_config(manifest: Manifest, ratio: float = 0.8, seed: int = 0):
    """Partition samples into (train, test) so that no config_id is shared.

    The number of training configurations is the integer closest to
    ``ratio * n_configs`` while leaving both sides nonempty.
    """
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie strictly between 0 and 1")
    groups = list(dict.fromkeys(s.config_id for s in manifest.samples))
    if len(groups) < 2:
        raise InsufficientGroups(f"need at least 2 distinct config_ids, got {len(groups)}")
    n_train = int(math.floor(ratio * len(groups) + 0.5))
    n_train = min(max(n_train, 1), len(groups) - 1)
    order = np.random.default_rng(seed).permutation(len(groups))
    train_ids = {groups[i] for i in order[:n_train]}
    train = [s for s in manifest.samples if s.config_id in train_ids]
    test = [s for s in manifest.samples if s.config_id not in train_ids]
    return manifest.subset(train), manifest.subset(test)


# --- preprocessing --------------------------------------------------------

@dataclass(frozen=True)
class AffineTransform:
    """Uniform scale plus translation: ``out = scale * in + (tx, ty)``."""

    scale: float
    tx: float
    ty: float

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return p * self.scale + np.array([self.tx, self.ty])

    def inverse(self) -> "AffineTransform":
        return AffineTransform(1.0 / self.scale, -self.tx / self.scale, -self.ty / self.scale)

    def apply_inverse(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return (p - np.array([self.tx, self.ty])) / self.scale

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.scale, 0.0, self.tx],
                         [0.0, self.scale, self.ty],
                         [0.0, 0.0, 1.0]])


def border_mode_intensity(image: np.ndarray, bins: int = 64) -> float:
    """Modal intensity of the outermost pixel ring."""
    img = np.asarray(image, dtype=np.float64)
    ring = np.concatenate([img[0, :], img[-1, :], img[1:-1, 0], img[1:-1, -1]])
    lo, hi = float(ring.min()), float(ring.max())
    if hi - lo < 1e-12:
        return lo
    counts, edges = np.histogram(ring, bins=bins, range=(lo, hi))
    k = int(np.argmax(counts))
    in_bin = ring[(ring >= edges[k]) & (ring <= edges[k + 1])]
    return float(np.median(in_bin))


def preprocess(image: np.ndarray, keypoints=None, roi=None, size: int = INPUT_SIZE):
    """Crop ``roi`` = (x0, y0, width, height), pad the short side symmetrically
    with the background level to a square, then scale uniformly to ``size``.

    Returns ``(image_out, keypoints_out, transform)``; ``keypoints_out`` is None
    when no keypoints are given. ``transform`` maps original-image coordinates
    to output coordinates.
    """
    img = np.asarray(image, dtype=np.float64)
    h_img, w_img = img.shape
    if roi is None:
        roi = (0, 0, w_img, h_img)
    x0, y0, w, h = (int(v) for v in roi)
    if w <= 0 or h <= 0 or x0 < 0 or y0 < 0 or x0 + w > w_img or y0 + h > h_img:
        raise ValueError(f"roi {roi} is not inside the {w_img}x{h_img} image")
    crop = img[y0:y0 + h, x0:x0 + w]

    kps = None
    if keypoints is not None:
        kps = np.asarray(keypoints, dtype=np.float64)
        rel = kps - np.array([x0, y0])
        if np.any(rel < 0) or np.any(rel[:, 0] > w - 1) or np.any(rel[:, 1] > h - 1):
            raise KeypointOutsideRoi("a keypoint lies outside the region of interest")

    side = max(w, h)
    pad_x = (side - w) // 2
    pad_y = (side - h) // 2
    padded = np.full((side, side), border_mode_intensity(crop))
    padded[pad_y:pad_y + h, pad_x:pad_x + w] = crop

    scale = size / side
    if scale < 1.0:
        # anti-alias before decimation; symmetric so geometry is not shifted
        padded = ndimage.gaussian_filter(padded, 0.5 * math.sqrt(1.0 / scale**2 - 1.0),
                                         mode="nearest")
    out = ndimage.affine_transform(padded, np.diag([1.0 / scale, 1.0 / scale]), offset=0.0,
                                   output_shape=(size, size), order=1, mode="nearest")
    transform = AffineTransform(scale, scale * (pad_x - x0), scale * (pad_y - y0))
    kps_out = transform.apply(kps) if kps is not None else None
    return out, kps_out, transform


# --- predictions codec ----------------------------------------------------

@dataclass
class Prediction:
    id: str
    keypoints: np.ndarray
    confidence: np.ndarray

    def __post_init__(self):
        self.keypoints = np.asarray(self.keypoints, dtype=np.float64)
        self.confidence = np.asarray(self.confidence, dtype=np.float64)


@dataclass
class Predictions:
    predictions: list
    checkpoint: str = ""
    version: int = PREDICTIONS_VERSION

    def __len__(self):
        return len(self.predictions)

    def __iter__(self):
        return iter(self.predictions)


def predictions_to_dict(preds: Predictions) -> dict:
    return {
        "version": preds.version,
        "checkpoint": preds.checkpoint,
        "predictions": [
            {"id": p.id,
             "keypoints": [[float(x), float(y)] for x, y in p.keypoints],
             "confidence": [float(c) for c in p.confidence]}
            for p in preds.predictions
        ],
    }


def predictions_from_dict(obj) -> Predictions:
    if not isinstance(obj, dict) or set(obj) != {"version", "checkpoint", "predictions"}:
        raise SchemaError("predictions file must have 'version', 'checkpoint' and 'predictions'")
    if obj["version"] != PREDICTIONS_VERSION:
        raise SchemaError(f"unsupported predictions version {obj['version']!r}")
    out = []
    seen = set()
    for i, d in enumerate(obj["predictions"]):
        where = f"predictions[{i}]"
        if not isinstance(d, dict) or set(d) != {"id", "keypoints", "confidence"}:
            raise SchemaError(f"{where}: expected exactly 'id', 'keypoints', 'confidence'")
        kps = _parse_keypoints(d["keypoints"], where, n=len(d["keypoints"]))
        conf = np.asarray(d["confidence"], dtype=np.float64)
        if conf.shape != (len(kps),):
            raise SchemaError(f"{where}: one confidence per keypoint required")
        if d["id"] in seen:
            raise SchemaError(f"duplicate prediction id {d['id']!r}")
        seen.add(d["id"])
        out.append(Prediction(d["id"], kps, conf))
    return Predictions(predictions=out, checkpoint=str(obj["checkpoint"]))


def read_predictions(path) -> Predictions:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise SchemaError(f"{path}: invalid JSON ({err})") from err
    return predictions_from_dict(obj)


def write_predictions(preds: Predictions, path) -> None:
    atomic_write_json(path, predictions_to_dict(preds))
