"""Procedural SPR joint cross-section phantoms with analytic keypoints.

A phantom is a rivet (flat head plus a tubular shank whose legs flare outward)
driven through a two-sheet stack. Six keypoints are placed on geometric corners:

    K1  top-right corner of the rivet head
    K2  top-sheet surface directly beside K1
    K3  outer tip of the left flared leg
    K4  left shank wall at the sheet interface (pierced top-sheet edge)
    K5  outer tip of the right flared leg
    K6  bottom-sheet underside directly below K5

so that ``K2.y - K1.y``, ``|K4.x - K3.x|`` and ``K6.y - K5.y`` are the head
offset, interlock and bottom remnant of the generating config, in pixels.

Coordinates: x is the column, y the row (downward), origin at the centre of the
top-left pixel.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import GeometryOverflow

log = logging.getLogger(__name__)

NUM_KEYPOINTS = 6
SHEET_THICKNESSES_MM = (1.0, 1.2, 1.5, 1.6, 1.8, 2.0, 2.2, 2.5)
DEFAULT_PITCH_MM = 0.05
MIN_MARGIN_PX = 8
ROI_DILATION_PX = 10

# Declared sampling ranges (inclusive) for every continuous config field.
RANGES = {
    "head_offset_mm": (-0.3, 0.3),
    "interlock_mm": (0.0, 0.5),
    "bottom_remnant_mm": (0.2, 1.0),
    "head_radius_mm": (2.0, 2.8),
    "shank_radius_mm": (1.2, 1.7),
    "head_thickness_mm": (0.4, 0.6),
    "shank_wall_mm": (0.35, 0.5),
    "rivet_level": (0.75, 0.95),
    "sheet_level": (0.40, 0.60),
    "background_level": (0.05, 0.20),
}
# the rivet tip must stay this far below the sheet interface
_MIN_PENETRATION_MM = 0.5
_COUPON_MARGIN_MM = 1.0


def derive_seed(*keys) -> int:
    """Stable 63-bit seed from integer/str keys (independent of call order)."""
    entropy = []
    for k in keys:
        if isinstance(k, str):
            entropy.extend(k.encode("utf-8"))
        else:
            entropy.append(int(k))
    state = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 31 ^ int(state[1])


@dataclass(frozen=True)
class JointConfig:
    config_id: str
    top_thickness_mm: float
    bottom_thickness_mm: float
    head_offset_mm: float
    interlock_mm: float
    bottom_remnant_mm: float
    head_radius_mm: float
    shank_radius_mm: float
    material_levels: tuple = (0.85, 0.5, 0.1)  # rivet, sheets, background
    pixel_pitch_mm: float = DEFAULT_PITCH_MM
    head_thickness_mm: float = 0.5
    shank_wall_mm: float = 0.4

    def validate(self) -> None:
        if not 0 < self.bottom_remnant_mm < self.bottom_thickness_mm:
            raise ValueError("need 0 < bottom_remnant_mm < bottom_thickness_mm")
        if self.interlock_mm < 0:
            raise ValueError("interlock_mm must be nonnegative")
        if not self.head_radius_mm > self.shank_radius_mm > 0:
            raise ValueError("need head_radius_mm > shank_radius_mm > 0")
        if not 0 < self.shank_wall_mm < self.shank_radius_mm:
            raise ValueError("need 0 < shank_wall_mm < shank_radius_mm")
        if self.head_thickness_mm - self.head_offset_mm >= self.top_thickness_mm:
            raise ValueError("rivet head sinks through the top sheet")
        if self.pixel_pitch_mm <= 0:
            raise ValueError("pixel_pitch_mm must be positive")
        lv = self.material_levels
        if len(lv) != 3 or not all(0.0 <= v <= 1.0 for v in lv):
            raise ValueError("material_levels must be three values in [0, 1]")
        gaps = (abs(lv[0] - lv[1]), abs(lv[0] - lv[2]), abs(lv[1] - lv[2]))
        if min(gaps) < 0.1:
            raise ValueError("material levels must differ by at least 0.1")

    @property
    def head_radius_px(self) -> float:
        return self.head_radius_mm / self.pixel_pitch_mm


@dataclass(frozen=True)
class NoiseParams:
    """Corruption strengths for the μCT-like domain. All zero means identity."""

    additive_noise_std: float = 0.0
    speckle_std: float = 0.0
    bias_field_amplitude: float = 0.0
    bias_field_scale: float = 80.0  # px, wavelength of the smooth field
    streak_count: int = 0
    streak_amplitude: float = 0.0
    contrast_jitter: float = 0.0
    blur_sigma_px: float = 0.0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ValueError(f"{name} must be nonnegative")


NOISY_DEFAULT = NoiseParams(
    additive_noise_std=0.07,
    speckle_std=0.08,
    bias_field_amplitude=0.25,
    bias_field_scale=60.0,
    streak_count=2,
    streak_amplitude=0.2,
    contrast_jitter=0.2,
    blur_sigma_px=1.0,
)


def sample_config(seed: int, config_id: str | None = None,
                  pixel_pitch_mm: float = DEFAULT_PITCH_MM) -> JointConfig:
    rng = np.random.default_rng(seed)
    r = RANGES
    top = float(rng.choice(SHEET_THICKNESSES_MM))
    bottom = float(rng.choice(SHEET_THICKNESSES_MM))
    offset = rng.uniform(*r["head_offset_mm"])
    interlock = rng.uniform(*r["interlock_mm"])
    lo, hi = r["bottom_remnant_mm"]
    remnant = rng.uniform(lo, min(hi, bottom - _MIN_PENETRATION_MM))
    head_r = rng.uniform(*r["head_radius_mm"])
    shank_r = rng.uniform(*r["shank_radius_mm"])
    head_t = rng.uniform(*r["head_thickness_mm"])
    wall = rng.uniform(*r["shank_wall_mm"])
    levels = (rng.uniform(*r["rivet_level"]), rng.uniform(*r["sheet_level"]),
              rng.uniform(*r["background_level"]))
    cfg = JointConfig(
        config_id=config_id if config_id is not None else f"cfg-{seed}",
        top_thickness_mm=top,
        bottom_thickness_mm=bottom,
        head_offset_mm=float(offset),
        interlock_mm=float(interlock),
        bottom_remnant_mm=float(remnant),
        head_radius_mm=float(head_r),
        shank_radius_mm=float(shank_r),
        material_levels=tuple(float(v) for v in levels),
        pixel_pitch_mm=pixel_pitch_mm,
        head_thickness_mm=float(head_t),
        shank_wall_mm=float(wall),
    )
    cfg.validate()
    return cfg


@dataclass
class _Layout:
    keypoints: np.ndarray
    bbox: tuple  # x0, y0, x1, y1 in px (inclusive extents of the joint)
    rivet: np.ndarray
    stack: np.ndarray
    pocket: np.ndarray | None
    seam: np.ndarray


def _layout(cfg: JointConfig, size: int, offset=(0.0, 0.0)) -> _Layout:
    s = 1.0 / cfg.pixel_pitch_mm
    head_r = cfg.head_radius_mm * s
    shank_r = cfg.shank_radius_mm * s
    tip_r = shank_r + cfg.interlock_mm * s
    wall = cfg.shank_wall_mm * s
    half_w = max(head_r, tip_r) + _COUPON_MARGIN_MM * s

    # vertical extents relative to the top-sheet surface at 0
    head_top = -cfg.head_offset_mm * s
    interface = cfg.top_thickness_mm * s
    underside = interface + cfg.bottom_thickness_mm * s
    top_extent = min(head_top, 0.0)

    cx = (size - 1) / 2.0 + offset[0]
    cy = (size - 1) / 2.0 + offset[1]
    y0 = cy - (top_extent + underside) / 2.0

    surf = y0
    y_head = y0 + head_top
    y_head_bottom = y_head + cfg.head_thickness_mm * s
    y_if = y0 + interface
    y_bot = y0 + underside
    y_tip = y_bot - cfg.bottom_remnant_mm * s
    y_flare = y_if + 0.25 * (y_tip - y_if)

    rivet = np.array([
        (cx - head_r, y_head), (cx + head_r, y_head),
        (cx + head_r, y_head_bottom), (cx + shank_r, y_head_bottom),
        (cx + shank_r, y_flare), (cx + tip_r, y_tip),
        (cx + tip_r - wall, y_tip), (cx + shank_r - wall, y_flare),
        (cx + shank_r - wall, y_head_bottom), (cx - shank_r + wall, y_head_bottom),
        (cx - shank_r + wall, y_flare), (cx - tip_r + wall, y_tip),
        (cx - tip_r, y_tip), (cx - shank_r, y_flare),
        (cx - shank_r, y_head_bottom), (cx - head_r, y_head_bottom),
    ])
    stack = _rect(cx - half_w, surf, cx + half_w, y_bot)
    pocket = _rect(cx - head_r, surf - 2.0, cx + head_r, y_head) if y_head > surf else None
    # 2 px gap between the sheets; K4 is only locatable where it meets the shank
    seam = _rect(cx - half_w, y_if - 1.0, cx + half_w, y_if + 1.0)

    kps = np.array([
        (cx + head_r, y_head),
        (cx + head_r, surf),
        (cx - tip_r, y_tip),
        (cx - shank_r, y_if),
        (cx + tip_r, y_tip),
        (cx + tip_r, y_bot),
    ], dtype=np.float64)
    bbox = (cx - half_w, min(y_head, surf), cx + half_w, y_bot)
    return _Layout(kps, bbox, rivet, stack, pocket, seam)


def _rect(x0, y0, x1, y1) -> np.ndarray:
    return np.array([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], dtype=np.float64)


def polygon_sdf(poly: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Signed Euclidean distance to a simple polygon; negative inside."""
    px = xs[..., None]
    py = ys[..., None]
    a = poly
    b = np.roll(poly, -1, axis=0)
    ex = b[:, 0] - a[:, 0]
    ey = b[:, 1] - a[:, 1]
    wx = px - a[:, 0]
    wy = py - a[:, 1]
    t = np.clip((wx * ex + wy * ey) / (ex * ex + ey * ey), 0.0, 1.0)
    dx = wx - t * ex
    dy = wy - t * ey
    dist = np.sqrt(np.min(dx * dx + dy * dy, axis=-1))
    crosses = (a[:, 1] > py) != (b[:, 1] > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = a[:, 0] + (py - a[:, 1]) * ex / ey
    inside = np.sum(crosses & (px < x_cross), axis=-1) % 2 == 1
    return np.where(inside, -dist, dist)


def _coverage(poly, size):
    """Area coverage with a 1-px linear ramp across the boundary.

    Only the polygon's bounding box (plus the ramp) is evaluated; every pixel
    outside it has coverage exactly 0.
    """
    out = np.zeros((size, size))
    c0 = max(int(np.floor(poly[:, 0].min())) - 1, 0)
    r0 = max(int(np.floor(poly[:, 1].min())) - 1, 0)
    c1 = min(int(np.ceil(poly[:, 0].max())) + 2, size)
    r1 = min(int(np.ceil(poly[:, 1].max())) + 2, size)
    if c1 <= c0 or r1 <= r0:
        return out
    ys, xs = np.mgrid[r0:r1, c0:c1].astype(np.float64)
    out[r0:r1, c0:c1] = np.clip(0.5 - polygon_sdf(poly, xs, ys), 0.0, 1.0)
    return out


def _check_fit(bbox, size):
    x0, y0, x1, y1 = bbox
    m = MIN_MARGIN_PX
    if x0 < m or y0 < m or x1 > size - 1 - m or y1 > size - 1 - m:
        raise GeometryOverflow(
            f"joint extent ({x0:.1f}, {y0:.1f})-({x1:.1f}, {y1:.1f}) does not fit a "
            f"{size}px frame with {m}px margin")


def render(config: JointConfig, size: int = 224, offset=(0.0, 0.0)):
    """Render a clean phantom into a ``size`` x ``size`` frame.

    ``offset`` shifts the joint centre (in pixels) from the frame centre.
    Returns ``(image, keypoints)`` with image values in [0, 1] and keypoints
    as a (6, 2) array of (x, y).
    """
    if size < 64:
        raise ValueError("size must be at least 64")
    config.validate()
    lay = _layout(config, size, offset)
    _check_fit(lay.bbox, size)

    rivet_lv, sheet_lv, bg_lv = config.material_levels

    sheet = _coverage(lay.stack, size)
    if lay.pocket is not None:
        sheet *= 1.0 - _coverage(lay.pocket, size)
    seam = _coverage(lay.seam, size) * sheet
    rivet = _coverage(lay.rivet, size)

    img = np.full((size, size), bg_lv)
    img += sheet * (sheet_lv - bg_lv)
    img -= 0.8 * seam * (sheet_lv - bg_lv)
    img += rivet * (rivet_lv - img)
    return np.clip(img, 0.0, 1.0), lay.keypoints.copy()


def joint_bbox(config: JointConfig, size: int = 224, offset=(0.0, 0.0)):
    """Tight (x0, y0, x1, y1) extent of the rendered joint in pixels."""
    return _layout(config, size, offset).bbox


def corrupt(image: np.ndarray, params: NoiseParams, seed: int) -> np.ndarray:
    """Apply μCT-like degradations. Pixel values change, geometry does not."""
    out = np.array(image, dtype=np.float64, copy=True)
    h, w = out.shape
    # one child stream per stage so each stage's draws are independent of the others
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(6)]

    if params.contrast_jitter > 0:
        gain = 1.0 + streams[0].uniform(-params.contrast_jitter, params.contrast_jitter)
        mid = streams[0].uniform(0.35, 0.65)
        out = mid + gain * (out - mid)

    if params.bias_field_amplitude > 0:
        rng = streams[1]
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        field_ = np.zeros_like(out)
        for _ in range(3):
            theta = rng.uniform(0, 2 * np.pi)
            wavelength = params.bias_field_scale * rng.uniform(0.75, 1.5)
            phase = rng.uniform(0, 2 * np.pi)
            proj = xs * np.cos(theta) + ys * np.sin(theta)
            field_ += np.cos(2 * np.pi * proj / wavelength + phase)
        out += params.bias_field_amplitude * field_ / 3.0

    if params.streak_count > 0 and params.streak_amplitude > 0:
        rng = streams[2]
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        for _ in range(params.streak_count):
            theta = rng.uniform(0, np.pi)
            px, py = rng.uniform(0, w - 1), rng.uniform(0, h - 1)
            width = rng.uniform(0.7, 2.0)
            sign = rng.choice((-1.0, 1.0))
            amp = params.streak_amplitude * rng.uniform(0.5, 1.0)
            dist = (xs - px) * np.sin(theta) - (ys - py) * np.cos(theta)
            out += sign * amp * np.exp(-(dist / width) ** 2)

    if params.blur_sigma_px > 0:
        out = ndimage.gaussian_filter(out, params.blur_sigma_px, mode="nearest")

    if params.speckle_std > 0:
        out *= 1.0 + streams[3].normal(0.0, params.speckle_std, out.shape)

    if params.additive_noise_std > 0:
        out += streams[4].normal(0.0, params.additive_noise_std, out.shape)

    np.clip(out, 0.0, 1.0, out=out)
    return out


def generate_dataset(count: int, domain: str, seed: int, out_dir, size: int = 224,
                     per_config: int = 4, noise: NoiseParams | None = None,
                     pixel_pitch_mm: float = DEFAULT_PITCH_MM):
    """Render ``count`` phantoms to ``out_dir/images`` and write ``out_dir/manifest.json``.

    Sample ``i`` belongs to configuration ``i // per_config``; every random
    quantity is seeded from ``(seed, index)`` so a shorter run is a prefix of a
    longer one. Stored images are the joint's bounding box dilated by 10 px.
    """
    from .dataio import Manifest, Sample, save_png, write_manifest

    if count < 1:
        raise ValueError("count must be >= 1")
    if domain not in ("clean", "noisy"):
        raise ValueError("domain must be 'clean' or 'noisy'")
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)

    samples = []
    for i in range(count):
        image, kps, cfg = generate_sample(i, domain, seed, size=size, per_config=per_config,
                                          noise=noise, pixel_pitch_mm=pixel_pitch_mm)
        sid = f"{domain}-{i:06d}"
        rel = f"images/{sid}.png"
        save_png(out_dir / rel, image)
        samples.append(Sample(
            id=sid, image_path=rel, config_id=cfg.config_id, domain=domain,
            keypoints=kps, pixel_pitch_mm=cfg.pixel_pitch_mm,
            head_radius_px=cfg.head_radius_px,
        ))
        log.debug("rendered %s (%s)", sid, cfg.config_id)
    manifest = Manifest(samples=samples, root=out_dir)
    write_manifest(manifest, out_dir / "manifest.json")
    return manifest


def generate_sample(index: int, domain: str, seed: int, size: int = 224, per_config: int = 4,
                    noise: NoiseParams | None = None, pixel_pitch_mm: float = DEFAULT_PITCH_MM,
                    max_tries: int = 10):
    """One cropped sample: ``(image, keypoints, config)``. Pure in its arguments.

    Clean samples are never corrupted; noisy ones use ``noise`` or
    :data:`NOISY_DEFAULT`.
    """
    if domain == "clean":
        noise = None
    elif domain == "noisy":
        noise = NOISY_DEFAULT if noise is None else noise
    else:
        raise ValueError("domain must be 'clean' or 'noisy'")
    cfg_index = index // per_config
    cfg = sample_config(derive_seed(seed, "config", cfg_index),
                        config_id=f"cfg-{seed}-{cfg_index:04d}",
                        pixel_pitch_mm=pixel_pitch_mm)
    last_err = None
    for attempt in range(max_tries):
        rng = np.random.default_rng(derive_seed(seed, "sample", index, attempt))
        offset = rng.uniform(-4.0, 4.0, size=2)
        try:
            image, kps = render(cfg, size, offset=offset)
        except GeometryOverflow as err:
            last_err = err
            continue
        x0, y0, x1, y1 = joint_bbox(cfg, size, offset)
        cx0 = max(int(np.floor(x0 - ROI_DILATION_PX)), 0)
        cy0 = max(int(np.floor(y0 - ROI_DILATION_PX)), 0)
        cx1 = min(int(np.ceil(x1 + ROI_DILATION_PX)), size - 1)
        cy1 = min(int(np.ceil(y1 + ROI_DILATION_PX)), size - 1)
        image = image[cy0:cy1 + 1, cx0:cx1 + 1]
        kps = kps - np.array([cx0, cy0], dtype=np.float64)
        if noise is not None:
            image = corrupt(image, noise, int(rng.integers(2**63)))
        return image, kps, cfg
    raise GeometryOverflow(f"sample {index}: no placement fits after {max_tries} tries") from last_err
