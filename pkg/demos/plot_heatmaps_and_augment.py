"""
Heatmap targets and augmentation
================================

Encode keypoints as Gaussian maps, warp an image with a random augmentation,
and decode the warped maps back to coordinates.
"""
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from rivetkey import augment
from rivetkey.dataio import preprocess
from rivetkey.heatmap import decode, encode
from rivetkey.phantom import generate_sample

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(parents=True, exist_ok=True)

img, kps, _ = generate_sample(0, "clean", seed=3)
x, k, tf = preprocess(img, kps)          # 224 x 224, keypoints follow
x = x * 2.0 - 1.0                        # network input range

###############################################################################
# Random draw within the training ranges; retry if a keypoint would leave
# the frame.
for attempt in range(10):
    params = augment.sample_params(attempt)
    try:
        xa, ka = augment.apply(x, k, params)
        break
    except augment.KeypointEjected:
        continue
print(params)

###############################################################################
# Targets are encoded from the transformed keypoints, never warped.
for sigma in (3.0, 1.5):
    maps = encode(ka, 224, 224, sigma)
    dec, conf = decode(maps)
    print(f"sigma {sigma}: worst round-trip error {np.abs(dec - ka).max():.3f} px")

fig, axes = plt.subplots(1, 3, figsize=(12, 4))
axes[0].imshow(x, cmap="gray")
axes[0].scatter(k[:, 0], k[:, 1], c="r", s=10)
axes[0].set_title("preprocessed")
axes[1].imshow(xa, cmap="gray")
axes[1].scatter(ka[:, 0], ka[:, 1], c="r", s=10)
axes[1].set_title("augmented")
axes[2].imshow(encode(ka, 224, 224, 3.0).max(axis=0), cmap="inferno")
axes[2].set_title("targets, sigma 3")
for ax in axes:
    ax.set_axis_off()
fig.savefig(out / "augment.png", dpi=100, bbox_inches="tight")
