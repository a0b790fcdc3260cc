"""Regenerate the registered test pairs in this directory.

Needs scikit-image (for its bundled sample photographs). Each pair is
256x256, 8-bit:

* ``camera``: complementary defocus, left half blurred in ``_ir``,
  right half blurred in ``_vis``.
* ``astronaut`` / ``coffee``: an infrared-like image (smoothed, low-contrast
  scene plus four hot elliptical targets) and a visible-like image (sharp
  scene, targets darkened).
"""

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter
from skimage import color, data, transform

SIZE = 256


def _prep(img):
    img = np.asarray(img, dtype=float)
    if img.ndim == 3:
        img = color.rgb2gray(img[..., :3] / 255.0) * 255.0
    img = transform.resize(img, (SIZE, SIZE), anti_aliasing=True, preserve_range=True)
    return np.clip(img, 0, 255)


def focus_pair(img):
    base = _prep(img)
    blur = gaussian_filter(base, 3.0, mode="wrap")
    mask = np.zeros_like(base)
    mask[:, : SIZE // 2] = 1
    mask = gaussian_filter(mask, 4, mode="wrap")
    return mask * blur + (1 - mask) * base, mask * base + (1 - mask) * blur


def thermal_pair(img, seed):
    base = _prep(img)
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[:SIZE, :SIZE]
    hot = np.zeros_like(base)
    for _ in range(4):
        cy, cx = rng.integers(30, SIZE - 30, 2)
        hot += np.exp(-(((yy - cy) / 10.0) ** 2 + ((xx - cx) / 6.0) ** 2))
    hot = np.clip(hot, 0, 1)
    ir = 0.35 * gaussian_filter(base, 2.0, mode="wrap") + 200 * hot + 20
    vis = 0.8 * base * (1 - 0.6 * hot) + 10
    return np.clip(ir, 0, 255), np.clip(vis, 0, 255)


def main():
    pairs = {
        "camera": focus_pair(data.camera()),
        "astronaut": thermal_pair(data.astronaut(), 1),
        "coffee": thermal_pair(data.coffee(), 2),
    }
    for stem, (ir, vis) in pairs.items():
        for tag, arr in (("ir", ir), ("vis", vis)):
            Image.fromarray(np.round(arr).astype(np.uint8)).save(f"{stem}_{tag}.png")


if __name__ == "__main__":
    main()
