"""Deterministic synthetic test images with ground-truth label maps."""

from __future__ import annotations

import numpy as np

from hierseg.imagecore import Colorspace, from_array


def make_blocks(size: int = 100, means=(50.0, 100.0, 150.0, 200.0),
                sigma: float = 10.0, seed: int = 0):
    """Four constant quadrants plus Gaussian noise, clipped to [0, 255].

    Returns (image, ground-truth label map) with quadrant labels
    0 (top-left), 1 (top-right), 2 (bottom-left), 3 (bottom-right).
    """
    if len(means) != 4:
        raise ValueError("blocks need exactly 4 means")
    rng = np.random.default_rng(seed)
    half = size // 2
    gt = np.zeros((size, size), dtype=np.int32)
    gt[:half, half:] = 1
    gt[half:, :half] = 2
    gt[half:, half:] = 3
    img = np.asarray(means, dtype=np.float64)[gt]
    img = np.clip(img + rng.normal(0.0, sigma, img.shape), 0.0, 255.0)
    return from_array(np.round(img), Colorspace.GRAY), gt


def make_blobs(count: int = 13, width: int = 320, height: int = 240,
               background: float = 200.0, foreground: float = 60.0,
               sigma: float = 10.0, seed: int = 0,
               radius_range: tuple[int, int] | None = None):
    """Dark disks over a light background plus Gaussian noise.

    Disk centers are rejection-sampled so that disks stay disjoint and
    inside the frame; the default radius range scales with the canvas.
    Returns (image, label map) with background label 0 and blob labels
    1..count.
    """
    rng = np.random.default_rng(seed)
    if radius_range is None:
        side = min(width, height)
        radius_range = (max(3, side // 20), max(5, side // 11))
    rmin, rmax = radius_range
    placed = []
    attempts = 0
    while len(placed) < count:
        attempts += 1
        if attempts > 20000:
            raise ValueError(f"cannot place {count} disjoint blobs in {width}x{height}")
        r = rng.integers(rmin, rmax + 1)
        cy = rng.integers(r + 2, height - r - 2)
        cx = rng.integers(r + 2, width - r - 2)
        if all((cy - y) ** 2 + (cx - x) ** 2 > (r + rr + 3) ** 2 for y, x, rr in placed):
            placed.append((int(cy), int(cx), int(r)))
    ys, xs = np.mgrid[0:height, 0:width]
    gt = np.zeros((height, width), dtype=np.int32)
    for k, (cy, cx, r) in enumerate(placed, start=1):
        gt[(ys - cy) ** 2 + (xs - cx) ** 2 <= r * r] = k
    img = np.full((height, width), background)
    img[gt > 0] = foreground
    img = np.clip(img + rng.normal(0.0, sigma, img.shape), 0.0, 255.0)
    return from_array(np.round(img), Colorspace.GRAY), gt
