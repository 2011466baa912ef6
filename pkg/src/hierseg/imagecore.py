"""Image loading, color conversion and the gradient/contrast fields.

Images are immutable value holders around a float64 (height, width, channels)
array. Gray images have one channel, sRGB and CIELab images have three.
All functions here are pure; the rest of the pipeline treats the returned
arrays as read-only.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError
from scipy.ndimage import gaussian_filter


class Colorspace(enum.Enum):
    GRAY = "gray"
    SRGB = "srgb"
    CIELAB = "cielab"


@dataclass(frozen=True)
class Image:
    """Multi-channel raster with a colorspace tag.

    data is (height, width, channels) float64, row major. GRAY images have
    channels == 1, SRGB/CIELAB have channels == 3.
    """

    width: int
    height: int
    channels: int
    data: np.ndarray = field(repr=False)
    colorspace: Colorspace

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"empty image: {self.width}x{self.height}")
        if self.data.shape != (self.height, self.width, self.channels):
            raise ValueError(
                f"data shape {self.data.shape} does not match "
                f"{self.height}x{self.width}x{self.channels}"
            )
        if self.colorspace is Colorspace.GRAY and self.channels != 1:
            raise ValueError("GRAY images must have a single channel")
        if self.colorspace in (Colorspace.SRGB, Colorspace.CIELAB) and self.channels != 3:
            raise ValueError(f"{self.colorspace.value} images must have 3 channels")

    @property
    def pixel_count(self) -> int:
        return self.width * self.height

    def values(self) -> np.ndarray:
        """Pixel values flattened to (n, channels), row major."""
        return self.data.reshape(self.pixel_count, self.channels)


def from_array(arr: np.ndarray, colorspace: Colorspace | None = None) -> Image:
    """Wrap a (H, W) or (H, W, d) array as an Image."""
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    h, w, d = a.shape
    if colorspace is None:
        colorspace = Colorspace.GRAY if d == 1 else Colorspace.SRGB
    return Image(width=w, height=h, channels=d, data=a, colorspace=colorspace)


def load_image(path) -> Image:
    """Load an 8-bit PNG or binary PPM/PGM file.

    Returns an SRGB image for 3-channel input, GRAY for 1-channel input,
    with samples mapped to [0, 255] floats. Anything else (16-bit input,
    alpha channels, palettes, truncated files) raises OSError with the
    path and the reason.
    """
    try:
        with PILImage.open(path) as im:
            fmt = im.format
            if fmt not in ("PNG", "PPM"):
                raise OSError(f"{path}: unsupported format {fmt!r}, expected PNG or PPM/PGM")
            if im.mode not in ("L", "RGB"):
                raise OSError(
                    f"{path}: unsupported mode {im.mode!r} "
                    "(only 8-bit grayscale or RGB without alpha)"
                )
            arr = np.asarray(im, dtype=np.float64)
    except UnidentifiedImageError as exc:
        raise OSError(f"{path}: not a readable image ({exc})") from exc
    except (OSError, ValueError, SyntaxError) as exc:
        if isinstance(exc, OSError) and str(exc).startswith(str(path)):
            raise
        raise OSError(f"{path}: failed to decode ({exc})") from exc
    return from_array(arr)


# sRGB working space with D65 white point, 2 degree observer.
_SRGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_D65_WHITE = np.array([0.95047, 1.0, 1.08883])


def rgb_to_lab(img: Image) -> Image:
    """Convert an SRGB image (8-bit scale) to CIELab, L in [0, 100]."""
    if img.colorspace is not Colorspace.SRGB:
        raise ValueError(f"rgb_to_lab expects an SRGB image, got {img.colorspace.value}")
    srgb = img.data / 255.0
    linear = np.where(srgb <= 0.04045, srgb / 12.92, ((srgb + 0.055) / 1.055) ** 2.4)
    xyz = linear @ _SRGB_TO_XYZ.T
    t = xyz / _D65_WHITE
    delta = 6.0 / 29.0
    f = np.where(t > delta**3, np.cbrt(t), t / (3.0 * delta**2) + 4.0 / 29.0)
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return Image(img.width, img.height, 3, lab, Colorspace.CIELAB)


def pixel_error(value, mean) -> float:
    """Squared Euclidean distance between a pixel value and a region mean."""
    v = np.asarray(value, dtype=np.float64).ravel()
    m = np.asarray(mean, dtype=np.float64).ravel()
    if v.shape != m.shape:
        raise ValueError(f"arity mismatch: {v.shape} vs {m.shape}")
    d = v - m
    return float(d @ d)


def gradient_magnitude(img: Image, smooth: bool = False) -> np.ndarray:
    """Per-pixel gradient magnitude as a (H, W) scalar field.

    Single channel: |grad I| from central differences (one-sided at the
    borders). Multi channel: square root of the largest eigenvalue of the
    2x2 structure tensor summed over channels. With smooth=True each
    channel is pre-filtered with a Gaussian (sigma 1) first.
    """
    data = img.data
    if smooth:
        data = np.stack(
            [gaussian_filter(data[:, :, c], sigma=1.0) for c in range(img.channels)],
            axis=2,
        )
    jxx = np.zeros((img.height, img.width))
    jyy = np.zeros_like(jxx)
    jxy = np.zeros_like(jxx)
    for c in range(img.channels):
        if img.height > 1:
            gy = np.gradient(data[:, :, c], axis=0)
        else:
            gy = np.zeros((img.height, img.width))
        if img.width > 1:
            gx = np.gradient(data[:, :, c], axis=1)
        else:
            gx = np.zeros((img.height, img.width))
        jxx += gx * gx
        jyy += gy * gy
        jxy += gx * gy
    half_trace = 0.5 * (jxx + jyy)
    root = np.sqrt(np.maximum(0.25 * (jxx - jyy) ** 2 + jxy**2, 0.0))
    lam_max = np.maximum(half_trace + root, 0.0)
    return np.sqrt(lam_max)
