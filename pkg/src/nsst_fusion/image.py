"""Grayscale image container and 8-bit PGM/PNG input/output."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ImageFormatError, IncompatiblePairError, InvalidImageError

__all__ = ["GrayImage", "load_image", "save_image", "check_pair", "to_bytes"]


@dataclass(frozen=True)
class GrayImage:
    """Real-valued intensities on the native 8-bit scale [0, 255].

    ``data`` is stored row-major with shape ``(height, width)`` and is made
    read-only on construction.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise InvalidImageError(f"image must be a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidImageError("image contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 255.0:
            raise InvalidImageError(
                f"intensities must lie in [0, 255], got [{arr.min():.4g}, {arr.max():.4g}]"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @classmethod
    def from_array(cls, values, clip: bool = False) -> "GrayImage":
        """Build an image, optionally clipping out-of-range reals first."""
        arr = np.asarray(values, dtype=np.float64)
        if clip:
            arr = np.clip(arr, 0.0, 255.0)
        return cls(arr)


def to_bytes(values) -> np.ndarray:
    """Round half away from zero and clamp to uint8."""
    arr = np.asarray(values, dtype=np.float64)
    rounded = np.sign(arr) * np.floor(np.abs(arr) + 0.5)
    return np.clip(rounded, 0, 255).astype(np.uint8)


def load_image(path) -> GrayImage:
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode == "1":
                mode, im = "L", im.convert("L")
            if mode != "L":
                raise ImageFormatError(
                    f"{path}: unsupported pixel mode {im.mode!r}; need 8-bit single channel"
                )
            arr = np.asarray(im, dtype=np.float64)
    except ImageFormatError:
        raise
    except (UnidentifiedImageError, SyntaxError, ValueError) as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc
    return GrayImage(arr)


def save_image(img: GrayImage | np.ndarray, path) -> None:
    """Write an 8-bit PGM (``.pgm``) or PNG; any other suffix is written as PNG."""
    data = img.data if isinstance(img, GrayImage) else np.asarray(img, dtype=np.float64)
    path = Path(path)
    fmt = "PPM" if path.suffix.lower() in (".pgm", ".pnm") else "PNG"
    Image.fromarray(to_bytes(data)).save(path, format=fmt)


def check_pair(a: GrayImage, b: GrayImage) -> None:
    if a.shape != b.shape:
        raise IncompatiblePairError(
            f"incompatible pair: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
