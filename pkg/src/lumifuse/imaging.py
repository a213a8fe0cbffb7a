"""Image buffer type, 8-bit PNG IO, and colorimetric helpers."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import InputError
from .util import atomic_output

# Rec. 709 luma weights; they sum to exactly 1.0 as float64 constants.
REC709_WEIGHTS = (0.2126, 0.7152, 0.0722)


@dataclass(frozen=True)
class ImageBuffer:
    """H x W x 3 float64 RGB image with values in [0, 1] (nonlinear sRGB)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise InputError(f"image data must be HxWx3, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InputError("image dimensions must be positive")
        if not np.all(np.isfinite(arr)):
            raise InputError("image data contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise InputError("image data outside [0, 1]")
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @classmethod
    def full(cls, height: int, width: int, rgb) -> "ImageBuffer":
        data = np.empty((height, width, 3), dtype=np.float64)
        data[:] = np.broadcast_to(np.asarray(rgb, dtype=np.float64), (3,))
        return cls(data)


def quantize_u8(data: np.ndarray) -> np.ndarray:
    """[0, 1] floats to uint8 levels, rounding halves away from zero."""
    return np.floor(np.asarray(data, dtype=np.float64) * 255.0 + 0.5).astype(np.uint8)


def load_image(path) -> ImageBuffer:
    """Load an 8-bit RGB(A) PNG; alpha is dropped, values map to v/255."""
    try:
        with Image.open(path) as im:
            if im.mode == "P":
                im = im.convert("RGBA")
            if im.mode not in ("RGB", "RGBA"):
                raise InputError(f"{path}: unsupported image mode {im.mode!r} (need 8-bit RGB/RGBA)")
            arr = np.asarray(im)
    except (UnidentifiedImageError, OSError) as exc:
        raise InputError(f"{path}: cannot decode image ({exc})") from exc
    return ImageBuffer(arr[:, :, :3].astype(np.float64) / 255.0)


def save_image(img: ImageBuffer, path) -> None:
    """Write an 8-bit PNG (atomic replace); quantization rounds half away from zero."""
    out = Image.fromarray(quantize_u8(img.data), mode="RGB")
    with atomic_output(path) as tmp:
        with open(tmp, "wb") as fh:
            out.save(fh, format="PNG")


def luminance(img: ImageBuffer) -> np.ndarray:
    """Per-pixel Rec. 709 luma Y = 0.2126 R + 0.7152 G + 0.0722 B.

    Evaluated as B + wr*(R-B) + wg*(G-B), which is the same expression with
    the weights summing to one but makes Y == v exact for gray pixels.
    """
    r = img.data[:, :, 0]
    g = img.data[:, :, 1]
    b = img.data[:, :, 2]
    wr, wg, _ = REC709_WEIGHTS
    return b + wr * (r - b) + wg * (g - b)


def list_images(directory) -> list[Path]:
    """PNG files of a directory, sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise InputError(f"{directory}: not a directory")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png" and p.is_file())
