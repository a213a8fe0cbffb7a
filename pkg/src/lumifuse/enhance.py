"""Luminance-guided photometric post-processing chain.

Four global operators (brightness shift, mean-anchored contrast, hue-preserving
saturation, gamma) applied in a configurable order, optionally followed by
per-channel histogram matching against a reference image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .imaging import ImageBuffer, luminance, quantize_u8

STAGES = ("brightness", "contrast", "saturation", "gamma")
DEFAULT_STAGE_ORDER = STAGES

HIST_LEVELS = 256


@dataclass(frozen=True)
class EnhanceParams:
    """Parameters of the photometric chain; identity by default."""

    beta: float = 0.0  # brightness shift, [-1, 1]
    alpha: float = 1.0  # contrast gain, > 0
    sat: float = 1.0  # saturation gain, >= 0
    gamma: float = 1.0  # exponent, > 0; < 1 brightens
    order: tuple[str, ...] = DEFAULT_STAGE_ORDER
    reference: str | None = None  # histogram reference image path (resolved by the CLI)

    def __post_init__(self):
        if not -1.0 <= self.beta <= 1.0:
            raise InputError(f"beta: must be within [-1, 1], got {self.beta}")
        if not self.alpha > 0:
            raise InputError(f"alpha: must be > 0, got {self.alpha}")
        if not self.sat >= 0:
            raise InputError(f"sat: must be >= 0, got {self.sat}")
        if not self.gamma > 0:
            raise InputError(f"gamma: must be > 0, got {self.gamma}")
        order = tuple(self.order)
        if sorted(order) != sorted(STAGES):
            raise InputError(f"order: must be a permutation of {STAGES}, got {order}")
        object.__setattr__(self, "order", order)


def _clamped(data: np.ndarray) -> ImageBuffer:
    return ImageBuffer(np.clip(data, 0.0, 1.0))


def apply_brightness(img: ImageBuffer, beta: float) -> ImageBuffer:
    """v <- clamp(v + beta)."""
    if beta == 0.0:
        return img
    return _clamped(img.data + beta)


def apply_contrast(img: ImageBuffer, alpha: float) -> ImageBuffer:
    """Scale deviations from the scalar luminance mean: v <- clamp(mu + alpha*(v - mu))."""
    if alpha == 1.0:
        return img
    mu = float(np.mean(luminance(img)))
    return _clamped(mu + alpha * (img.data - mu))


def apply_saturation(img: ImageBuffer, sat: float) -> ImageBuffer:
    """Amplify chrominance residuals around per-pixel luma without hue shifts.

    The effective gain 1 + (sat-1)*(1-Y) fades toward identity in highlights,
    protecting near-white pixels from clipping artifacts.
    """
    if sat == 1.0:
        return img
    y = luminance(img)[:, :, None]
    s_eff = 1.0 + (sat - 1.0) * (1.0 - y)
    return _clamped(y + s_eff * (img.data - y))


def apply_gamma(img: ImageBuffer, gamma: float) -> ImageBuffer:
    """v <- v**gamma per sample; gamma < 1 brightens."""
    if gamma <= 0:
        raise InputError(f"gamma: must be > 0, got {gamma}")
    if gamma == 1.0:
        return img
    return ImageBuffer(np.power(img.data, gamma))


def histogram_lut(src_channel: np.ndarray, ref_channel: np.ndarray) -> np.ndarray:
    """Monotone level map sending the source CDF onto the reference CDF.

    Both channels are uint8 level arrays. Level v maps to the smallest
    reference level u with cdf_ref(u) >= cdf_src(v).
    """
    hist_src = np.bincount(src_channel.ravel(), minlength=HIST_LEVELS)
    hist_ref = np.bincount(ref_channel.ravel(), minlength=HIST_LEVELS)
    cdf_src = np.cumsum(hist_src) / src_channel.size
    cdf_ref = np.cumsum(hist_ref) / ref_channel.size
    return np.searchsorted(cdf_ref, cdf_src, side="left").astype(np.uint8)


def histogram_match(src: ImageBuffer, ref: ImageBuffer) -> ImageBuffer:
    """Per-channel histogram matching on a 256-level grid.

    Source and reference may differ in size. The output stays quantized to
    the k/255 grid.
    """
    q_src = quantize_u8(src.data)
    q_ref = quantize_u8(ref.data)
    out = np.empty_like(src.data)
    for c in range(3):
        lut = histogram_lut(q_src[:, :, c], q_ref[:, :, c])
        out[:, :, c] = lut[q_src[:, :, c]] / 255.0
    return ImageBuffer(out)


_STAGE_FUNCS = {
    "brightness": lambda img, p: apply_brightness(img, p.beta),
    "contrast": lambda img, p: apply_contrast(img, p.alpha),
    "saturation": lambda img, p: apply_saturation(img, p.sat),
    "gamma": lambda img, p: apply_gamma(img, p.gamma),
}


def enhance_pipeline(img: ImageBuffer, params: EnhanceParams,
                     ref: ImageBuffer | None = None) -> ImageBuffer:
    """Run the stages in params.order, then histogram-match if a reference is given."""
    for stage in params.order:
        img = _STAGE_FUNCS[stage](img, params)
    if ref is not None:
        img = histogram_match(img, ref)
    return img
