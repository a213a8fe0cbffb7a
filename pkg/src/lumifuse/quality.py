"""PSNR/SSIM quality metrics, directory evaluation, and branch selection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import InputError
from .imaging import ImageBuffer, load_image

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_L = 1.0  # dynamic range of [0, 1] buffers


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """1-D Gaussian taps normalized to unit sum."""
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    w = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return w / w.sum()


def _check_same_size(a: ImageBuffer, b: ImageBuffer) -> None:
    if a.width != b.width or a.height != b.height:
        raise InputError(
            f"image dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def psnr(a: ImageBuffer, b: ImageBuffer) -> float:
    """10*log10(1/MSE) over all samples; +inf for identical images."""
    _check_same_size(a, b)
    diff = a.data - b.data
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _blur_valid(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    return _kernels.conv_valid_v(_kernels.conv_valid_h(x, w), w)


def ssim(a: ImageBuffer, b: ImageBuffer) -> float:
    """Mean structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Local statistics come from valid (uncropped-window) convolution; the three
    channel maps are averaged over valid pixels and then uniformly.
    """
    _check_same_size(a, b)
    if min(a.width, a.height) < SSIM_WINDOW:
        raise InputError(
            f"image {a.width}x{a.height} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )
    w = gaussian_window()
    c1 = (SSIM_K1 * SSIM_L) ** 2
    c2 = (SSIM_K2 * SSIM_L) ** 2
    channel_means = []
    for c in range(3):
        x = np.ascontiguousarray(a.data[:, :, c])
        y = np.ascontiguousarray(b.data[:, :, c])
        mu_x = _blur_valid(x, w)
        mu_y = _blur_valid(y, w)
        var_x = _blur_valid(x * x, w) - mu_x * mu_x
        var_y = _blur_valid(y * y, w) - mu_y * mu_y
        cov = _blur_valid(x * y, w) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        channel_means.append(float(np.mean(num / den)))
    return (channel_means[0] + channel_means[1] + channel_means[2]) / 3.0


@dataclass(frozen=True)
class ImagePairMetrics:
    name: str
    psnr: float  # dB; math.inf for identical pairs
    ssim: float


@dataclass(frozen=True)
class MetricReport:
    """Per-image metrics plus aggregates; infinite PSNR rows are excluded from
    the PSNR mean and surfaced through infinite_psnr_count."""

    rows: tuple[ImagePairMetrics, ...]
    mean_psnr: float
    mean_ssim: float
    image_count: int
    infinite_psnr_count: int

    @classmethod
    def from_rows(cls, rows) -> "MetricReport":
        rows = tuple(sorted(rows, key=lambda r: r.name))
        if not rows:
            raise InputError("a metric report needs at least one image pair")
        finite = [r.psnr for r in rows if math.isfinite(r.psnr)]
        mean_psnr = sum(finite) / len(finite) if finite else math.inf
        mean_ssim = sum(r.ssim for r in rows) / len(rows)
        return cls(rows, mean_psnr, mean_ssim, len(rows), len(rows) - len(finite))

    def to_dict(self) -> dict:
        def enc(v: float):
            return v if math.isfinite(v) else None

        return {
            "images": [
                {"name": r.name, "psnr": enc(r.psnr), "ssim": r.ssim} for r in self.rows
            ],
            "mean_psnr": enc(self.mean_psnr),
            "mean_ssim": self.mean_ssim,
            "image_count": self.image_count,
            "infinite_psnr_count": self.infinite_psnr_count,
        }


def evaluate_pair(pred_path, gt_path, name: str) -> ImagePairMetrics:
    pred = load_image(pred_path)
    gt = load_image(gt_path)
    return ImagePairMetrics(name=name, psnr=psnr(pred, gt), ssim=ssim(pred, gt))


def evaluate_dir(pred_dir, gt_dir) -> MetricReport:
    """Evaluate every prediction PNG against the ground-truth file of the same name."""
    pred_dir = Path(pred_dir)
    gt_dir = Path(gt_dir)
    if not pred_dir.is_dir():
        raise InputError(f"{pred_dir}: not a directory")
    preds = sorted(p for p in pred_dir.iterdir() if p.suffix.lower() == ".png")
    if not preds:
        raise InputError(f"{pred_dir}: no PNG images to evaluate")
    rows = []
    for p in preds:
        gt_path = gt_dir / p.name
        if not gt_path.is_file():
            raise InputError(f"missing ground truth for {p.name!r} in {gt_dir}")
        rows.append(evaluate_pair(p, gt_path, p.name))
    return MetricReport.from_rows(rows)


SELECTION_CRITERIA = ("psnr", "ssim")


@dataclass(frozen=True)
class SelectionResult:
    chosen: str
    criterion: str
    reports: dict[str, MetricReport]

    def to_dict(self) -> dict:
        return {
            "chosen": self.chosen,
            "criterion": self.criterion,
            "branches": {label: rep.to_dict() for label, rep in self.reports.items()},
        }


def select_branch(reports: dict[str, MetricReport], criterion: str) -> SelectionResult:
    """Pick the branch maximizing the mean criterion.

    Ties fall back to the higher mean of the other metric, then to the
    lexicographically smallest label.
    """
    if criterion not in SELECTION_CRITERIA:
        raise InputError(f"criterion must be one of {SELECTION_CRITERIA}, got {criterion!r}")
    if not reports:
        raise InputError("no branch reports to select from")

    def sort_key(label: str):
        rep = reports[label]
        primary = rep.mean_psnr if criterion == "psnr" else rep.mean_ssim
        secondary = rep.mean_ssim if criterion == "psnr" else rep.mean_psnr
        return (-primary, -secondary, label)

    chosen = min(reports, key=sort_key)
    return SelectionResult(chosen=chosen, criterion=criterion, reports=dict(reports))
