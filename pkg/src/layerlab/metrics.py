"""Evaluation metrics: mask Dice loss and MSE, PSNR/SSIM, depth errors.

Images are compared over RGB after matting onto a white background (alpha
handling for reconstruction comparisons is otherwise ambiguous). PSNR
uses MAX=1 and is capped at 100 dB for identical images. SSIM uses an
11×11 Gaussian window (sigma 1.5, K1=0.01, K2=0.03), evaluated on fully
interior windows and averaged per channel. Depth metrics shift by
epsilon=0.01 before dividing because pseudo-depth legitimately reaches 0.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import correlate

from .depth import PseudoDepthMap
from .errors import DimensionMismatch, NoOverlap
from .raster import RGBAImage

PSNR_CAP_DB = 100.0
DEPTH_EPS = 0.01
_SSIM_SIGMA = 1.5
_SSIM_RADIUS = 5  # 11×11 window
_K1 = 0.01
_K2 = 0.03


@dataclass
class MetricsReport:
    """Bundle of metric values; absent metrics stay None."""

    psnr: Optional[float] = None
    ssim: Optional[float] = None
    mask_dice_loss: Optional[float] = None
    mask_mse: Optional[float] = None
    absrel: Optional[float] = None
    delta1: Optional[float] = None

    def to_json(self) -> str:
        return json.dumps({k: v for k, v in asdict(self).items() if v is not None},
                          indent=2, sort_keys=True)

    def items(self) -> list[tuple[str, float]]:
        return [(k, v) for k, v in asdict(self).items() if v is not None]


def metric_dice_loss(a: np.ndarray, b: np.ndarray) -> float:
    """1 - 2|a∩b| / (|a| + |b|); two empty masks score 0."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise DimensionMismatch(f"mask shapes differ: {a.shape} vs {b.shape}")
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 0.0
    return 1.0 - 2.0 * int((a & b).sum()) / total


def metric_mask_mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared difference between two binary masks."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise DimensionMismatch(f"mask shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))


def matte_on_white(image: RGBAImage) -> np.ndarray:
    """RGB over a white background: rgb*alpha + (1-alpha)."""
    a = image.alpha[:, :, None]
    return image.rgb * a + (1.0 - a)


def _gaussian_kernel_2d(sigma: float, radius: int) -> np.ndarray:
    coords = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def _ssim_channel(x: np.ndarray, y: np.ndarray, kernel: np.ndarray) -> float:
    c1 = _K1**2
    c2 = _K2**2

    def smooth(img: np.ndarray) -> np.ndarray:
        return correlate(img, kernel, mode="constant")

    mu_x = smooth(x)
    mu_y = smooth(y)
    xx = smooth(x * x) - mu_x * mu_x
    yy = smooth(y * y) - mu_y * mu_y
    xy = smooth(x * y) - mu_x * mu_y
    ssim_map = ((2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)) / (
        (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
    )
    interior = ssim_map[_SSIM_RADIUS:-_SSIM_RADIUS or None, _SSIM_RADIUS:-_SSIM_RADIUS or None]
    if interior.size == 0:
        interior = ssim_map
    return float(interior.mean())


def metric_psnr_ssim(x: RGBAImage, y: RGBAImage) -> tuple[float, float]:
    """(PSNR dB, SSIM) over white-matted RGB."""
    if x.pixels.shape != y.pixels.shape:
        raise DimensionMismatch(
            f"image shapes differ: {x.pixels.shape} vs {y.pixels.shape}"
        )
    xm = matte_on_white(x)
    ym = matte_on_white(y)

    mse = float(np.mean((xm - ym) ** 2))
    if mse == 0.0:
        psnr = PSNR_CAP_DB
    else:
        psnr = min(float(-10.0 * np.log10(mse)), PSNR_CAP_DB)

    kernel = _gaussian_kernel_2d(_SSIM_SIGMA, _SSIM_RADIUS)
    ssim = float(np.mean([_ssim_channel(xm[:, :, c], ym[:, :, c], kernel) for c in range(3)]))
    return psnr, ssim


def metric_depth(pred: PseudoDepthMap, gt: PseudoDepthMap) -> tuple[float, float]:
    """(AbsRel, delta1) over jointly valid pixels.

    absrel = mean(|pred - gt| / (gt + eps));
    delta1 = fraction with max((pred+eps)/(gt+eps), (gt+eps)/(pred+eps)) < 1.25.
    """
    if pred.depth.shape != gt.depth.shape:
        raise DimensionMismatch(
            f"depth shapes differ: {pred.depth.shape} vs {gt.depth.shape}"
        )
    both = pred.valid & gt.valid
    if not both.any():
        raise NoOverlap("depth maps share no valid pixels")
    p = pred.depth[both] + DEPTH_EPS
    g = gt.depth[both] + DEPTH_EPS
    absrel = float(np.mean(np.abs(p - g) / g))
    ratio = np.maximum(p / g, g / p)
    delta1 = float(np.mean(ratio < 1.25))
    return absrel, delta1
