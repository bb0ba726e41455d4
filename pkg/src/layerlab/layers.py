"""Complete per-class RGBA layers and composite reconstruction.

A semantic layer is the composite of only one class's meshes, so it
contains content that the full render occludes ("see-through" layers).
The padded color image extends RGB into transparent regions by iterative
alpha-weighted Gaussian blurring, which improves boundary blending when
layers are recomposited.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from .depth import DEPTH_INVALID, PseudoDepthMap
from .errors import DimensionMismatch, UnknownClass
from .model import CharacterModel
from .raster import RGBAImage, render_composite

_COVERAGE_EPS = 1e-4
_ALL_TRANSPARENT_FILL = 0.5


@dataclass(eq=False)
class SemanticLayer:
    """One class's complete RGBA layer plus its padded color image."""

    class_index: int
    rgb: np.ndarray  # H×W×3
    alpha: np.ndarray  # H×W
    padded_rgb: np.ndarray  # H×W×3, defined everywhere

    @property
    def rgba(self) -> np.ndarray:
        return np.concatenate([self.rgb, self.alpha[:, :, None]], axis=2)

    @property
    def image(self) -> RGBAImage:
        return RGBAImage(self.rgba)


def pad_gaussian(rgb: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Fill transparent regions of rgb by iterative Gaussian blurring.

    For sigma in 1, 2, 4, ... up to max(H, W): blur the alpha-premultiplied
    color and the alpha; wherever the blurred coverage reaches 1e-4 and the
    pixel is still unfilled, write the normalized color. Pixels with
    alpha > 0 keep their exact rgb. A fully transparent input yields a
    mid-gray fill (with a warning).
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if rgb.shape[:2] != alpha.shape:
        raise DimensionMismatch("rgb and alpha sizes differ")
    height, width = alpha.shape
    known = alpha > 0.0
    out = rgb.copy()
    if not known.any():
        warnings.warn("pad_gaussian: fully transparent layer, filling with mid-gray")
        out[:] = _ALL_TRANSPARENT_FILL
        return out
    if known.all():
        return out

    source = rgb[known]
    if np.all(source.min(axis=0) == source.max(axis=0)):
        # Single source color: every weighted average equals it exactly.
        out[~known] = source[0]
        return out

    filled = known.copy()
    premult = rgb * alpha[:, :, None]
    sigma = 1.0
    limit = float(max(height, width))
    while not filled.all():
        num = np.stack(
            [gaussian_filter(premult[:, :, c], sigma, mode="constant") for c in range(3)],
            axis=2,
        )
        den = gaussian_filter(alpha, sigma, mode="constant")
        writable = (~filled) & (den >= _COVERAGE_EPS)
        if writable.any():
            out[writable] = num[writable] / den[writable][:, None]
            filled |= writable
        if sigma >= limit:
            break
        sigma *= 2.0
    if not filled.all():
        # Vanishing total alpha: fall back to the global weighted mean.
        mean = premult.sum(axis=(0, 1)) / alpha.sum()
        out[~filled] = mean
    return out


def extract_layer(model: CharacterModel, class_index: int) -> SemanticLayer:
    """Composite only the class's meshes (ascending draw order).

    The result includes content occluded in the full render. A class with
    no meshes yields a fully transparent (but valid) layer.
    """
    model.taxonomy.check_index(class_index)
    if class_index < 0:
        raise UnknownClass("class index must be a real class")
    ids = [m.id for m in model.meshes if m.label == class_index]
    width, height = model.canvas_size
    if not ids:
        rgb = np.zeros((height, width, 3))
        alpha = np.zeros((height, width))
    else:
        image = render_composite(model, visible=ids)
        rgb = image.rgb.copy()
        alpha = image.alpha.copy()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        padded = pad_gaussian(rgb, alpha)
    return SemanticLayer(class_index=class_index, rgb=rgb, alpha=alpha, padded_rgb=padded)


def extract_all_layers(
    model: CharacterModel, classes: Optional[Sequence[int]] = None
) -> list[SemanticLayer]:
    """Layers for every class that has at least one labeled mesh."""
    if classes is None:
        present = sorted({m.label for m in model.meshes if m.label >= 0})
    else:
        present = list(classes)
    return [extract_layer(model, c) for c in present]


def reconstruct(
    layers: Sequence[SemanticLayer], depth_maps: Sequence[PseudoDepthMap]
) -> RGBAImage:
    """Composite layers back-to-front using their per-pixel depth order.

    At each pixel, layers whose depth is invalid are absent; the rest are
    sorted by depth and composited with 'over'. This is the z-buffered
    reassembly of the decomposed layers.
    """
    if len(layers) != len(depth_maps):
        raise DimensionMismatch("one depth map per layer is required")
    if not layers:
        raise DimensionMismatch("at least one layer is required")
    shape = layers[0].alpha.shape
    for layer, dmap in zip(layers, depth_maps):
        if layer.alpha.shape != shape or dmap.depth.shape != shape:
            raise DimensionMismatch("layer and depth canvases differ")

    k = len(layers)
    height, width = shape
    rgb = np.stack([layer.rgb for layer in layers])  # K×H×W×3
    alpha = np.stack([layer.alpha for layer in layers])  # K×H×W
    depth = np.stack([d.depth for d in depth_maps])
    valid = np.stack([d.valid for d in depth_maps])

    alpha = np.where(valid, alpha, 0.0)
    depth = np.where(valid, depth, DEPTH_INVALID)

    order = np.argsort(depth, axis=0, kind="stable")  # back to front per pixel
    alpha_sorted = np.take_along_axis(alpha, order, axis=0)
    rgb_sorted = np.take_along_axis(rgb, order[..., None], axis=0)

    acc_rgb = np.zeros((height, width, 3))
    acc_a = np.zeros((height, width))
    for i in range(k):
        a = alpha_sorted[i][:, :, None]
        acc_rgb = rgb_sorted[i] * a + acc_rgb * (1.0 - a)
        acc_a = alpha_sorted[i] + acc_a * (1.0 - alpha_sorted[i])
    with np.errstate(invalid="ignore", divide="ignore"):
        straight = np.where(acc_a[:, :, None] > 0.0,
                            acc_rgb / np.where(acc_a == 0.0, 1.0, acc_a)[:, :, None],
                            0.0)
    return RGBAImage.from_parts(straight, acc_a)
