"""Contrast stretching, hair removal and vignette-frame correction for gray images."""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .imaging import check_gray

# PIL ImageFilter.FIND_EDGES
EDGE_KERNEL = np.array([[-1, -1, -1], [-1, 8, -1], [-1, -1, -1]], dtype=np.int64)


@dataclass(frozen=True)
class ContrastParams:
    clip_fraction: float = 0.02

    def __post_init__(self):
        if not 0 <= self.clip_fraction < 0.5:
            raise ConfigError(f"clip_fraction must lie in [0, 0.5), got {self.clip_fraction}")


@dataclass(frozen=True)
class VignetteParams:
    max_iterations: int = 10
    base_margin: float = 20
    step: float = 5
    darkness_threshold: float = 6.0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be at least 1")
        if min(self.base_margin, self.step, self.darkness_threshold) < 0:
            raise ConfigError("vignette parameters must be non-negative")


def stretch_cutoffs(img, clip_fraction=0.02):
    """Histogram cut-offs ``(lo, hi)`` that clip ``clip_fraction`` of pixels per tail.

    ``lo`` is the smallest intensity whose cumulative count reaches the clip
    count, ``hi`` the largest whose count of pixels at or above it does. With a
    zero clip fraction this degenerates to the image min and max.
    """
    hist = np.bincount(np.asarray(img, dtype=np.uint8).ravel(), minlength=256)
    need = max(clip_fraction * hist.sum(), 1)
    lo = int(np.argmax(np.cumsum(hist) >= need))
    upper = np.cumsum(hist[::-1])
    hi = 255 - int(np.argmax(upper >= need))
    return lo, hi


def contrast_stretch(img, params=ContrastParams()):
    img = check_gray(img).astype(np.uint8, copy=False)
    lo, hi = stretch_cutoffs(img, params.clip_fraction)
    if hi <= lo:
        return img.copy()
    lut = np.floor((np.arange(256) - lo) * 255.0 / (hi - lo) + 0.5)
    lut = np.clip(lut, 0, 255).astype(np.uint8)
    return lut[img]


def detect_edges(img):
    """Binary edge map from the 3x3 high-pass (FIND_EDGES) filter.

    The filter response is clamped to [0, 255] before binarising, so only the
    brighter side of an intensity step is marked. The outer 1-pixel frame is 0.
    """
    img = check_gray(img).astype(np.int64)
    h, w = img.shape
    out = np.zeros((h, w), dtype=np.uint8)
    if h < 3 or w < 3:
        return out
    resp = np.zeros((h - 2, w - 2), dtype=np.int64)
    for dy in range(3):
        for dx in range(3):
            resp += EDGE_KERNEL[dy, dx] * img[dy:dy + h - 2, dx:dx + w - 2]
    out[1:-1, 1:-1] = np.clip(resp, 0, 255) > 0
    return out


def dilate3x3(mask):
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    padded = np.pad(mask, 1)
    out = np.zeros_like(mask)
    for dy in range(3):
        for dx in range(3):
            out |= padded[dy:dy + h, dx:dx + w]
    return out


def hair_mask(img):
    """Pixels that hair removal whitens: the edge map grown by one pixel."""
    return dilate3x3(detect_edges(img))


def remove_hair(img):
    img = check_gray(img).astype(np.uint8, copy=True)
    img[hair_mask(img)] = 255
    return img


def _radial_distance(h, w):
    yy, xx = np.mgrid[0:h, 0:w]
    return np.hypot(yy - (h - 1) / 2.0, xx - (w - 1) / 2.0)


def remove_vignette(img, params=VignetteParams(), return_fired=False):
    """Iteratively fill a dark outer ring with the mean of the central disc.

    At iteration ``i`` the disc radius is ``h/2 - base_margin + i*step``. When
    the pixels outside it average below ``darkness_threshold`` they are set to
    the (rounded) mean of the pixels inside. All iterations run, so fills
    compound. With ``return_fired`` the iteration indices that fired are
    returned alongside the image.
    """
    img = check_gray(img)
    h, w = img.shape
    if h != w:
        raise DataError(f"vignette correction needs a square image, got {w}x{h}")
    out = img.astype(np.uint8, copy=True)
    dist = _radial_distance(h, w)
    fired = []
    for i in range(params.max_iterations):
        radius = h / 2.0 - params.base_margin + i * params.step
        outer = dist > radius
        if not outer.any() or outer.all():
            continue
        if out[outer].mean() < params.darkness_threshold:
            fill = np.floor(out[~outer].mean() + 0.5)
            out[outer] = np.uint8(min(fill, 255))
            fired.append(i)
    if return_fired:
        return out, fired
    return out


def preprocess_image(img, contrast=ContrastParams(), vignette=VignetteParams(), return_info=False):
    """Contrast stretch, then hair removal, then vignette correction."""
    stretched = contrast_stretch(img, contrast)
    edges = hair_mask(stretched)
    dehaired = stretched.copy()
    dehaired[edges] = 255
    out, fired = remove_vignette(dehaired, vignette, return_fired=True)
    if return_info:
        lo, hi = stretch_cutoffs(img, contrast.clip_fraction)
        info = {
            "contrast_cutoffs": [lo, hi],
            "contrast_applied": hi > lo,
            "edge_pixels": int(detect_edges(stretched).sum()),
            "hair_pixels_filled": int(edges.sum()),
            "vignette_iterations": fired,
        }
        return out, info
    return out
