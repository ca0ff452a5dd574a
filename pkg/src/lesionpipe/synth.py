"""Seeded synthetic dermoscopy-like images with exact ground-truth masks.

Each image is flat skin with one darker elliptical lesion near the centre.
Artifacts are switched on at random per image:

* hair: dark 1-2 px curved strokes that cross the frame
* spots: small dark marks near the periphery (annotation marks, freckles)
* low contrast: all intensities squeezed toward the image mean
* vignette: near-black frame outside a circle narrower than the image

Backgrounds carry no pixel noise, so the high-pass hair detector only fires
on real structure.
"""

from dataclasses import dataclass

import numpy as np

VIGNETTE_LEVEL = 2


@dataclass
class SynthOptions:
    hair_prob: float = 0.35
    hair_strokes: tuple = (1, 4)
    spot_prob: float = 0.6
    spot_radius: tuple = (0.04, 0.08)     # fraction of the image size
    low_contrast_prob: float = 0.4
    low_contrast_factor: tuple = (0.1, 0.3)
    vignette_prob: float = 0.15
    vignette_radius: tuple = (0.6, 0.8)   # fraction of half the image size


def ellipse_mask(size, center, axes, angle):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dy, dx = yy - center[0], xx - center[1]
    c, s = np.cos(angle), np.sin(angle)
    u = (dx * c + dy * s) / axes[1]
    v = (-dx * s + dy * c) / axes[0]
    return (u * u + v * v <= 1.0).astype(np.uint8)


def _stroke(size, rng, width):
    """Boolean raster of one quadratic Bezier hair stroke."""
    p0, p1, p2 = rng.uniform(-0.1, 1.1, size=(3, 2)) * size
    t = np.linspace(0.0, 1.0, 8 * size)[:, None]
    pts = (1 - t) ** 2 * p0 + 2 * (1 - t) * t * p1 + t ** 2 * p2
    out = np.zeros((size, size), dtype=bool)
    for off in range(width):
        rows = np.round(pts[:, 0]).astype(int) + off
        cols = np.round(pts[:, 1]).astype(int)
        ok = (rows >= 0) & (rows < size) & (cols >= 0) & (cols < size)
        out[rows[ok], cols[ok]] = True
    return out


def synth_sample(rng, size=64, options=None):
    """Return ``(rgb, mask, flags)`` for one image drawn from ``rng``."""
    opt = options or SynthOptions()
    skin = np.array([rng.uniform(170, 225), rng.uniform(130, 175), rng.uniform(110, 150)])
    img = np.tile(skin, (size, size, 1))

    half = size / 2.0
    center = (half - 0.5 + rng.uniform(-0.1, 0.1) * size, half - 0.5 + rng.uniform(-0.1, 0.1) * size)
    axes = (rng.uniform(0.1, 0.24) * size, rng.uniform(0.1, 0.24) * size)
    mask = ellipse_mask(size, center, axes, rng.uniform(0, np.pi))
    if not mask.any():
        mask[int(center[0]), int(center[1])] = 1
    tone = rng.uniform(0.35, 0.7) * np.array([1.0, 0.85, 0.75])
    img[mask.astype(bool)] = skin * tone

    flags = {"hair": rng.random() < opt.hair_prob,
             "spots": rng.random() < opt.spot_prob,
             "low_contrast": rng.random() < opt.low_contrast_prob,
             "vignette": rng.random() < opt.vignette_prob}

    if flags["spots"]:
        for _ in range(rng.integers(1, 4)):
            ang = rng.uniform(0, 2 * np.pi)
            rad = rng.uniform(0.32, 0.44) * size
            c = (half + rad * np.sin(ang), half + rad * np.cos(ang))
            r = rng.uniform(*opt.spot_radius) * size
            spot = ellipse_mask(size, c, (r, r), 0.0).astype(bool) & ~mask.astype(bool)
            img[spot] = skin * rng.uniform(0.3, 0.7) * np.array([1.0, 0.85, 0.75])
    if flags["hair"]:
        hair_rgb = np.array([45.0, 32.0, 25.0]) * rng.uniform(0.6, 1.2)
        for _ in range(rng.integers(opt.hair_strokes[0], opt.hair_strokes[1] + 1)):
            img[_stroke(size, rng, int(rng.integers(1, 3)))] = hair_rgb
    if flags["low_contrast"]:
        mean = img.mean(axis=(0, 1))
        img = mean + (img - mean) * rng.uniform(*opt.low_contrast_factor)
    if flags["vignette"]:
        yy, xx = np.mgrid[0:size, 0:size]
        dist = np.hypot(yy - (size - 1) / 2.0, xx - (size - 1) / 2.0)
        img[dist > rng.uniform(*opt.vignette_radius) * half] = VIGNETTE_LEVEL

    rgb = np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)
    return rgb, mask, flags


def synth_samples(n, seed=0, size=64, options=None):
    """``n`` samples as a list of dicts with keys id, image, mask, flags."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        rgb, mask, flags = synth_sample(rng, size, options)
        out.append({"id": f"synth{i:05d}", "image": rgb, "mask": mask, "flags": flags})
    return out
