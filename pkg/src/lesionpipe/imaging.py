"""Raster basics: grayscale conversion, resizing, border buffering, augmentation, PNG I/O.

Images are plain numpy arrays. A gray image is ``uint8`` of shape ``(H, W)``,
an RGB image ``uint8`` of shape ``(H, W, 3)`` and a binary mask ``uint8`` of
shape ``(H, W)`` holding 0/1. Geometric helpers also accept float rasters and
stacks whose last two axes are spatial.

Augmentation convention: ``rot90`` is counter-clockwise, ``mirror_x`` reverses
the row order (flip across the horizontal axis) and ``mirror_y`` reverses the
column order (flip across the vertical axis).
"""

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError

AUGMENT_NAMES = ("orig", "rot90", "rot180", "rot270", "mirror_x", "mirror_y")


def _round_half_up(x):
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5)


def check_gray(img):
    img = np.asarray(img)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise DataError(f"expected a 2-D gray raster, got shape {img.shape}")
    return img


def check_mask(mask):
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise DataError(f"expected a 2-D mask, got shape {mask.shape}")
    if mask.size and not np.isin(mask, (0, 1)).all():
        raise DataError("mask values must be 0 or 1")
    return mask.astype(np.uint8, copy=False)


def to_grayscale(img):
    """Rec. 601 luma, rounded half-up, in exact integer arithmetic."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DataError(f"expected an RGB raster (H, W, 3), got shape {img.shape}")
    rgb = img.astype(np.int64)
    y = (299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000
    return np.clip(y, 0, 255).astype(np.uint8)


def _axis_weights(n_in, n_out):
    # align-corners sampling: output endpoints land exactly on input endpoints
    if n_out == 1 or n_in == 1:
        pos = np.zeros(n_out)
    else:
        pos = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
    i0 = np.clip(np.floor(pos).astype(np.intp), 0, n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = pos - i0
    return i0, i1, frac


def resize_bilinear(img, width, height):
    """Bilinear resize of the first two axes to ``height x width``.

    uint8 input gives uint8 output (rounded half-up); float input stays float.
    """
    img = np.asarray(img)
    if width < 1 or height < 1:
        raise DataError("target size must be at least 1x1")
    h, w = img.shape[:2]
    if (h, w) == (height, width):
        return img.copy()
    data = img.astype(np.float64)
    r0, r1, fr = _axis_weights(h, height)
    c0, c1, fc = _axis_weights(w, width)
    extra = (1,) * (img.ndim - 2)
    fr = fr.reshape((-1, 1) + extra)
    fc = fc.reshape((1, -1) + extra)
    top = data[r0][:, c0] * (1 - fc) + data[r0][:, c1] * fc
    bottom = data[r1][:, c0] * (1 - fc) + data[r1][:, c1] * fc
    out = top * (1 - fr) + bottom * fr
    if img.dtype == np.uint8:
        return np.clip(_round_half_up(out), 0, 255).astype(np.uint8)
    return out.astype(img.dtype if np.issubdtype(img.dtype, np.floating) else np.float64)


def resize_nearest(img, width, height):
    """Nearest-neighbour resize; used for masks so they stay binary."""
    img = np.asarray(img)
    h, w = img.shape[:2]
    rows = np.minimum(((np.arange(height) + 0.5) * h / height).astype(np.intp), h - 1)
    cols = np.minimum(((np.arange(width) + 0.5) * w / width).astype(np.intp), w - 1)
    return img[rows][:, cols]


def add_border(img, t):
    """Pad the first two axes by ``t`` pixels of mirror reflection (edge not repeated)."""
    img = np.asarray(img)
    if t < 0:
        raise DataError("border width must be non-negative")
    h, w = img.shape[:2]
    if t == 0:
        return img.copy()
    if t > min(h, w):
        raise DataError(f"border {t} too wide to reflect a {w}x{h} image")
    pad = [(t, t), (t, t)] + [(0, 0)] * (img.ndim - 2)
    return np.pad(img, pad, mode="reflect")


def crop_border(img, t):
    """Remove ``t`` pixels from each side of the last two axes."""
    img = np.asarray(img)
    h, w = img.shape[-2:]
    if t < 0 or h <= 2 * t or w <= 2 * t:
        raise DataError(f"cannot crop border {t} from a {w}x{h} raster")
    if t == 0:
        return img.copy()
    return img[..., t:h - t, t:w - t].copy()


def rot90(a, k=1):
    return np.rot90(a, k, axes=(-2, -1))


def mirror_x(a):
    return np.flip(a, axis=-2)


def mirror_y(a):
    return np.flip(a, axis=-1)


def dihedral_six(a):
    """The six augmentation variants of a raster or channel stack (spatial axes last)."""
    a = np.asarray(a)
    variants = [a, rot90(a, 1), rot90(a, 2), rot90(a, 3), mirror_x(a), mirror_y(a)]
    return [np.ascontiguousarray(v) for v in variants]


def augment_six(img, mask):
    """Return [(image, mask)] for original, rot90, rot180, rot270, mirror-x, mirror-y."""
    img = np.asarray(img)
    mask = np.asarray(mask)
    if img.shape[-2:] != mask.shape[-2:]:
        raise DataError(f"image {img.shape} and mask {mask.shape} dimensions differ")
    if img.shape[-1] != img.shape[-2]:
        raise DataError("augmentation needs square rasters")
    return list(zip(dihedral_six(img), dihedral_six(mask)))


def prepare_image(img, size=216, border=20):
    """Resize to ``size``, add the mirror border, convert to gray.

    Accepts RGB or already-gray input.
    """
    img = np.asarray(img)
    out = add_border(resize_bilinear(img, size, size), border)
    return to_grayscale(out) if out.ndim == 3 else out


def prepare_mask(mask, size=216):
    """Nearest-resize a ground-truth mask to the unbordered working size."""
    return check_mask(resize_nearest(check_mask(mask), size, size))


# --- PNG I/O ---------------------------------------------------------------

def read_image(path):
    """Read a PNG as RGB ``(H, W, 3)`` or gray ``(H, W)`` uint8."""
    try:
        with Image.open(path) as im:
            if im.mode in ("L", "I", "I;16", "1"):
                arr = np.asarray(im.convert("L"))
            else:
                arr = np.asarray(im.convert("RGB"))
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    return arr.copy()


def read_mask(path):
    """Read a 0/255 PNG mask; values above 127 become 1."""
    arr = read_image(path)
    if arr.ndim == 3:
        arr = to_grayscale(arr)
    return (arr > 127).astype(np.uint8)


def write_image(path, img):
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise DataError("only uint8 rasters can be written as PNG")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img).save(path, format="PNG")


def write_mask(path, mask):
    write_image(path, check_mask(mask) * np.uint8(255))
