"""Network input transformations: local binary patterns and a Haar wavelet pyramid.

``build_input_stack`` assembles the per-scenario channel stack fed to the U-Net:

* A, B: gray / 255
* C: gray / 255, LBP codes / 255
* D: gray / 255 plus the approximation (LL) image of each of the three wavelet
  levels, min-max normalised, resized to the working size and re-bordered.
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .imaging import add_border, check_gray, resize_bilinear

SQRT_HALF = np.sqrt(0.5)

# clockwise from top-left; the first neighbour is the most significant bit
LBP_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1))


def lbp_map(img):
    """Basic radius-1, 8-neighbour LBP codes; a neighbour >= centre sets its bit.

    Border pixels receive code 0.
    """
    img = check_gray(img)
    h, w = img.shape
    if h < 3 or w < 3:
        raise DataError(f"LBP needs at least a 3x3 image, got {w}x{h}")
    src = img.astype(np.int64)
    center = src[1:-1, 1:-1]
    codes = np.zeros((h - 2, w - 2), dtype=np.int64)
    for dy, dx in LBP_OFFSETS:
        neighbour = src[1 + dy:h - 1 + dy, 1 + dx:w - 1 + dx]
        codes = (codes << 1) | (neighbour >= center)
    out = np.zeros((h, w), dtype=np.uint8)
    out[1:-1, 1:-1] = codes
    return out


def _pad_even(x):
    h, w = x.shape
    pad = (h % 2, w % 2)
    if any(pad):
        x = np.pad(x, ((0, pad[0]), (0, pad[1])), mode="edge")
    return x, pad


def dwt2_haar(x):
    """One level of the orthonormal 2-D Haar transform.

    Rows are filtered first (low ``(a+b)/sqrt2``, high ``(a-b)/sqrt2``), then
    columns. Odd sizes are edge-padded to even. Returns ``(LL, LH, HL, HH)``
    where LH is low-pass along rows and high-pass down columns (horizontal
    detail), HL the converse (vertical detail) and HH the diagonal detail.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.size == 0:
        raise DataError(f"wavelet transform needs a non-empty 2-D raster, got shape {x.shape}")
    x, _ = _pad_even(x)
    lo = (x[:, 0::2] + x[:, 1::2]) * SQRT_HALF
    hi = (x[:, 0::2] - x[:, 1::2]) * SQRT_HALF
    ll = (lo[0::2] + lo[1::2]) * SQRT_HALF
    lh = (lo[0::2] - lo[1::2]) * SQRT_HALF
    hl = (hi[0::2] + hi[1::2]) * SQRT_HALF
    hh = (hi[0::2] - hi[1::2]) * SQRT_HALF
    return ll, lh, hl, hh


def idwt2_haar(ll, lh, hl, hh, shape=None):
    """Inverse of :func:`dwt2_haar`; ``shape`` crops away any even-padding."""
    h2, w2 = ll.shape
    lo = np.empty((2 * h2, w2))
    hi = np.empty((2 * h2, w2))
    lo[0::2] = (ll + lh) * SQRT_HALF
    lo[1::2] = (ll - lh) * SQRT_HALF
    hi[0::2] = (hl + hh) * SQRT_HALF
    hi[1::2] = (hl - hh) * SQRT_HALF
    x = np.empty((2 * h2, 2 * w2))
    x[:, 0::2] = (lo + hi) * SQRT_HALF
    x[:, 1::2] = (lo - hi) * SQRT_HALF
    if shape is not None:
        x = x[:shape[0], :shape[1]]
    return x


@dataclass
class WaveletLevel:
    approximation: np.ndarray
    horizontal: np.ndarray
    vertical: np.ndarray
    diagonal: np.ndarray
    input_shape: tuple


@dataclass
class WaveletPyramid:
    levels: list = field(default_factory=list)

    @property
    def approximations(self):
        return [lvl.approximation for lvl in self.levels]

    def coefficient_count(self):
        n = sum(lvl.horizontal.size + lvl.vertical.size + lvl.diagonal.size for lvl in self.levels)
        return n + self.levels[-1].approximation.size

    def energy(self):
        e = sum(float((lvl.horizontal ** 2).sum() + (lvl.vertical ** 2).sum() + (lvl.diagonal ** 2).sum())
                for lvl in self.levels)
        return e + float((self.levels[-1].approximation ** 2).sum())

    def reconstruct(self, level=0):
        """Rebuild the input of pyramid level ``level`` (0 = the original raster)."""
        x = self.levels[-1].approximation
        for lvl in reversed(self.levels[level:]):
            x = idwt2_haar(x, lvl.horizontal, lvl.vertical, lvl.diagonal, shape=lvl.input_shape)
        return x


def wavelet_pyramid(img, levels=3):
    x = np.asarray(img, dtype=np.float64)
    if levels < 1:
        raise ConfigError("wavelet pyramid needs at least one level")
    if x.ndim != 2 or min(x.shape) < 2 ** levels:
        raise DataError(f"raster of shape {x.shape} is too small for {levels} wavelet levels")
    pyr = WaveletPyramid()
    for _ in range(levels):
        ll, lh, hl, hh = dwt2_haar(x)
        pyr.levels.append(WaveletLevel(ll, lh, hl, hh, x.shape))
        x = ll
    return pyr


def minmax_normalize(x):
    x = np.asarray(x, dtype=np.float64)
    lo, hi = x.min(), x.max()
    if hi <= lo:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def channel_count(scenario):
    tag = getattr(scenario, "scenario", scenario)
    try:
        return {"A": 1, "B": 1, "C": 2, "D": 4}[tag]
    except KeyError:
        raise ConfigError(f"unknown scenario tag {tag!r}") from None


def build_input_stack(pre, scenario, border=None, wavelet_levels=3):
    """Channel-major float32 stack in [0, 1] for one prepared image.

    ``scenario`` is a ScenarioConfig or a bare tag ``'A'..'D'``. The border
    width defaults to the config's (or 20 for a bare tag). Wavelets are taken
    of the unbordered interior; each approximation is resized back to the
    interior size and bordered again.
    """
    tag = getattr(scenario, "scenario", scenario)
    n_channels = channel_count(tag)
    if border is None:
        border = getattr(scenario, "border", 20)
    wavelet_levels = getattr(scenario, "wavelet_levels", None) or wavelet_levels
    pre = check_gray(pre)
    h, w = pre.shape
    channels = [pre.astype(np.float64) / 255.0]
    if tag == "C":
        channels.append(lbp_map(pre).astype(np.float64) / 255.0)
    elif tag == "D":
        inner_h, inner_w = h - 2 * border, w - 2 * border
        if inner_h < 1 or inner_w < 1:
            raise DataError(f"border {border} leaves no interior in a {w}x{h} image")
        # decompose the interior only so the resized approximations line up
        # with the gray channel once the border is mirrored back on
        inner = pre[border:h - border, border:w - border]
        for approx in wavelet_pyramid(inner, wavelet_levels).approximations:
            a = resize_bilinear(minmax_normalize(approx), inner_w, inner_h)
            channels.append(add_border(a, border))
    stack = np.clip(np.stack(channels), 0.0, 1.0).astype(np.float32)
    assert stack.shape[0] == n_channels
    return stack


# --- feature-stack file ------------------------------------------------------

LPFS_MAGIC = b"LPFS"
LPFS_VERSION = 1
_LPFS_HEADER = struct.Struct("<4sHHII")


def write_feature_stack(path, stack):
    stack = np.asarray(stack, dtype="<f4")
    if stack.ndim != 3:
        raise DataError("feature stack must be (channels, height, width)")
    c, h, w = stack.shape
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_LPFS_HEADER.pack(LPFS_MAGIC, LPFS_VERSION, c, w, h))
        f.write(np.ascontiguousarray(stack).tobytes())


def read_feature_stack(path):
    raw = Path(path).read_bytes()
    if len(raw) < _LPFS_HEADER.size:
        raise DataError(f"{path}: truncated feature-stack header")
    magic, version, c, w, h = _LPFS_HEADER.unpack_from(raw)
    if magic != LPFS_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if version != LPFS_VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    payload = raw[_LPFS_HEADER.size:]
    if len(payload) != 4 * c * w * h:
        raise DataError(f"{path}: payload size does not match header")
    return np.frombuffer(payload, dtype="<f4").reshape(c, h, w).astype(np.float32)
