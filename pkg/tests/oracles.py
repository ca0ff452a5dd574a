"""Slow, obviously-correct reference implementations used by the tests."""

from collections import deque

import numpy as np


def lbp_brute(img):
    """Pixel-by-pixel LBP: walk the 8 neighbours clockwise from top-left."""
    h, w = img.shape
    out = np.zeros((h, w), np.uint8)
    ring = [(-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1)]
    for r in range(1, h - 1):
        for c in range(1, w - 1):
            code = 0
            for k, (dr, dc) in enumerate(ring):
                if int(img[r + dr, c + dc]) >= int(img[r, c]):
                    code += 2 ** (7 - k)
            out[r, c] = code
    return out


def haar_matrix(n):
    """Orthonormal one-level analysis matrix: low rows on top, high rows below."""
    m = np.zeros((n, n))
    s = np.sqrt(0.5)
    for i in range(n // 2):
        m[i, 2 * i] = m[i, 2 * i + 1] = s
        m[n // 2 + i, 2 * i] = s
        m[n // 2 + i, 2 * i + 1] = -s
    return m


def haar_dwt_matrix(x):
    """(LL, LH, HL, HH) via explicit matrix products on an even-sized raster."""
    h, w = x.shape
    y = haar_matrix(h) @ x @ haar_matrix(w).T
    top, bottom = y[:h // 2], y[h // 2:]
    ll, hl = top[:, :w // 2], top[:, w // 2:]
    lh, hh = bottom[:, :w // 2], bottom[:, w // 2:]
    return ll, lh, hl, hh


def components_bfs(mask):
    """8-connected labels by breadth-first flood fill in raster order."""
    h, w = mask.shape
    labels = np.zeros((h, w), np.int64)
    n = 0
    for r in range(h):
        for c in range(w):
            if mask[r, c] and not labels[r, c]:
                n += 1
                labels[r, c] = n
                queue = deque([(r, c)])
                while queue:
                    y, x = queue.popleft()
                    for dy in (-1, 0, 1):
                        for dx in (-1, 0, 1):
                            yy, xx = y + dy, x + dx
                            if 0 <= yy < h and 0 <= xx < w and mask[yy, xx] and not labels[yy, xx]:
                                labels[yy, xx] = n
                                queue.append((yy, xx))
    return labels, n


def jaccard_loop(a, b):
    inter = union = 0
    for x, y in zip(np.ravel(a), np.ravel(b)):
        inter += bool(x) and bool(y)
        union += bool(x) or bool(y)
    return 1.0 if union == 0 else inter / union


def numeric_grad(f, x, h=1e-5):
    """Central differences of scalar ``f()`` with respect to array ``x`` (in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_error(a, b, floor=1e-6):
    a, b = np.ravel(a), np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), floor))
