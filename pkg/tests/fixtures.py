"""Hand-built rasters shared by the unit and acceptance tests."""

import numpy as np


def disc(size, radius, value=255, center=None):
    yy, xx = np.mgrid[0:size, 0:size]
    cy, cx = ((size - 1) / 2, (size - 1) / 2) if center is None else center
    return np.where(np.hypot(yy - cy, xx - cx) <= radius, value, 0).astype(np.uint8)


def vignette_fixture(size=256, margin=20, value=200):
    """Bright disc of radius size/2 - margin on black corners."""
    return disc(size, size / 2 - margin, value)


def ring_fixture(size=256, level=6, core=150):
    """Border ring at ``level`` (not below the darkness threshold), bright centre."""
    img = np.full((size, size), level, np.uint8)
    q = size // 4
    img[q:-q, q:-q] = core
    return img


def corner_vs_center(size=32):
    """Large blob in the top-left corner, smaller blob in the middle.

    Corner blob: 10x10 at rows/cols 0..9, centroid (4.5, 4.5), edge distance 4.5.
    Centre blob: 6x6 at rows/cols 13..18, centroid (15.5, 15.5), edge distance 15.5.
    """
    mask = np.zeros((size, size), np.uint8)
    mask[0:10, 0:10] = 1
    centre = np.zeros_like(mask)
    centre[13:19, 13:19] = 1
    return mask | centre, centre


def top3_exclusion(size=32):
    """Four blobs; the smallest sits at the centre but ranks fourth by area.

    Areas 36, 30, 25 near the edges, 4 in the middle. Edge distances of the
    three big ones: top 3.5, left 3.0, lower right 7.0, so the lower right
    blob must win even though the 4-pixel blob is more central.
    """
    mask = np.zeros((size, size), np.uint8)
    mask[1:7, 10:16] = 1        # 36 px, centroid (3.5, 12.5)
    mask[12:18, 1:6] = 1        # 30 px, centroid (14.5, 3.0)
    expected = np.zeros_like(mask)
    expected[22:27, 22:27] = 1  # 25 px, centroid (24, 24) -> distance 7
    mask |= expected
    mask[15:17, 15:17] = 1      # 4 px, centroid (15.5, 15.5)
    return mask, expected
