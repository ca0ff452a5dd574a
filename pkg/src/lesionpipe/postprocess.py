"""Turn lesion probabilities into a single-object mask.

Threshold the lesion channel, label 8-connected objects, keep the three
largest, and return the one whose centroid lies furthest from the image edge.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError
from .imaging import check_mask

LESION_CHANNEL = 1
EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass
class LabeledComponents:
    labels: np.ndarray      # 0 background, 1..K component ids in scan order
    areas: np.ndarray       # areas[k-1] is the area of label k
    centroids: np.ndarray   # (K, 2) row, col

    @property
    def count(self):
        return len(self.areas)

    def mask_of(self, label):
        return (self.labels == label).astype(np.uint8)


def threshold_prob(prob, tau=0.5):
    """1 where the lesion probability is strictly above ``tau``.

    ``prob`` is either a 2-D lesion-probability raster or a (2, H, W) pair,
    in which case channel 1 is used.
    """
    if not 0 < tau < 1:
        raise ConfigError(f"threshold must lie in (0, 1), got {tau}")
    prob = np.asarray(prob)
    if prob.ndim == 3:
        prob = prob[LESION_CHANNEL]
    return (prob > tau).astype(np.uint8)


def connected_components(mask):
    mask = check_mask(mask)
    labels, k = ndimage.label(mask, structure=EIGHT_CONNECTED)
    if k == 0:
        return LabeledComponents(labels, np.zeros(0, dtype=np.int64), np.zeros((0, 2)))
    flat = labels.ravel()
    areas = np.bincount(flat, minlength=k + 1)[1:]
    rows, cols = np.indices(labels.shape)
    r_sum = np.bincount(flat, weights=rows.ravel(), minlength=k + 1)[1:]
    c_sum = np.bincount(flat, weights=cols.ravel(), minlength=k + 1)[1:]
    centroids = np.stack([r_sum / areas, c_sum / areas], axis=1)
    return LabeledComponents(labels, areas, centroids)


def edge_distance(centroid, shape):
    r, c = centroid
    h, w = shape
    return min(r, c, h - 1 - r, w - 1 - c)


def select_lesion(comps, shape=None, top=3):
    """Mask of the most central of the ``top`` largest components.

    Ties on area or on edge distance go to the smaller label id.
    """
    shape = comps.labels.shape if shape is None else tuple(shape)
    if comps.count == 0:
        return np.zeros(shape, dtype=np.uint8)
    # stable sort keeps scan order among equal areas
    order = np.argsort(-comps.areas, kind="stable")[:top]
    best, best_dist = None, -np.inf
    for idx in order:
        dist = edge_distance(comps.centroids[idx], shape)
        if dist > best_dist or (dist == best_dist and idx < best):
            best, best_dist = idx, dist
    return comps.mask_of(best + 1)


def postprocess(prob, tau=0.5, select=True):
    mask = threshold_prob(prob, tau)
    if not select:
        return mask
    return select_lesion(connected_components(mask), mask.shape)
