"""Structure metrics: connected regions, pixel error, and mask overlap.

Region counting separates foreground from background by comparing luminance
against the median border pixel, then labels the foreground with 8-neighbor
connectivity.  The result is a partition of the foreground, invariant to pixel
scan order up to label renaming.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
DEFAULT_FOREGROUND_THRESHOLD = 0.1


def luminance(pixels: np.ndarray) -> np.ndarray:
    """Collapse (H, W) or (H, W, C) pixel data to a single brightness channel."""
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.ndim == 2:
        return pixels
    if pixels.ndim == 3 and pixels.shape[2] == 1:
        return pixels[:, :, 0]
    if pixels.ndim == 3 and pixels.shape[2] == 3:
        return pixels @ LUMA_WEIGHTS
    raise ConfigError(f"expected (H, W) or (H, W, 1|3) pixels, got shape {pixels.shape}")


def background_value(gray: np.ndarray) -> float:
    """Median brightness along the image border."""
    if gray.shape[0] < 2 or gray.shape[1] < 2:
        return float(np.median(gray))
    border = np.concatenate([gray[0, :], gray[-1, :], gray[1:-1, 0], gray[1:-1, -1]])
    return float(np.median(border))


def foreground_mask(
    pixels: np.ndarray, threshold: float = DEFAULT_FOREGROUND_THRESHOLD
) -> tuple[np.ndarray, float]:
    """Boolean foreground mask and the background value it was cut against."""
    gray = luminance(pixels)
    bg = background_value(gray)
    return np.abs(gray - bg) > threshold, bg


@dataclass(frozen=True)
class CrdResult:
    """Connected-region description of one image."""

    region_count: int
    area_ratio: float
    labels: np.ndarray
    background: float


def label_components(mask: np.ndarray) -> tuple[np.ndarray, int]:
    """Two-pass union-find labeling with 8-connectivity; labels start at 1."""
    h, w = mask.shape
    labels = np.zeros((h, w), dtype=np.int64)
    parent: list[int] = [0]

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a: int, b: int) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    next_label = 1
    for i in range(h):
        row = mask[i]
        for j in range(w):
            if not row[j]:
                continue
            neighbors = []
            if j > 0 and labels[i, j - 1]:
                neighbors.append(labels[i, j - 1])
            if i > 0:
                if labels[i - 1, j]:
                    neighbors.append(labels[i - 1, j])
                if j > 0 and labels[i - 1, j - 1]:
                    neighbors.append(labels[i - 1, j - 1])
                if j + 1 < w and labels[i - 1, j + 1]:
                    neighbors.append(labels[i - 1, j + 1])
            if not neighbors:
                labels[i, j] = next_label
                parent.append(next_label)
                next_label += 1
            else:
                keep = min(neighbors)
                labels[i, j] = keep
                for other in neighbors:
                    union(keep, other)

    remap: dict[int, int] = {}
    count = 0
    for i in range(h):
        for j in range(w):
            if labels[i, j]:
                root = find(labels[i, j])
                if root not in remap:
                    count += 1
                    remap[root] = count
                labels[i, j] = remap[root]
    return labels, count


def connected_regions(
    pixels: np.ndarray, threshold: float = DEFAULT_FOREGROUND_THRESHOLD
) -> CrdResult:
    """Count 8-connected foreground regions and the foreground area fraction."""
    mask, bg = foreground_mask(pixels, threshold)
    labels, count = label_components(mask)
    ratio = float(np.count_nonzero(mask)) / mask.size
    return CrdResult(region_count=count, area_ratio=ratio, labels=labels, background=bg)


def mse(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigError(f"mse shapes differ: {a.shape} vs {b.shape}")
    diff = a - b
    return float(np.mean(diff * diff))


def alpha_iou(a: np.ndarray, b: np.ndarray, threshold: float = 0.5) -> float:
    """Intersection over union of two coverage maps binarized at ``threshold``.

    Two empty masks overlap perfectly by convention.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigError(f"alpha_iou shapes differ: {a.shape} vs {b.shape}")
    ma = a >= threshold
    mb = b >= threshold
    union = np.count_nonzero(ma | mb)
    if union == 0:
        return 1.0
    return float(np.count_nonzero(ma & mb)) / union
