"""Color and texture histogram features shared by grouping and classification.

Color: 25 bins per HSV channel (75 total).  Texture: per RGB channel, gradient
orientation in 8 bins crossed with gradient magnitude in 10 bins (240 total).
Each histogram block is L1-normalized to sum to 1.
"""

from __future__ import annotations

import numpy as np

COLOR_BINS = 25
ORIENT_BINS = 8
MAG_BINS = 10
COLOR_DIM = COLOR_BINS * 3
TEXTURE_DIM = ORIENT_BINS * MAG_BINS * 3

# sqrt(2) * 255 is the largest possible centered-difference gradient magnitude
_MAG_RANGE = 361.0


def rgb_to_hsv(img: np.ndarray) -> np.ndarray:
    """Vectorized RGB -> HSV, all channels scaled to [0, 1]."""
    rgb = img.astype(np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    delta = mx - mn

    h = np.zeros_like(mx)
    nz = delta > 0
    rmax = nz & (mx == r)
    gmax = nz & ~rmax & (mx == g)
    bmax = nz & ~rmax & ~gmax
    h[rmax] = ((g[rmax] - b[rmax]) / delta[rmax]) % 6.0
    h[gmax] = (b[gmax] - r[gmax]) / delta[gmax] + 2.0
    h[bmax] = (r[bmax] - g[bmax]) / delta[bmax] + 4.0
    h /= 6.0

    s = np.zeros_like(mx)
    pos = mx > 0
    s[pos] = delta[pos] / mx[pos]
    return np.stack([h, s, mx], axis=-1)


def color_bin_indices(img: np.ndarray) -> np.ndarray:
    """Per-pixel HSV bin index in [0, COLOR_BINS) for each channel."""
    hsv = rgb_to_hsv(img)
    return np.minimum((hsv * COLOR_BINS).astype(np.intp), COLOR_BINS - 1)


def texture_bin_indices(img: np.ndarray) -> np.ndarray:
    """Per-pixel texture bin index in [0, ORIENT_BINS*MAG_BINS) per channel."""
    chan = img.astype(np.float64)
    dy, dx = np.gradient(chan, axis=(0, 1))
    mag = np.hypot(dx, dy)
    orient = np.arctan2(dy, dx)  # [-pi, pi]
    obin = np.minimum(((orient + np.pi) / (2 * np.pi) * ORIENT_BINS).astype(np.intp), ORIENT_BINS - 1)
    mbin = np.minimum((mag / _MAG_RANGE * MAG_BINS).astype(np.intp), MAG_BINS - 1)
    return obin * MAG_BINS + mbin


def _normalize_rows(hist: np.ndarray) -> np.ndarray:
    totals = hist.sum(axis=1, keepdims=True)
    totals[totals == 0] = 1.0
    return hist / totals


def segment_color_histograms(img: np.ndarray, labels: np.ndarray, n_segments: int) -> np.ndarray:
    """(n_segments, 75) normalized HSV histogram per segment label."""
    bins = color_bin_indices(img)
    flat_labels = labels.ravel()
    hist = np.zeros((n_segments, COLOR_DIM), dtype=np.float64)
    for c in range(3):
        idx = flat_labels * COLOR_DIM + c * COLOR_BINS + bins[..., c].ravel()
        hist.ravel()[:] += np.bincount(idx, minlength=n_segments * COLOR_DIM)
    return _normalize_rows(hist)


def segment_texture_histograms(img: np.ndarray, labels: np.ndarray, n_segments: int) -> np.ndarray:
    """(n_segments, 240) normalized gradient-orientation histogram per segment."""
    bins = texture_bin_indices(img)
    flat_labels = labels.ravel()
    block = ORIENT_BINS * MAG_BINS
    hist = np.zeros((n_segments, TEXTURE_DIM), dtype=np.float64)
    for c in range(3):
        idx = flat_labels * TEXTURE_DIM + c * block + bins[..., c].ravel()
        hist.ravel()[:] += np.bincount(idx, minlength=n_segments * TEXTURE_DIM)
    return _normalize_rows(hist)


def crop_feature(img: np.ndarray) -> np.ndarray:
    """Whole-image feature vector: color histogram then texture histogram."""
    labels = np.zeros(img.shape[:2], dtype=np.intp)
    color = segment_color_histograms(img, labels, 1)[0]
    texture = segment_texture_histograms(img, labels, 1)[0]
    return np.concatenate([color, texture])


def histogram_intersection(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.minimum(a, b).sum())


def chi2_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Chi-squared histogram distance, 0 for identical histograms."""
    diff = a - b
    denom = a + b
    mask = denom > 0
    return float(0.5 * np.sum(diff[mask] ** 2 / denom[mask]))
