"""Raster image plumbing: load/save, crop, bilinear resize.

Images are numpy arrays of shape (height, width, 3), dtype uint8, RGB.
All operations return new arrays and never mutate their inputs.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

from .errors import IoFailure, OutOfBounds
from .geometry import Box


def new_image(width: int, height: int, color=(0, 0, 0)) -> np.ndarray:
    if width < 1 or height < 1:
        raise ValueError(f"image sides must be >= 1, got {width}x{height}")
    img = np.empty((height, width, 3), dtype=np.uint8)
    img[:, :] = np.asarray(color, dtype=np.uint8)
    return img


def validate_image(img: np.ndarray) -> np.ndarray:
    if not isinstance(img, np.ndarray) or img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) array, got shape {getattr(img, 'shape', None)}")
    if img.dtype != np.uint8:
        raise ValueError(f"expected uint8 pixels, got {img.dtype}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError("image must have at least one pixel")
    return img


def load_image(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except OSError as exc:
        raise IoFailure(f"cannot read image {path}: {exc}") from exc


def save_image(img: np.ndarray, path) -> None:
    validate_image(img)
    try:
        Image.fromarray(img, mode="RGB").save(path)
    except OSError as exc:
        raise IoFailure(f"cannot write image {path}: {exc}") from exc


def crop(img: np.ndarray, box: Box) -> np.ndarray:
    h, w = img.shape[:2]
    if not box.fits_in(w, h):
        raise OutOfBounds(f"box {box} exceeds image {w}x{h}")
    return img[box.ymin : box.ymax, box.xmin : box.xmax].copy()


def embed(img: np.ndarray, box: Box, patch: np.ndarray) -> np.ndarray:
    """Return a copy of img with patch pasted over box (sizes must match)."""
    h, w = img.shape[:2]
    if not box.fits_in(w, h):
        raise OutOfBounds(f"box {box} exceeds image {w}x{h}")
    if patch.shape[:2] != (box.height, box.width):
        raise ValueError(f"patch {patch.shape[:2]} does not match box {box.height}x{box.width}")
    out = img.copy()
    out[box.ymin : box.ymax, box.xmin : box.xmax] = patch
    return out


def resize_exact(img: np.ndarray, width: int, height: int) -> np.ndarray:
    """Bilinear resample to an exact size; deterministic."""
    if width < 1 or height < 1:
        raise ValueError(f"target sides must be >= 1, got {width}x{height}")
    src_h, src_w = img.shape[:2]
    if (src_w, src_h) == (width, height):
        return img.copy()
    # Sample at output pixel centers mapped back into source coordinates.
    xs = (np.arange(width, dtype=np.float64) + 0.5) * (src_w / width) - 0.5
    ys = (np.arange(height, dtype=np.float64) + 0.5) * (src_h / height) - 0.5
    xs = np.clip(xs, 0.0, src_w - 1.0)
    ys = np.clip(ys, 0.0, src_h - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, src_w - 1)
    y1 = np.minimum(y0 + 1, src_h - 1)
    fx = (xs - x0)[None, :, None]
    fy = (ys - y0)[:, None, None]
    src = img.astype(np.float64)
    top = src[y0[:, None], x0[None, :]] * (1.0 - fx) + src[y0[:, None], x1[None, :]] * fx
    bot = src[y1[:, None], x0[None, :]] * (1.0 - fx) + src[y1[:, None], x1[None, :]] * fx
    out = top * (1.0 - fy) + bot * fy
    return np.rint(out).clip(0, 255).astype(np.uint8)


def resize_preserve_aspect(img: np.ndarray, target_long_side: int) -> np.ndarray:
    """Shrink so the longer side equals target_long_side; never upscales."""
    if target_long_side < 1:
        raise ValueError("target_long_side must be >= 1")
    h, w = img.shape[:2]
    long_side = max(w, h)
    if long_side <= target_long_side:
        return img.copy()
    scale = target_long_side / long_side
    if w >= h:
        new_w, new_h = target_long_side, max(1, round(h * scale))
    else:
        new_w, new_h = max(1, round(w * scale)), target_long_side
    return resize_exact(img, new_w, new_h)


def resize_mask_nearest(mask: np.ndarray, width: int, height: int) -> np.ndarray:
    """Nearest-neighbor resample for boolean masks (keeps values binary)."""
    src_h, src_w = mask.shape[:2]
    if (src_w, src_h) == (width, height):
        return mask.copy()
    xs = np.minimum((np.arange(width) + 0.5) * (src_w / width), src_w - 1).astype(np.intp)
    ys = np.minimum((np.arange(height) + 0.5) * (src_h / height), src_h - 1).astype(np.intp)
    return mask[ys[:, None], xs[None, :]]


def atomic_replace(tmp_path, final_path) -> None:
    """Publish a fully written temp file under its final name."""
    try:
        os.replace(tmp_path, final_path)
    except OSError as exc:
        raise IoFailure(f"cannot move {tmp_path} to {final_path}: {exc}") from exc
