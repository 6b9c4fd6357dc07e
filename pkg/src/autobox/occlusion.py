"""Occlusion simulation: masked patch compositing and black blocks.

The compositing rule is exact and per-pixel: where the placed mask bit is 1
the output takes the patch pixel, everywhere else the original pixel.  No
blending or feathering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptyForeground, EmptyPatchDb, NoOverlap
from .geometry import Box
from .patchdb import Patch, PatchDb
from .raster import crop, resize_exact, resize_mask_nearest

DIRECTIONS = ("left", "right", "up", "down")
MODES = ("black", "patch")


@dataclass
class OcclusionSpec:
    mode: str = "black"
    direction: str = "left"
    coverage: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        if not (0.0 < self.coverage <= 1.0):
            raise ValueError("coverage must be in (0, 1]")


def estimate_background(pixels: np.ndarray, ring: int = 2) -> tuple[int, int, int]:
    """Median color of the border ring; products sit centered in their boxes."""
    h, w = pixels.shape[:2]
    ring = max(1, min(ring, (min(h, w) + 1) // 2))
    border = np.concatenate(
        [
            pixels[:ring, :, :].reshape(-1, 3),
            pixels[-ring:, :, :].reshape(-1, 3),
            pixels[:, :ring, :].reshape(-1, 3),
            pixels[:, -ring:, :].reshape(-1, 3),
        ]
    )
    med = np.median(border, axis=0)
    return tuple(int(v) for v in med)


def make_mask(
    pixels: np.ndarray,
    background_color: tuple[int, int, int],
    tolerance: int = 30,
) -> np.ndarray:
    """Foreground mask: max-channel distance from background above tolerance.

    Only the largest 4-connected component is kept; raises EmptyForeground
    when nothing survives.
    """
    diff = np.abs(pixels.astype(np.int16) - np.asarray(background_color, dtype=np.int16))
    fg = diff.max(axis=2) > tolerance
    if not fg.any():
        raise EmptyForeground("no pixel differs from background beyond tolerance")
    labeled, n = ndimage.label(fg)  # default structure is 4-connectivity
    if n > 1:
        counts = np.bincount(labeled.ravel())
        counts[0] = 0
        fg = labeled == int(np.argmax(counts))
    return fg


def harvest_patch(
    img: np.ndarray,
    box: Box,
    label: str,
    source_image: str,
    background_color: tuple[int, int, int] | None = None,
    tolerance: int = 30,
) -> Patch:
    """Cut a masked product patch out of a confirmed box."""
    pixels = crop(img, box)
    if background_color is None:
        background_color = estimate_background(pixels)
    mask = make_mask(pixels, background_color, tolerance)
    return Patch(pixels=pixels, mask=mask, label=label, source_image=source_image)


def composite(img: np.ndarray, anchor: tuple[int, int], patch: Patch) -> np.ndarray:
    """Overwrite img with patch pixels wherever the placed mask bit is set.

    anchor is the (x, y) of the patch's top-left corner; parts of the patch
    falling outside the image are ignored.
    """
    ax, ay = anchor
    h, w = img.shape[:2]
    ph, pw = patch.pixels.shape[:2]
    x0 = max(ax, 0)
    y0 = max(ay, 0)
    x1 = min(ax + pw, w)
    y1 = min(ay + ph, h)
    if x0 >= x1 or y0 >= y1:
        raise NoOverlap(f"patch at {anchor} lies outside {w}x{h} image")
    out = img.copy()
    sub_mask = patch.mask[y0 - ay : y1 - ay, x0 - ax : x1 - ax]
    region = out[y0:y1, x0:x1]
    region[sub_mask] = patch.pixels[y0 - ay : y1 - ay, x0 - ax : x1 - ax][sub_mask]
    return out


def covered_subregion(box: Box, direction: str, coverage: float) -> Box:
    """Slice of a box entered from one side, spanning `coverage` of that axis."""
    if direction in ("left", "right"):
        span = min(box.width, max(1, round(coverage * box.width)))
        xmin = box.xmin if direction == "left" else box.xmax - span
        return Box(xmin, box.ymin, span, box.height)
    span = min(box.height, max(1, round(coverage * box.height)))
    ymin = box.ymin if direction == "up" else box.ymax - span
    return Box(box.xmin, ymin, box.width, span)


def scale_patch(patch: Patch, width: int, height: int) -> Patch:
    """Resample a patch to span a target region (bilinear pixels, nearest mask)."""
    return Patch(
        pixels=resize_exact(patch.pixels, width, height),
        mask=resize_mask_nearest(patch.mask, width, height),
        label=patch.label,
        source_image=patch.source_image,
    )


def simulate_occlusion(
    img: np.ndarray,
    annotation,
    spec: OcclusionSpec,
    db: PatchDb | None = None,
):
    """Occlude one annotated box; returns (new image, annotation unchanged).

    The target box, and in patch mode the occluding patch, are drawn from a
    generator seeded with spec.rng_seed, so identical inputs give identical
    outputs.  Boxes and labels in the annotation are never modified.
    """
    if not annotation.objects:
        raise ValueError("annotation has no boxes to occlude")
    rng = np.random.default_rng(spec.rng_seed)
    target = annotation.objects[int(rng.integers(len(annotation.objects)))].box
    region = covered_subregion(target, spec.direction, spec.coverage)
    if spec.mode == "black":
        out = img.copy()
        out[region.ymin : region.ymax, region.xmin : region.xmax] = 0
        return out, annotation
    if db is None or len(db) == 0:
        raise EmptyPatchDb("patch mode requires a non-empty patch database")
    patch = db.sample(rng)
    scaled = scale_patch(patch, region.width, region.height)
    if not scaled.mask.any():
        # Nearest-neighbor shrink can drop a sparse mask entirely; the
        # occlusion would be a no-op, which callers treat as unusable.
        raise EmptyForeground(f"patch {patch.source_image} lost its mask at {region.width}x{region.height}")
    return composite(img, (region.xmin, region.ymin), scaled), annotation
