"""Reduce a proposal set to exactly the declared number of object boxes.

Degenerate proposals are filtered by area and aspect ratio, then merge passes
run under an adaptive IoU threshold until exactly n_objects boxes remain.
After each pass the threshold moves by (count - n_objects)/100 and is clamped
to [0, iou_threshold_max].  A pass that undershoots (fewer boxes than
n_objects) is rolled back before the threshold moves, since discarded boxes
cannot be recovered otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientProposals, NonConvergence
from .geometry import Box, iou, union_box
from .proposals import ProposeConfig, propose

MERGE_MODES = ("union", "representative")


@dataclass
class ExtractConfig:
    initial_iou_threshold: float = 0.1
    area_min: int = 500
    aspect_max: float = 4.0
    iou_threshold_max: float = 0.95
    max_iterations: int = 100
    merge_mode: str = "union"
    # Fraction of the image area above which a proposal is discarded; culls
    # background boxes that would otherwise pin the loop above n_objects.
    area_max_frac: float | None = 0.9

    def __post_init__(self):
        if not (0.0 <= self.initial_iou_threshold < self.iou_threshold_max <= 1.0):
            raise ValueError(
                "need 0 <= initial_iou_threshold < iou_threshold_max <= 1, got "
                f"{self.initial_iou_threshold} / {self.iou_threshold_max}"
            )
        if self.area_min < 1:
            raise ValueError("area_min must be >= 1")
        if self.aspect_max < 1:
            raise ValueError("aspect_max must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.merge_mode not in MERGE_MODES:
            raise ValueError(f"merge_mode must be one of {MERGE_MODES}")
        if self.area_max_frac is not None and not (0.0 < self.area_max_frac <= 1.0):
            raise ValueError("area_max_frac must be in (0, 1]")


@dataclass
class ExtractResult:
    boxes: list[Box]
    iterations_used: int
    final_iou_threshold: float


def filter_proposals(
    boxes: list[Box],
    area_min: int,
    aspect_max: float,
    area_max: int | None = None,
) -> list[Box]:
    """Drop boxes that are too small, too elongated, or (optionally) too large."""
    kept = []
    for b in boxes:
        if b.area < area_min or b.aspect > aspect_max:
            continue
        if area_max is not None and b.area > area_max:
            continue
        kept.append(b)
    return kept


def threshold_step(current_count: int, n_objects: int) -> float:
    """Signed threshold increment: (count - N)/100."""
    if current_count < 1 or n_objects < 1:
        raise ValueError("counts must be >= 1")
    return (current_count - n_objects) / 100.0


def merge_pass(boxes: list[Box], iou_threshold: float, mode: str = "union") -> list[Box]:
    """One pass over the proposals, largest area first.

    Each box either joins the first accepted box it overlaps beyond the
    threshold (union mode widens that box, representative mode drops the
    newcomer) or is accepted as-is.
    """
    if mode not in MERGE_MODES:
        raise ValueError(f"mode must be one of {MERGE_MODES}")
    ordered = sorted(boxes, key=lambda b: (-b.area, b))
    accepted: list[Box] = []
    for box in ordered:
        absorbed = False
        for i, kept in enumerate(accepted):
            if iou(box, kept) > iou_threshold:
                if mode == "union":
                    accepted[i] = union_box(box, kept)
                absorbed = True
                break
        if not absorbed:
            accepted.append(box)
    return accepted


def _clamp(value: float, upper: float) -> float:
    return min(max(value, 0.0), upper)


def merge_until(boxes: list[Box], n_objects: int, config: ExtractConfig | None = None) -> ExtractResult:
    """Run merge passes until exactly n_objects boxes remain.

    Raises InsufficientProposals when the input already holds fewer boxes
    than requested and NonConvergence when max_iterations passes do not
    land on the target count.
    """
    config = config or ExtractConfig()
    if n_objects < 1:
        raise ValueError("n_objects must be >= 1")
    if len(boxes) < n_objects:
        raise InsufficientProposals(f"{len(boxes)} proposals for {n_objects} objects")
    current = list(boxes)
    thr = _clamp(config.initial_iou_threshold, config.iou_threshold_max)
    iterations = 0
    while len(current) != n_objects:
        if iterations >= config.max_iterations:
            raise NonConvergence(
                f"still {len(current)} boxes after {iterations} passes (target {n_objects})"
            )
        result = merge_pass(current, thr, config.merge_mode)
        iterations += 1
        if len(result) < n_objects:
            # Undershoot: discard the pass, only the threshold moves.
            thr = _clamp(thr + threshold_step(len(result), n_objects), config.iou_threshold_max)
        else:
            current = result
            thr = _clamp(thr + threshold_step(len(current), n_objects), config.iou_threshold_max)
    return ExtractResult(boxes=current, iterations_used=iterations, final_iou_threshold=thr)


def extract(
    img: np.ndarray,
    n_objects: int,
    config: ExtractConfig | None = None,
    propose_config: ProposeConfig | None = None,
) -> ExtractResult:
    """Propose, filter, and merge down to exactly n_objects boxes."""
    config = config or ExtractConfig()
    proposals = propose(img, propose_config)
    area_max = None
    if config.area_max_frac is not None:
        area_max = int(config.area_max_frac * img.shape[0] * img.shape[1])
    filtered = filter_proposals(proposals, config.area_min, config.aspect_max, area_max)
    return merge_until(filtered, n_objects, config)
