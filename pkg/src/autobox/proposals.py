"""Region proposals via hierarchical grouping of an over-segmented image.

Starting from the over-segmentation, the most similar pair of adjacent
segments is merged repeatedly until one region remains; the bounding box of
every initial segment and every merged region is recorded.  Similarity is the
sum of up to four components (color, texture, size, fill), each in [0, 1].
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass

import numpy as np

from .geometry import Box
from .segmentation import oversegment, segment_count
from . import features


@dataclass
class Segment:
    id: int
    size: int
    bbox: Box
    color_hist: np.ndarray
    texture_hist: np.ndarray


@dataclass
class ProposeConfig:
    scale: float = 200.0
    min_segment_size: int = 50
    use_color: bool = True
    use_texture: bool = True
    use_size: bool = True
    use_fill: bool = True

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.min_segment_size < 1:
            raise ValueError("min_segment_size must be >= 1")


def segments_from_labels(img: np.ndarray, labels: np.ndarray) -> list[Segment]:
    """Build per-segment size, tight bbox, and feature histograms."""
    n = segment_count(labels)
    flat = labels.ravel()
    sizes = np.bincount(flat, minlength=n)
    height, width = labels.shape
    ys, xs = np.divmod(np.arange(flat.size, dtype=np.int64), width)
    xmin = np.full(n, width, dtype=np.int64)
    ymin = np.full(n, height, dtype=np.int64)
    xmax = np.full(n, -1, dtype=np.int64)
    ymax = np.full(n, -1, dtype=np.int64)
    np.minimum.at(xmin, flat, xs)
    np.minimum.at(ymin, flat, ys)
    np.maximum.at(xmax, flat, xs)
    np.maximum.at(ymax, flat, ys)
    color = features.segment_color_histograms(img, labels, n)
    texture = features.segment_texture_histograms(img, labels, n)
    return [
        Segment(
            id=i,
            size=int(sizes[i]),
            bbox=Box(int(xmin[i]), int(ymin[i]), int(xmax[i] - xmin[i] + 1), int(ymax[i] - ymin[i] + 1)),
            color_hist=color[i],
            texture_hist=texture[i],
        )
        for i in range(n)
    ]


def adjacency_pairs(labels: np.ndarray) -> set[tuple[int, int]]:
    """Unordered pairs of segment ids sharing a 4-neighbor pixel edge."""
    right = np.stack([labels[:, :-1].ravel(), labels[:, 1:].ravel()], axis=1)
    down = np.stack([labels[:-1, :].ravel(), labels[1:, :].ravel()], axis=1)
    pairs = np.concatenate([right, down])
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    lo = pairs.min(axis=1)
    hi = pairs.max(axis=1)
    return {(int(a), int(b)) for a, b in zip(lo.tolist(), hi.tolist())}


def similarity(
    s1: Segment,
    s2: Segment,
    image_area: int,
    use_color: bool = True,
    use_texture: bool = True,
    use_size: bool = True,
    use_fill: bool = True,
) -> float:
    """Grouping similarity for adjacent segments; sum of enabled components."""
    score = 0.0
    if use_color:
        score += features.histogram_intersection(s1.color_hist, s2.color_hist)
    if use_texture:
        score += features.histogram_intersection(s1.texture_hist, s2.texture_hist)
    if use_size:
        score += 1.0 - (s1.size + s2.size) / image_area
    if use_fill:
        bb = _union_area(s1.bbox, s2.bbox)
        score += 1.0 - (bb - s1.size - s2.size) / image_area
    return score


def _union_area(a: Box, b: Box) -> int:
    w = max(a.xmax, b.xmax) - min(a.xmin, b.xmin)
    h = max(a.ymax, b.ymax) - min(a.ymin, b.ymin)
    return w * h


def _merge_segments(s1: Segment, s2: Segment, new_id: int) -> Segment:
    total = s1.size + s2.size
    # Standard propagation: merged histogram is the size-weighted average.
    color = (s1.color_hist * s1.size + s2.color_hist * s2.size) / total
    texture = (s1.texture_hist * s1.size + s2.texture_hist * s2.size) / total
    xmin = min(s1.bbox.xmin, s2.bbox.xmin)
    ymin = min(s1.bbox.ymin, s2.bbox.ymin)
    bbox = Box(
        xmin,
        ymin,
        max(s1.bbox.xmax, s2.bbox.xmax) - xmin,
        max(s1.bbox.ymax, s2.bbox.ymax) - ymin,
    )
    return Segment(id=new_id, size=total, bbox=bbox, color_hist=color, texture_hist=texture)


def propose(img: np.ndarray, config: ProposeConfig | None = None) -> list[Box]:
    """Generate region proposals; deterministic for a fixed image and config."""
    config = config or ProposeConfig()
    labels = oversegment(img, config.scale, config.min_segment_size)
    segments = {s.id: s for s in segments_from_labels(img, labels)}
    image_area = img.shape[0] * img.shape[1]
    flags = dict(
        use_color=config.use_color,
        use_texture=config.use_texture,
        use_size=config.use_size,
        use_fill=config.use_fill,
    )

    neighbors: dict[int, set[int]] = {i: set() for i in segments}
    heap: list[tuple[float, int, int]] = []
    for a, b in sorted(adjacency_pairs(labels)):
        neighbors[a].add(b)
        neighbors[b].add(a)
        heap.append((-similarity(segments[a], segments[b], image_area, **flags), a, b))
    heapq.heapify(heap)

    recorded = [segments[i].bbox for i in sorted(segments)]
    next_id = len(segments)
    alive = set(segments)
    # Ties pop in (id1, id2) lexicographic order because the heap key is
    # (-similarity, id1, id2) with id1 < id2.
    while len(alive) > 1:
        neg_sim, a, b = heapq.heappop(heap)
        if a not in alive or b not in alive:
            continue
        merged = _merge_segments(segments[a], segments[b], next_id)
        next_id += 1
        alive.discard(a)
        alive.discard(b)
        alive.add(merged.id)
        segments[merged.id] = merged
        recorded.append(merged.bbox)

        merged_nbrs = (neighbors[a] | neighbors[b]) - {a, b}
        neighbors[merged.id] = merged_nbrs
        for n in merged_nbrs:
            neighbors[n].discard(a)
            neighbors[n].discard(b)
            neighbors[n].add(merged.id)
        del neighbors[a], neighbors[b]
        for n in sorted(merged_nbrs):
            lo, hi = (n, merged.id) if n < merged.id else (merged.id, n)
            heapq.heappush(
                heap, (-similarity(segments[lo], segments[hi], image_area, **flags), lo, hi)
            )

    return list(dict.fromkeys(recorded))


def dump_proposals_jsonl(boxes: list[Box], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for b in boxes:
            fh.write(
                json.dumps({"xmin": b.xmin, "ymin": b.ymin, "width": b.width, "height": b.height})
                + "\n"
            )


def load_proposals_jsonl(path) -> list[Box]:
    boxes = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                boxes.append(Box(rec["xmin"], rec["ymin"], rec["width"], rec["height"]))
    return boxes
