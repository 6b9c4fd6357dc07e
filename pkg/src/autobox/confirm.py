"""Classifier gate for extracted boxes.

A box is accepted only when its predicted label is one of the valid
categories and the score strictly exceeds the policy threshold.  The bundled
baseline is a nearest-centroid classifier over color/texture histograms with
a chi-squared distance softmax, so the whole pipeline runs without any neural
network; a file-based scorer protocol lets a real model take its place.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyCategory, ScorerProtocolError
from .features import chi2_distance, crop_feature
from .geometry import Box
from .raster import crop, save_image

REASON_LOW_SCORE = "LowScore"
REASON_INVALID_LABEL = "InvalidLabel"


@dataclass
class ClassScore:
    label: str
    score: float


@dataclass
class ConfirmPolicy:
    score_threshold: float = 0.8
    valid_labels: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if not (0.0 <= self.score_threshold <= 1.0):
            raise ValueError("score_threshold must be in [0, 1]")
        if not self.valid_labels:
            raise ValueError("valid_labels must be non-empty")
        object.__setattr__(self, "valid_labels", frozenset(self.valid_labels))


@dataclass
class HistogramModel:
    """Per-category centroid feature vectors plus a softmax temperature."""

    labels: list[str]
    centroids: np.ndarray  # (n_categories, feature_dim)
    temperature: float = 20.0

    def distances(self, image: np.ndarray) -> np.ndarray:
        feat = crop_feature(image)
        return np.array([chi2_distance(feat, c) for c in self.centroids])

    def distribution(self, image: np.ndarray) -> dict[str, float]:
        logits = -self.temperature * self.distances(image)
        logits -= logits.max()
        probs = np.exp(logits)
        probs /= probs.sum()
        return dict(zip(self.labels, probs.tolist()))

    def classify(self, image: np.ndarray) -> ClassScore:
        dist = self.distribution(image)
        # Ties resolve to the first label in training order.
        best = max(self.labels, key=lambda lb: dist[lb])
        return ClassScore(label=best, score=dist[best])


def train_baseline(
    crops: list[tuple[str, np.ndarray]],
    categories: list[str] | None = None,
    temperature: float = 20.0,
) -> HistogramModel:
    """Fit one centroid per category as the mean crop feature vector."""
    by_label: dict[str, list[np.ndarray]] = {}
    order: list[str] = []
    for label, image in crops:
        if label not in by_label:
            by_label[label] = []
            order.append(label)
        by_label[label].append(crop_feature(image))
    if categories is not None:
        for cat in categories:
            if cat not in by_label:
                raise EmptyCategory(f"category {cat!r} has no training crops")
        order = list(categories)
    if len(order) < 2:
        raise ValueError("need at least 2 categories to train")
    centroids = np.stack([np.mean(by_label[label], axis=0) for label in order])
    return HistogramModel(labels=order, centroids=centroids, temperature=temperature)


@dataclass
class BoxDecision:
    box: Box
    label: str
    score: float
    accepted: bool
    reason: str | None  # REASON_* for rejections, None when accepted


def confirm_boxes(
    img: np.ndarray,
    boxes: list[Box],
    model,
    policy: ConfirmPolicy,
) -> list[BoxDecision]:
    """Gate each box through the classifier; rejections are data, not errors."""
    decisions = []
    for box in boxes:
        result = model.classify(crop(img, box))
        if result.label not in policy.valid_labels:
            decisions.append(BoxDecision(box, result.label, result.score, False, REASON_INVALID_LABEL))
        elif not result.score > policy.score_threshold:
            decisions.append(BoxDecision(box, result.label, result.score, False, REASON_LOW_SCORE))
        else:
            decisions.append(BoxDecision(box, result.label, result.score, True, None))
    return decisions


# --- file-based external scorer protocol ---------------------------------
#
# Request:  <dir>/crops/<crop-id>.png plus <dir>/manifest.tsv with one line
#           per crop: "<crop-id>\t<relative path>".
# Response: one line per crop: "<crop-id>\t<label>\t<score>", score a decimal
#           in [0, 1].  Every requested crop-id must be answered.

SCORER_MANIFEST = "manifest.tsv"
SCORER_RESPONSE = "response.tsv"


def write_scoring_request(crops: list[tuple[str, np.ndarray]], request_dir) -> Path:
    request_dir = Path(request_dir)
    crops_dir = request_dir / "crops"
    crops_dir.mkdir(parents=True, exist_ok=True)
    manifest = request_dir / SCORER_MANIFEST
    lines = []
    for crop_id, image in crops:
        rel = f"crops/{crop_id}.png"
        save_image(image, request_dir / rel)
        lines.append(f"{crop_id}\t{rel}\n")
    with open(manifest, "w", encoding="utf-8") as fh:
        fh.writelines(lines)
    return manifest


def read_scoring_response(path, expected_ids: list[str]) -> dict[str, ClassScore]:
    path = Path(path)
    if not path.exists():
        raise ScorerProtocolError(f"response file {path} does not exist")
    scores: dict[str, ClassScore] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ScorerProtocolError(f"line {lineno}: expected 3 fields, got {len(parts)}")
            crop_id, label, raw = parts
            try:
                score = float(raw)
            except ValueError as exc:
                raise ScorerProtocolError(f"crop {crop_id}: bad score {raw!r}") from exc
            if not (0.0 <= score <= 1.0):
                raise ScorerProtocolError(f"crop {crop_id}: score {score} outside [0, 1]")
            scores[crop_id] = ClassScore(label=label, score=score)
    for crop_id in expected_ids:
        if crop_id not in scores:
            raise ScorerProtocolError(f"crop {crop_id}: missing from response")
    return scores


def poll_scoring_response(
    path,
    expected_ids: list[str],
    timeout: float = 60.0,
    interval: float = 0.2,
) -> dict[str, ClassScore]:
    """Wait for the external scorer to publish its response file."""
    deadline = time.monotonic() + timeout
    path = Path(path)
    while not path.exists():
        if time.monotonic() >= deadline:
            raise ScorerProtocolError(f"timed out after {timeout}s waiting for {path}")
        time.sleep(interval)
    return read_scoring_response(path, expected_ids)
