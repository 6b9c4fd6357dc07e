"""Detection metrics: per-class AP, mAP, AP extrema, and recall.

Matching follows the usual protocol: within each class, detections are taken
in descending score order (ties keep insertion order) and greedily claim the
highest-IoU unmatched ground-truth box of the same class in the same image
when that IoU reaches the matching threshold.  AP integrates the
all-points-interpolated precision envelope over recall.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .annotations import Annotation
from .errors import NoGroundTruth, ParseError, ZeroGroundTruth
from .geometry import Box, iou


@dataclass
class Detection:
    image_filename: str
    label: str
    box: Box
    score: float

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must be in [0, 1], got {self.score}")


@dataclass
class MatchOutcome:
    tp_flags: list[bool]  # aligned with the input detection order
    gt_matched: dict[tuple[str, str], list[bool]]  # (image, label) -> per-gt flags
    class_order: dict[str, list[int]]  # label -> detection indices, score-descending


def match_detections(
    detections: list[Detection],
    ground_truth: list[Annotation],
    iou_threshold: float = 0.5,
) -> MatchOutcome:
    if not (0.0 < iou_threshold < 1.0):
        raise ValueError("iou_threshold must be in (0, 1)")
    gt_boxes: dict[tuple[str, str], list[Box]] = {}
    for ann in ground_truth:
        for obj in ann.objects:
            gt_boxes.setdefault((ann.image_filename, obj.label), []).append(obj.box)
    gt_matched = {key: [False] * len(boxes) for key, boxes in gt_boxes.items()}

    labels: dict[str, list[int]] = {}
    for i, det in enumerate(detections):
        labels.setdefault(det.label, []).append(i)

    tp_flags = [False] * len(detections)
    class_order: dict[str, list[int]] = {}
    for label, indices in labels.items():
        order = sorted(indices, key=lambda i: -detections[i].score)
        class_order[label] = order
        for i in order:
            det = detections[i]
            key = (det.image_filename, det.label)
            boxes = gt_boxes.get(key, [])
            matched = gt_matched.get(key, [])
            best_iou = 0.0
            best_j = -1
            for j, gt in enumerate(boxes):
                if matched[j]:
                    continue
                overlap = iou(det.box, gt)
                if overlap > best_iou:
                    best_iou = overlap
                    best_j = j
            if best_j >= 0 and best_iou >= iou_threshold:
                tp_flags[i] = True
                matched[best_j] = True
    return MatchOutcome(tp_flags=tp_flags, gt_matched=gt_matched, class_order=class_order)


def average_precision(tp_flags: list[bool], total_gt: int) -> float:
    """Area under the interpolated precision-recall curve."""
    if total_gt == 0:
        raise ZeroGroundTruth("class has no ground-truth boxes")
    if not tp_flags:
        return 0.0
    precisions = []
    recalls = []
    tp = 0
    for k, flag in enumerate(tp_flags, start=1):
        if flag:
            tp += 1
        precisions.append(tp / k)
        recalls.append(tp / total_gt)
    # Monotone envelope from the right, then sum rectangle areas where
    # recall advances.
    for k in range(len(precisions) - 2, -1, -1):
        precisions[k] = max(precisions[k], precisions[k + 1])
    ap = 0.0
    prev_recall = 0.0
    for p, r in zip(precisions, recalls):
        if r > prev_recall:
            ap += (r - prev_recall) * p
            prev_recall = r
    return ap


@dataclass
class MetricsReport:
    per_class_ap: dict[str, float]
    map_score: float
    ap_max: float
    ap_min: float
    recall_score: float
    total_gt: int = 0
    total_detections: int = 0

    def to_dict(self) -> dict:
        return {
            "mAP": self.map_score,
            "AP_max": self.ap_max,
            "AP_min": self.ap_min,
            "recall": self.recall_score,
            "per_class_ap": dict(sorted(self.per_class_ap.items())),
            "total_ground_truth": self.total_gt,
            "total_detections": self.total_detections,
        }


def compute_report(
    detections: list[Detection],
    ground_truth: list[Annotation],
    iou_threshold: float = 0.5,
    score_suppress: float | None = None,
) -> MetricsReport:
    """Evaluate detections; classes without ground truth are excluded."""
    gt_counts: dict[str, int] = {}
    for ann in ground_truth:
        for obj in ann.objects:
            gt_counts[obj.label] = gt_counts.get(obj.label, 0) + 1
    total_gt = sum(gt_counts.values())
    if total_gt == 0:
        raise NoGroundTruth("no ground-truth boxes to evaluate against")

    if score_suppress is not None:
        detections = [d for d in detections if d.score >= score_suppress]
    outcome = match_detections(detections, ground_truth, iou_threshold)

    per_class_ap = {}
    for label, total in gt_counts.items():
        order = outcome.class_order.get(label, [])
        flags = [outcome.tp_flags[i] for i in order]
        per_class_ap[label] = average_precision(flags, total)
    aps = list(per_class_ap.values())
    matched = sum(sum(flags) for flags in outcome.gt_matched.values())
    return MetricsReport(
        per_class_ap=per_class_ap,
        map_score=sum(aps) / len(aps),
        ap_max=max(aps),
        ap_min=min(aps),
        recall_score=matched / total_gt,
        total_gt=total_gt,
        total_detections=len(detections),
    )


def pr_curves(
    detections: list[Detection],
    ground_truth: list[Annotation],
    iou_threshold: float = 0.5,
) -> dict[str, tuple[list[float], list[float]]]:
    """Per-class raw (recall, precision) points for plotting."""
    gt_counts: dict[str, int] = {}
    for ann in ground_truth:
        for obj in ann.objects:
            gt_counts[obj.label] = gt_counts.get(obj.label, 0) + 1
    outcome = match_detections(detections, ground_truth, iou_threshold)
    curves = {}
    for label, total in gt_counts.items():
        recalls = [0.0]
        precisions = [1.0]
        tp = 0
        for k, i in enumerate(outcome.class_order.get(label, []), start=1):
            if outcome.tp_flags[i]:
                tp += 1
            recalls.append(tp / total)
            precisions.append(tp / k)
        curves[label] = (recalls, precisions)
    return curves


ROW_ORDER = ("mAP", "AP_max", "AP_min", "recall")


def render_text_table(report: MetricsReport, column: str = "dataset") -> str:
    """Aligned metric rows followed by the per-class AP breakdown."""
    rows = {
        "mAP": report.map_score,
        "AP_max": report.ap_max,
        "AP_min": report.ap_min,
        "recall": report.recall_score,
    }
    name_width = max(
        [len(r) for r in ROW_ORDER] + [len(label) for label in report.per_class_ap] + [len("class")]
    )
    lines = [f"{'':<{name_width}}  {column}"]
    for row in ROW_ORDER:
        lines.append(f"{row:<{name_width}}  {rows[row]:.4f}")
    lines.append("")
    lines.append(f"{'class':<{name_width}}  AP")
    for label in sorted(report.per_class_ap):
        lines.append(f"{label:<{name_width}}  {report.per_class_ap[label]:.4f}")
    return "\n".join(lines) + "\n"


def save_detections_jsonl(detections: list[Detection], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in detections:
            fh.write(
                json.dumps(
                    {
                        "image": d.image_filename,
                        "label": d.label,
                        "xmin": d.box.xmin,
                        "ymin": d.box.ymin,
                        "width": d.box.width,
                        "height": d.box.height,
                        "score": d.score,
                    }
                )
                + "\n"
            )


def load_detections_jsonl(path) -> list[Detection]:
    detections = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                detections.append(
                    Detection(
                        image_filename=rec["image"],
                        label=rec["label"],
                        box=Box(rec["xmin"], rec["ymin"], rec["width"], rec["height"]),
                        score=float(rec["score"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{path}:{lineno}: bad detection record") from exc
    return detections


def write_report_json(report: MetricsReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
