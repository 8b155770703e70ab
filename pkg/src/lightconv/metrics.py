"""Detection evaluation: IoU matching, PR curves, AP, mAP, and F1.

Detections are matched greedily in descending confidence order against
unmatched ground-truth boxes of the same image and class (best IoU wins,
first index on ties). AP integrates the precision envelope over all recall
change points; mAP averages AP over the classes that have ground truth.
Aggregate precision/recall/F1 pool true/false positives over every class
at a single operating confidence threshold.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError

Box = tuple[float, float, float, float]


def _validate_box(box) -> Box:
    x1, y1, x2, y2 = (float(v) for v in box)
    if not (x1 < x2 and y1 < y2):
        raise ValueError(f"box corners must satisfy x1 < x2 and y1 < y2, got {box}")
    return (x1, y1, x2, y2)


@dataclass(frozen=True)
class DetectionRecord:
    image_id: str
    class_id: str
    box: Box
    confidence: float

    def __post_init__(self):
        object.__setattr__(self, "box", _validate_box(self.box))
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class GroundTruthRecord:
    image_id: str
    class_id: str
    box: Box

    def __post_init__(self):
        object.__setattr__(self, "box", _validate_box(self.box))


def iou(a: Box, b: Box) -> float:
    """Intersection area over union area of two axis-aligned boxes."""
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    if area_a <= 0 or area_b <= 0:
        raise ValueError(f"degenerate zero-area box: {a if area_a <= 0 else b}")
    ix = min(ax2, bx2) - max(ax1, bx1)
    iy = min(ay2, by2) - max(ay1, by1)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (area_a + area_b - inter)


@dataclass
class MatchResult:
    """Ranked TP/FP flags for one class plus false-negative accounting."""

    flags: list[bool]
    confidences: list[float]
    num_ground_truth: int

    @property
    def false_negatives(self) -> int:
        return self.num_ground_truth - sum(self.flags)


def match_detections(detections, ground_truths, class_id, iou_threshold: float = 0.5
                     ) -> MatchResult:
    """Greedy one-to-one matching of one class's detections to ground truth."""
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold must lie in (0, 1), got {iou_threshold}")
    dets = [d for d in detections if d.class_id == class_id]
    gts = [g for g in ground_truths if g.class_id == class_id]
    # stable sort keeps input order among equal confidences
    dets = sorted(dets, key=lambda d: -d.confidence)

    matched = [False] * len(gts)
    flags = []
    for det in dets:
        best_iou = 0.0
        best_idx = -1
        for idx, gt in enumerate(gts):
            if matched[idx] or gt.image_id != det.image_id:
                continue
            overlap = iou(det.box, gt.box)
            if overlap > best_iou:
                best_iou = overlap
                best_idx = idx
        if best_idx >= 0 and best_iou >= iou_threshold:
            matched[best_idx] = True
            flags.append(True)
        else:
            flags.append(False)
    return MatchResult(
        flags=flags,
        confidences=[d.confidence for d in dets],
        num_ground_truth=len(gts),
    )


def pr_curve(flags, total_gt: int) -> list[tuple[float, float]]:
    """(recall, precision) after each ranked detection."""
    points = []
    tp = 0
    for rank, is_tp in enumerate(flags, start=1):
        tp += int(is_tp)
        recall = tp / total_gt if total_gt else 0.0
        points.append((recall, tp / rank))
    return points


def average_precision(flags, total_gt: int) -> float:
    """Area under the monotone precision envelope over all recall points.

    With detections present but no ground truth the value is defined as 0;
    :func:`summarize` flags those classes and keeps them out of the mAP mean.
    """
    if total_gt < 0:
        raise ValueError(f"total_gt must be >= 0, got {total_gt}")
    if total_gt == 0:
        return 0.0
    if not flags:
        return 0.0
    points = pr_curve(flags, total_gt)
    recalls = np.concatenate([[0.0], [p[0] for p in points], [1.0]])
    precisions = np.concatenate([[0.0], [p[1] for p in points], [0.0]])
    # right-max envelope makes precision non-increasing in recall
    for i in range(precisions.size - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])
    changes = np.nonzero(recalls[1:] != recalls[:-1])[0]
    return float(np.sum((recalls[changes + 1] - recalls[changes]) * precisions[changes + 1]))


@dataclass
class ClassMetrics:
    class_id: str
    average_precision: float
    true_positives: int
    false_positives: int
    false_negatives: int
    num_ground_truth: int
    pr_points: list[tuple[float, float]] = field(default_factory=list)
    no_ground_truth: bool = False

    def to_dict(self) -> dict:
        return {
            "class_id": self.class_id,
            "ap": self.average_precision,
            "true_positives": self.true_positives,
            "false_positives": self.false_positives,
            "false_negatives": self.false_negatives,
            "num_ground_truth": self.num_ground_truth,
            "pr_curve": [[r, p] for r, p in self.pr_points],
            "no_ground_truth": self.no_ground_truth,
        }


@dataclass
class MetricsReport:
    """Per-class APs plus pooled precision/recall/F1 at one threshold."""

    per_class: list[ClassMetrics]
    mean_average_precision: float
    precision: float
    recall: float
    f1: float
    num_classes: int
    iou_threshold: float
    confidence_threshold: float

    def to_dict(self) -> dict:
        return {
            "per_class": [c.to_dict() for c in self.per_class],
            "mAP": self.mean_average_precision,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "num_classes": self.num_classes,
            "iou_threshold": self.iou_threshold,
            "confidence_threshold": self.confidence_threshold,
        }


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall (0 when both are 0)."""
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def summarize(detections, ground_truths, iou_threshold: float = 0.5,
              confidence_threshold: float = 0.25) -> MetricsReport:
    """Evaluate all classes; requires at least one ground-truth record."""
    ground_truths = list(ground_truths)
    detections = list(detections)
    if not ground_truths:
        raise ValueError("empty ground truth: at least one record is required")

    gt_classes = {g.class_id for g in ground_truths}
    det_classes = {d.class_id for d in detections}
    all_classes = sorted(gt_classes | det_classes)

    per_class = []
    pooled_tp = 0
    pooled_fp = 0
    total_gt = len(ground_truths)
    ap_values = []
    for class_id in all_classes:
        result = match_detections(detections, ground_truths, class_id, iou_threshold)
        ap = average_precision(result.flags, result.num_ground_truth)
        # detections below the operating threshold form a suffix of the
        # confidence-ranked list, so thresholding is a prefix cut
        kept = [f for f, c in zip(result.flags, result.confidences)
                if c >= confidence_threshold]
        tp = sum(kept)
        fp = len(kept) - tp
        fn = result.num_ground_truth - tp
        pooled_tp += tp
        pooled_fp += fp
        has_gt = result.num_ground_truth > 0
        if has_gt:
            ap_values.append(ap)
        per_class.append(ClassMetrics(
            class_id=class_id,
            average_precision=ap,
            true_positives=tp,
            false_positives=fp,
            false_negatives=fn,
            num_ground_truth=result.num_ground_truth,
            pr_points=pr_curve(result.flags, result.num_ground_truth),
            no_ground_truth=not has_gt,
        ))

    precision = pooled_tp / (pooled_tp + pooled_fp) if pooled_tp + pooled_fp else 0.0
    recall = pooled_tp / total_gt
    return MetricsReport(
        per_class=per_class,
        mean_average_precision=float(np.mean(ap_values)),
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
        num_classes=len(ap_values),
        iou_threshold=iou_threshold,
        confidence_threshold=confidence_threshold,
    )


# ---------------------------------------------------------------------------
# CSV interfaces
# ---------------------------------------------------------------------------

_DET_HEADER = ["image_id", "class_id", "x1", "y1", "x2", "y2", "confidence"]
_GT_HEADER = ["image_id", "class_id", "x1", "y1", "x2", "y2"]


def _read_rows(path, expected_header):
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file, header row required") from None
        if [h.strip() for h in header] != expected_header:
            raise FormatError(
                f"{path}: header {header!r} does not match required "
                f"{','.join(expected_header)!r}"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected_header):
                raise FormatError(
                    f"{path}:{line_no}: expected {len(expected_header)} fields, got {len(row)}"
                )
            yield line_no, row


def read_detections_csv(path) -> list[DetectionRecord]:
    records = []
    for line_no, row in _read_rows(path, _DET_HEADER):
        try:
            records.append(DetectionRecord(
                image_id=row[0].strip(),
                class_id=row[1].strip(),
                box=tuple(float(v) for v in row[2:6]),
                confidence=float(row[6]),
            ))
        except ValueError as exc:
            raise FormatError(f"{path}:{line_no}: {exc}") from exc
    return records


def read_ground_truth_csv(path) -> list[GroundTruthRecord]:
    records = []
    for line_no, row in _read_rows(path, _GT_HEADER):
        try:
            records.append(GroundTruthRecord(
                image_id=row[0].strip(),
                class_id=row[1].strip(),
                box=tuple(float(v) for v in row[2:6]),
            ))
        except ValueError as exc:
            raise FormatError(f"{path}:{line_no}: {exc}") from exc
    return records
