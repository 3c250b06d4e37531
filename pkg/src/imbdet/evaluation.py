"""IoU matching, FPPI-calibrated thresholding and per-class recall reports."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import fileio
from .boxes import BoundingBox, iou
from .classes import ClassTable
from .data import ProposalBatch, Scene
from .errors import InvalidInputError


@dataclass(frozen=True)
class Detection:
    """A scored candidate object in one image."""

    box: BoundingBox
    class_index: int
    score: float
    image_id: str

    def __post_init__(self):
        if self.class_index < 1:
            raise InvalidInputError("detections must carry a foreground class")
        if not (math.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise InvalidInputError(f"score must be finite in [0, 1], got {self.score}")


@dataclass(frozen=True)
class EvalConfig:
    """IoU acceptance threshold and the FPPI operating point."""

    iou_threshold: float = 0.5
    target_fppi: float = 1.0
    strict_iou: bool = True  # True: IoU must exceed the threshold; False: meet it

    def __post_init__(self):
        if not (0 < self.iou_threshold <= 1):
            raise InvalidInputError("iou_threshold must be in (0, 1]")
        if self.target_fppi <= 0:
            raise InvalidInputError("target_fppi must be > 0")

    def iou_passes(self, value: float) -> bool:
        return value > self.iou_threshold if self.strict_iou else value >= self.iou_threshold


@dataclass
class MatchCounts:
    """Per-class true positives, false positives and false negatives."""

    tp: dict[int, int] = field(default_factory=lambda: defaultdict(int))
    fp: dict[int, int] = field(default_factory=lambda: defaultdict(int))
    fn: dict[int, int] = field(default_factory=lambda: defaultdict(int))

    def merge(self, other: "MatchCounts") -> None:
        for key, value in other.tp.items():
            self.tp[key] += value
        for key, value in other.fp.items():
            self.fp[key] += value
        for key, value in other.fn.items():
            self.fn[key] += value


def _greedy_flags(
    detections: Sequence[Detection], ground_truth, cfg: EvalConfig
) -> list[bool]:
    """True/false positive flag per detection, in the given order.

    Detections must already be sorted by descending score (ties by insertion
    order).  Per class, each detection greedily claims the unmatched
    ground-truth box with the highest IoU and scores a true positive when
    that IoU passes; each ground truth is matched at most once.
    """
    gt_by_class: dict[int, list[BoundingBox]] = defaultdict(list)
    for obj in ground_truth:
        gt_by_class[obj.class_index].append(obj.box)
    unmatched = {c: list(range(len(boxes))) for c, boxes in gt_by_class.items()}
    flags = []
    for det in detections:
        candidates = unmatched.get(det.class_index, [])
        best_iou, best_pos = 0.0, None
        for pos, gt_idx in enumerate(candidates):
            value = iou(det.box, gt_by_class[det.class_index][gt_idx])
            if value > best_iou:
                best_iou, best_pos = value, pos
        if best_pos is not None and cfg.iou_passes(best_iou):
            candidates.pop(best_pos)
            flags.append(True)
        else:
            flags.append(False)
    return flags


def _sorted_by_score(detections: Sequence[Detection]) -> list[Detection]:
    # stable sort keeps insertion order among equal scores
    return sorted(detections, key=lambda d: -d.score)


def match_image(
    detections: Sequence[Detection], ground_truth, cfg: EvalConfig
) -> MatchCounts:
    """Match one image's detections against its ground truth.

    ``detections`` are the ones at or above the operating threshold.  Returns
    per-class TP/FP/FN; unmatched ground truths count as FN.
    """
    image_ids = {d.image_id for d in detections}
    if len(image_ids) > 1:
        raise InvalidInputError(f"detections span multiple images: {sorted(image_ids)}")
    ordered = _sorted_by_score(detections)
    flags = _greedy_flags(ordered, ground_truth, cfg)
    counts = MatchCounts()
    for det, is_tp in zip(ordered, flags):
        if is_tp:
            counts.tp[det.class_index] += 1
        else:
            counts.fp[det.class_index] += 1
    gt_totals: dict[int, int] = defaultdict(int)
    for obj in ground_truth:
        gt_totals[obj.class_index] += 1
    for class_index, total in gt_totals.items():
        counts.fn[class_index] = total - counts.tp.get(class_index, 0)
    return counts


@dataclass
class CalibrationResult:
    threshold: float
    achieved_fppi: float
    degenerate: bool = False


def _group_by_image(detections: Sequence[Detection], scenes: Sequence[Scene]):
    by_image: dict[str, list[Detection]] = {scene.image_id: [] for scene in scenes}
    for det in detections:
        if det.image_id not in by_image:
            raise InvalidInputError(f"detection references unknown image {det.image_id!r}")
        by_image[det.image_id].append(det)
    return by_image


def calibrate_threshold(
    detections: Sequence[Detection], scenes: Sequence[Scene], cfg: EvalConfig
) -> CalibrationResult:
    """Single global score threshold: the smallest one keeping FPPI at or
    below the target, which maximizes recall subject to the FPPI cap.

    Candidate thresholds are the distinct detection scores, swept in
    descending order.  Greedy matching is incremental in score order, so one
    pass flags every detection and the sweep reads cumulative false-positive
    counts off that pass; the result is identical to re-matching the whole
    set at every candidate.  If even the highest score breaks the cap, a
    threshold above all scores is returned with the degenerate flag set.
    """
    if not scenes:
        raise InvalidInputError("at least one image is required")
    if not detections:
        return CalibrationResult(threshold=math.inf, achieved_fppi=0.0, degenerate=True)
    by_image = _group_by_image(detections, scenes)
    gt_by_image = {scene.image_id: scene.objects for scene in scenes}
    scored_flags: list[tuple[float, bool]] = []
    for image_id, dets in by_image.items():
        ordered = _sorted_by_score(dets)
        flags = _greedy_flags(ordered, gt_by_image[image_id], cfg)
        scored_flags.extend((d.score, f) for d, f in zip(ordered, flags))
    scored_flags.sort(key=lambda item: -item[0])
    num_images = len(scenes)

    best: float | None = None
    best_fppi = 0.0
    false_positives = 0
    i = 0
    while i < len(scored_flags):
        score = scored_flags[i][0]
        while i < len(scored_flags) and scored_flags[i][0] == score:
            false_positives += not scored_flags[i][1]
            i += 1
        fppi = false_positives / num_images
        if fppi <= cfg.target_fppi:
            best, best_fppi = score, fppi
        else:
            break  # FPPI only grows as the threshold drops further
    if best is None:
        top = scored_flags[0][0]
        return CalibrationResult(threshold=top + 1.0, achieved_fppi=0.0, degenerate=True)
    return CalibrationResult(threshold=best, achieved_fppi=best_fppi, degenerate=False)


@dataclass
class ClassOutcome:
    tp: int
    fp: int
    fn: int

    @property
    def gt(self) -> int:
        return self.tp + self.fn

    @property
    def recall(self) -> float | None:
        return self.tp / self.gt if self.gt > 0 else None


@dataclass
class EvalReport:
    """Per-class recall at the calibrated threshold plus the summary rows."""

    classes: ClassTable
    calibrated_threshold: float
    achieved_fppi: float
    degenerate: bool
    per_class: dict[str, ClassOutcome]
    class_average_recall: float
    overall_recall: float
    image_count: int
    config: EvalConfig


def evaluate(
    detections: Sequence[Detection],
    scenes: Sequence[Scene],
    classes: ClassTable,
    cfg: EvalConfig | None = None,
) -> EvalReport:
    """Calibrate the global threshold, then report per-class recall,
    their unweighted mean, and overall recall (total TP over total GT)."""
    cfg = cfg or EvalConfig()
    if not scenes:
        raise InvalidInputError("at least one image is required")
    total_gt = sum(len(scene.objects) for scene in scenes)
    if total_gt == 0:
        raise InvalidInputError("ground truth is empty")
    calibration = calibrate_threshold(detections, scenes, cfg)
    by_image = _group_by_image(detections, scenes)
    counts = MatchCounts()
    for scene in scenes:
        kept = [d for d in by_image[scene.image_id] if d.score >= calibration.threshold]
        counts.merge(match_image(kept, scene.objects, cfg))
    per_class = {}
    for index, name in enumerate(classes.names):
        if index == 0:
            continue
        per_class[name] = ClassOutcome(
            tp=counts.tp.get(index, 0), fp=counts.fp.get(index, 0), fn=counts.fn.get(index, 0)
        )
    recalls = [o.recall for o in per_class.values() if o.gt > 0]
    overall = sum(o.tp for o in per_class.values()) / total_gt
    return EvalReport(
        classes=classes,
        calibrated_threshold=calibration.threshold,
        achieved_fppi=calibration.achieved_fppi,
        degenerate=calibration.degenerate,
        per_class=per_class,
        class_average_recall=float(np.mean(recalls)) if recalls else 0.0,
        overall_recall=overall,
        image_count=len(scenes),
        config=cfg,
    )


def detections_from_probabilities(
    probabilities: np.ndarray, proposals: ProposalBatch
) -> list[Detection]:
    """Turn classified proposals into detections.

    A proposal becomes a detection of its highest-probability class with that
    probability as the score; proposals whose argmax is background emit
    nothing.
    """
    probs = np.asarray(probabilities, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] != len(proposals):
        raise InvalidInputError("probabilities must align with proposals")
    detections = []
    winners = probs.argmax(axis=1)
    for i, winner in enumerate(winners):
        if winner == 0:
            continue
        x1, y1, x2, y2 = proposals.boxes[i]
        detections.append(
            Detection(
                box=BoundingBox(x1, y1, x2, y2),
                class_index=int(winner),
                score=float(probs[i, winner]),
                image_id=proposals.scene_ids[i],
            )
        )
    return detections


def save_detections(detections: Sequence[Detection], path: str | Path) -> None:
    import json

    lines = "".join(
        json.dumps(
            {
                "image_id": d.image_id,
                "class_index": d.class_index,
                "box": list(d.box.as_tuple()),
                "score": d.score,
            },
            sort_keys=True,
        )
        + "\n"
        for d in detections
    )
    fileio.write_text_atomic(path, lines)


def load_detections(path: str | Path) -> list[Detection]:
    import json

    detections = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            detections.append(
                Detection(
                    box=BoundingBox(*rec["box"]),
                    class_index=int(rec["class_index"]),
                    score=float(rec["score"]),
                    image_id=rec["image_id"],
                )
            )
    return detections


def report_to_dict(report: EvalReport) -> dict:
    threshold = report.calibrated_threshold
    return {
        "format_version": fileio.FORMAT_VERSION,
        "kind": "eval_report",
        "classes": list(report.classes.names),
        "config": {
            "iou_threshold": report.config.iou_threshold,
            "target_fppi": report.config.target_fppi,
            "strict_iou": report.config.strict_iou,
        },
        "image_count": report.image_count,
        "calibrated_threshold": None if not math.isfinite(threshold) else threshold,
        "achieved_fppi": report.achieved_fppi,
        "degenerate": report.degenerate,
        "per_class": {
            name: {
                "tp": o.tp,
                "fp": o.fp,
                "fn": o.fn,
                "gt": o.gt,
                "recall": o.recall,
            }
            for name, o in report.per_class.items()
        },
        "class_average_recall": report.class_average_recall,
        "overall_recall": report.overall_recall,
    }


def save_report(report: EvalReport, path: str | Path, run_metadata: Mapping | None = None) -> None:
    doc = report_to_dict(report)
    if run_metadata is not None:
        doc["run"] = dict(run_metadata)
    fileio.write_json_atomic(path, doc)


def load_report(path: str | Path) -> dict:
    doc = fileio.read_json(path)
    if doc.get("kind") != "eval_report":
        raise InvalidInputError(f"{path} is not an eval report")
    return doc


def _format_recall(value) -> str:
    return "-" if value is None else f"{100.0 * value:.2f}%"


def render_reports(
    reports: Sequence[dict], labels: Sequence[str], fmt: str = "text"
) -> str:
    """Side-by-side recall table: one row per class plus Average and Overall.

    ``fmt`` is "text" (aligned columns), "markdown", or "csv" (raw recall
    fractions, suitable as plot data for external tools).
    """
    if len(reports) != len(labels):
        raise InvalidInputError("one label per report is required")
    if fmt not in ("text", "markdown", "csv"):
        raise InvalidInputError(f"unknown format {fmt!r}")
    class_names = sorted({name for doc in reports for name in doc["per_class"]})
    if fmt == "csv":
        import csv
        import io

        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["object_class", *labels])
        for name in class_names:
            writer.writerow(
                [name, *(doc["per_class"].get(name, {}).get("recall") for doc in reports)]
            )
        writer.writerow(["Average", *(doc["class_average_recall"] for doc in reports)])
        writer.writerow(["Overall", *(doc["overall_recall"] for doc in reports)])
        return buf.getvalue()
    rows = []
    for name in class_names:
        cells = [
            _format_recall(doc["per_class"].get(name, {}).get("recall")) for doc in reports
        ]
        rows.append((name, cells))
    rows.append(("Average", [_format_recall(doc["class_average_recall"]) for doc in reports]))
    rows.append(("Overall", [_format_recall(doc["overall_recall"]) for doc in reports]))

    header = ["Object Class", *labels]
    table = [header, *[[name, *cells] for name, cells in rows]]
    widths = [max(len(row[c]) for row in table) for c in range(len(header))]
    if fmt == "markdown":
        lines = [
            "| " + " | ".join(cell.ljust(w) for cell, w in zip(table[0], widths)) + " |",
            "|" + "|".join("-" * (w + 2) for w in widths) + "|",
        ]
        for row in table[1:]:
            lines.append("| " + " | ".join(cell.ljust(w) for cell, w in zip(row, widths)) + " |")
    else:
        lines = []
        for i, row in enumerate(table):
            lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
            if i == 0:
                lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
