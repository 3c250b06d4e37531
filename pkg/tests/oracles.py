"""Independent reference implementations used to check the fast paths."""

import numpy as np

from imbdet import BoundingBox, Detection, GroundTruthObject, Scene, iou, match_image
from imbdet.evaluation import MatchCounts


def brute_force_max_tp(det_boxes, gt_boxes, cfg) -> int:
    """Maximum number of detection-to-ground-truth pairs with passing IoU,
    each ground truth used at most once (exhaustive over all assignments)."""
    admissible = [
        [cfg.iou_passes(iou(d, g)) for g in gt_boxes] for d in det_boxes
    ]
    best = 0

    def recurse(i, used, count):
        nonlocal best
        if i == len(det_boxes):
            best = max(best, count)
            return
        if count + (len(det_boxes) - i) <= best:
            return
        for j in range(len(gt_boxes)):
            if not used[j] and admissible[i][j]:
                used[j] = True
                recurse(i + 1, used, count + 1)
                used[j] = False
        recurse(i + 1, used, count)

    recurse(0, [False] * len(gt_boxes), 0)
    return best


def naive_calibrate(detections, scenes, cfg):
    """Literal threshold sweep: re-match the whole detection set at every
    distinct score, then take the smallest threshold with FPPI <= target."""
    scores = sorted({d.score for d in detections}, reverse=True)
    best = None
    best_fppi = 0.0
    for threshold in scores:
        counts = MatchCounts()
        for scene in scenes:
            kept = [
                d
                for d in detections
                if d.image_id == scene.image_id and d.score >= threshold
            ]
            counts.merge(match_image(kept, scene.objects, cfg))
        fppi = sum(counts.fp.values()) / len(scenes)
        if fppi <= cfg.target_fppi:
            best, best_fppi = threshold, fppi
    return best, best_fppi


def _random_box(rng, canvas=200.0, min_side=20.0, max_side=60.0):
    w = rng.uniform(min_side, max_side)
    h = rng.uniform(min_side, max_side)
    x1 = rng.uniform(0.0, canvas - w)
    y1 = rng.uniform(0.0, canvas - h)
    return BoundingBox(x1, y1, x1 + w, y1 + h)


def _jittered(rng, box: BoundingBox, canvas=200.0) -> BoundingBox:
    # shift proportional to box size, the way a localized detector misses
    dx = rng.uniform(-0.2, 0.2) * box.width
    dy = rng.uniform(-0.2, 0.2) * box.height
    x1 = min(max(box.x1 + dx, 0.0), canvas - box.width)
    y1 = min(max(box.y1 + dy, 0.0), canvas - box.height)
    return BoundingBox(x1, y1, x1 + box.width, y1 + box.height)


def random_match_scene(rng, image_id="img", max_per_class=5, num_classes=3, gt_overlap_cap=0.3):
    """One random image: up to max_per_class ground truths and detections per
    class, detections mostly jittered copies of ground-truth boxes.

    Same-class ground truths are rejection-sampled below ``gt_overlap_cap``
    mutual IoU; annotated datasets do not carry near-duplicate boxes of one
    class, and heavy mutual overlap is the one regime where score-greedy
    matching can fall below the exhaustive optimum.
    """
    objects = []
    detections = []
    for class_index in range(1, num_classes + 1):
        n_gt = int(rng.integers(0, max_per_class + 1))
        n_det = int(rng.integers(0, max_per_class + 1))
        gt_boxes = []
        for _ in range(n_gt):
            for _ in range(50):
                candidate = _random_box(rng)
                if all(iou(candidate, g) < gt_overlap_cap for g in gt_boxes):
                    gt_boxes.append(candidate)
                    break
        objects.extend(GroundTruthObject(box=b, class_index=class_index) for b in gt_boxes)
        for _ in range(n_det):
            if gt_boxes and rng.uniform() < 0.7:
                box = _jittered(rng, gt_boxes[int(rng.integers(len(gt_boxes)))])
            else:
                box = _random_box(rng)
            detections.append(
                Detection(
                    box=box,
                    class_index=class_index,
                    score=float(rng.uniform()),
                    image_id=image_id,
                )
            )
    scene = Scene(image_id=image_id, objects=tuple(objects), image_width=200, image_height=200)
    return scene, detections
