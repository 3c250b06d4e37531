"""Seeded synthetic long-tail proposal datasets.

Each virtual image draws per-class object counts from Poisson rates.  Every
object yields one positive proposal whose box is shifted to a target IoU and
whose feature comes from that class's Gaussian; background proposals (a
configurable multiple of the foreground total) carry background-Gaussian
features and boxes that stay below IoU 0.3 against every object in their
host image.  Generation is a pure function of (config, num_images).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .boxes import BoundingBox, iou
from .classes import ClassTable
from .data import Dataset, DatasetSplit, GroundTruthObject, ProposalBatch, Scene
from .errors import GenerationError, InvalidConfigError, InvalidInputError

IMAGE_WIDTH = 1280.0
IMAGE_HEIGHT = 720.0
MIN_BOX_SIDE = 32.0
MAX_BOX_SIDE = 256.0
BG_IOU_CEILING = 0.3
_PLACEMENT_RETRIES = 100


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the synthetic generator.

    ``class_rates[j]`` is the mean number of class-j objects per image.
    Class feature means sit pairwise ``class_separation`` apart (background
    included), which requires ``feature_dim >= num_classes + 1``.
    """

    num_classes: int
    class_rates: tuple[float, ...]
    feature_dim: int = 16
    class_separation: float = 4.2
    feature_noise: float = 1.0
    bg_per_fg: float = 3.0
    positive_iou_range: tuple[float, float] = (0.6, 0.95)
    seed: int = 0
    class_names: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.num_classes < 2:
            raise InvalidConfigError("num_classes must be >= 2")
        object.__setattr__(self, "class_rates", tuple(float(r) for r in self.class_rates))
        if len(self.class_rates) != self.num_classes:
            raise InvalidConfigError("class_rates must have one entry per class")
        if any(r <= 0 for r in self.class_rates):
            raise InvalidConfigError("class rates must be > 0")
        if self.feature_dim < self.num_classes + 1:
            raise InvalidConfigError("feature_dim must be >= num_classes + 1")
        if self.class_separation <= 0 or self.feature_noise <= 0:
            raise InvalidConfigError("class_separation and feature_noise must be > 0")
        if self.bg_per_fg <= 0:
            raise InvalidConfigError("bg_per_fg must be > 0")
        lo, hi = self.positive_iou_range
        if not (0.5 < lo <= hi <= 1.0):
            raise InvalidConfigError("positive_iou_range must satisfy 0.5 < lo <= hi <= 1")
        object.__setattr__(self, "positive_iou_range", (float(lo), float(hi)))
        if self.class_names is not None:
            names = tuple(self.class_names)
            if len(names) != self.num_classes:
                raise InvalidConfigError("class_names must have one entry per class")
            object.__setattr__(self, "class_names", names)

    def class_table(self) -> ClassTable:
        names = self.class_names or tuple(f"class_{j}" for j in range(self.num_classes))
        return ClassTable.with_background(names)

    def as_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["class_rates"] = list(self.class_rates)
        doc["positive_iou_range"] = list(self.positive_iou_range)
        doc["class_names"] = list(self.class_table().foreground)
        return doc


def class_means(cfg: SynthConfig) -> np.ndarray:
    """Feature-space means, one row per class including background (row 0).

    Means are scaled standard basis vectors, so every pair is exactly
    ``class_separation`` apart.
    """
    scale = cfg.class_separation / np.sqrt(2.0)
    means = np.zeros((cfg.num_classes + 1, cfg.feature_dim))
    for i in range(cfg.num_classes + 1):
        means[i, i] = scale
    return means


def _draw_box(rng: np.random.Generator) -> tuple[float, float, float, float]:
    w = rng.uniform(MIN_BOX_SIDE, MAX_BOX_SIDE)
    h = rng.uniform(MIN_BOX_SIDE, MAX_BOX_SIDE)
    x1 = rng.uniform(0.0, IMAGE_WIDTH - w)
    y1 = rng.uniform(0.0, IMAGE_HEIGHT - h)
    return x1, y1, w, h


def _positive_box(rng: np.random.Generator, gt: BoundingBox, lo: float, hi: float) -> BoundingBox:
    """Shift a copy of the ground-truth box so its IoU with it is exact.

    A shift d along one axis gives IoU (s - d) / (s + d) for side length s,
    so d = s (1 - t) / (1 + t) hits the target t drawn from [lo, hi].
    """
    t = rng.uniform(lo, hi)
    axis = int(rng.integers(2))
    sign = 1.0 if rng.integers(2) else -1.0
    if axis == 0:
        d = gt.width * (1.0 - t) / (1.0 + t)
        x1 = gt.x1 + sign * d
        if x1 < 0 or x1 + gt.width > IMAGE_WIDTH:
            x1 = gt.x1 - sign * d
        return BoundingBox(x1, gt.y1, x1 + gt.width, gt.y2)
    d = gt.height * (1.0 - t) / (1.0 + t)
    y1 = gt.y1 + sign * d
    if y1 < 0 or y1 + gt.height > IMAGE_HEIGHT:
        y1 = gt.y1 - sign * d
    return BoundingBox(gt.x1, y1, gt.x2, y1 + gt.height)


def _background_box(rng: np.random.Generator, objects: list[GroundTruthObject]) -> BoundingBox:
    for _ in range(_PLACEMENT_RETRIES):
        x1, y1, w, h = _draw_box(rng)
        candidate = BoundingBox(x1, y1, x1 + w, y1 + h)
        if all(iou(candidate, obj.box) < BG_IOU_CEILING for obj in objects):
            return candidate
    raise GenerationError(
        f"could not place a background box away from {len(objects)} objects "
        f"after {_PLACEMENT_RETRIES} retries"
    )


def generate_synthetic(
    cfg: SynthConfig, num_images: int, image_id_prefix: str = "img"
) -> DatasetSplit:
    """Generate one split of scenes and proposals; bit-identical per (cfg, N)."""
    if num_images < 1:
        raise InvalidInputError("num_images must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    lo, hi = cfg.positive_iou_range
    rates = np.asarray(cfg.class_rates)

    scenes: list[Scene] = []
    # per image: (labels, boxes) of the foreground proposals
    fg_labels: list[list[int]] = []
    fg_boxes: list[list[BoundingBox]] = []
    for i in range(num_images):
        counts = rng.poisson(lam=rates)
        objects: list[GroundTruthObject] = []
        labels: list[int] = []
        boxes: list[BoundingBox] = []
        for j in range(cfg.num_classes):
            for _ in range(int(counts[j])):
                x1, y1, w, h = _draw_box(rng)
                gt_box = BoundingBox(x1, y1, x1 + w, y1 + h)
                objects.append(GroundTruthObject(box=gt_box, class_index=j + 1))
                labels.append(j + 1)
                boxes.append(_positive_box(rng, gt_box, lo, hi))
        scenes.append(
            Scene(
                image_id=f"{image_id_prefix}-{i:06d}",
                objects=tuple(objects),
                image_width=IMAGE_WIDTH,
                image_height=IMAGE_HEIGHT,
            )
        )
        fg_labels.append(labels)
        fg_boxes.append(boxes)

    total_fg = sum(len(labels) for labels in fg_labels)
    num_bg = int(np.floor(cfg.bg_per_fg * total_fg))
    bg_boxes: list[list[BoundingBox]] = [[] for _ in range(num_images)]
    for _ in range(num_bg):
        host = int(rng.integers(num_images))
        bg_boxes[host].append(_background_box(rng, list(scenes[host].objects)))

    # final order groups proposals by image, foreground first
    labels_flat: list[int] = []
    boxes_flat: list[BoundingBox] = []
    scene_ids: list[str] = []
    for i in range(num_images):
        for label, box in zip(fg_labels[i], fg_boxes[i]):
            labels_flat.append(label)
            boxes_flat.append(box)
            scene_ids.append(scenes[i].image_id)
        for box in bg_boxes[i]:
            labels_flat.append(0)
            boxes_flat.append(box)
            scene_ids.append(scenes[i].image_id)

    labels_arr = np.array(labels_flat, dtype=np.int64)
    means = class_means(cfg)
    features = means[labels_arr] if len(labels_arr) else np.zeros((0, cfg.feature_dim))
    features = features + cfg.feature_noise * rng.standard_normal((len(labels_arr), cfg.feature_dim))
    proposals = ProposalBatch(
        features=features,
        labels=labels_arr,
        boxes=np.array([b.as_tuple() for b in boxes_flat], dtype=np.float64).reshape(-1, 4),
        scene_ids=tuple(scene_ids),
    )
    return DatasetSplit(scenes=scenes, proposals=proposals)


def split_seed(base_seed: int, index: int) -> int:
    """Derived per-split seed; stable across runs and platforms."""
    ss = np.random.SeedSequence(base_seed, spawn_key=(index,))
    return int(ss.generate_state(1, np.uint64)[0])


def build_dataset(cfg: SynthConfig, split_sizes: Mapping[str, int]) -> Dataset:
    """Generate named splits with seeds derived from cfg.seed in split order."""
    if not split_sizes:
        raise InvalidInputError("at least one split is required")
    splits = {}
    seeds = {}
    for index, (name, num_images) in enumerate(split_sizes.items()):
        seeds[name] = split_seed(cfg.seed, index)
        split_cfg = dataclasses.replace(cfg, seed=seeds[name])
        splits[name] = generate_synthetic(split_cfg, num_images, image_id_prefix=name)
    generator_config = cfg.as_dict()
    generator_config["split_sizes"] = dict(split_sizes)
    return Dataset(
        classes=cfg.class_table(),
        splits=splits,
        generator_config=generator_config,
        split_seeds=seeds,
    )
