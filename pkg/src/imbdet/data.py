"""Scenes, annotation parsing, class statistics and dataset persistence."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import fileio
from .boxes import BoundingBox
from .classes import ClassStats, ClassTable
from .errors import EmptyDatasetError, InvalidInputError, ParseError

# the seven on-road target classes; annotations of other categories are skipped
BDD_TARGET_CLASSES = ("car", "truck", "bus", "person", "rider", "motor", "bike")

# virtual frame size used when the label source does not carry image dimensions
DEFAULT_IMAGE_WIDTH = 1280.0
DEFAULT_IMAGE_HEIGHT = 720.0

LABEL_FORMATS = ("bdd100k", "simple_jsonl")


@dataclass(frozen=True)
class GroundTruthObject:
    """One annotated foreground object."""

    box: BoundingBox
    class_index: int

    def __post_init__(self):
        if self.class_index < 1:
            raise InvalidInputError("ground-truth objects must belong to a foreground class")


@dataclass(frozen=True)
class Scene:
    """One image's ground truth."""

    image_id: str
    objects: tuple[GroundTruthObject, ...]
    image_width: float = DEFAULT_IMAGE_WIDTH
    image_height: float = DEFAULT_IMAGE_HEIGHT

    def __post_init__(self):
        if self.image_width <= 0 or self.image_height <= 0:
            raise InvalidInputError("image dimensions must be positive")
        object.__setattr__(self, "objects", tuple(self.objects))
        for obj in self.objects:
            b = obj.box
            if b.x2 > self.image_width or b.y2 > self.image_height:
                raise InvalidInputError(
                    f"box {b.as_tuple()} exceeds image bounds in scene {self.image_id!r}"
                )


@dataclass
class ProposalBatch:
    """Feature vectors with assigned labels and source boxes.

    Labels index a ClassTable; 0 means background.
    """

    features: np.ndarray  # (N, D) float64
    labels: np.ndarray  # (N,) int64
    boxes: np.ndarray  # (N, 4) float64, rows (x1, y1, x2, y2)
    scene_ids: tuple[str, ...]

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.boxes = np.asarray(self.boxes, dtype=np.float64)
        n = self.features.shape[0]
        if self.features.ndim != 2:
            raise InvalidInputError("features must be a (N, D) array")
        if self.labels.shape != (n,) or self.boxes.shape != (n, 4):
            raise InvalidInputError("features, labels and boxes must align")
        if len(self.scene_ids) != n:
            raise InvalidInputError("scene_ids must align with features")
        if n and self.labels.min() < 0:
            raise InvalidInputError("labels must be >= 0")
        self.scene_ids = tuple(self.scene_ids)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_foreground(self) -> int:
        return int((self.labels > 0).sum())

    def subset(self, indices) -> "ProposalBatch":
        idx = np.asarray(indices, dtype=np.int64)
        return ProposalBatch(
            features=self.features[idx],
            labels=self.labels[idx],
            boxes=self.boxes[idx],
            scene_ids=tuple(self.scene_ids[i] for i in idx),
        )


@dataclass
class ParseResult:
    """Scenes plus a tally of labels that were skipped during parsing."""

    scenes: list[Scene]
    skipped: dict[str, int]
    classes: ClassTable


def _clip_box(x1, y1, x2, y2, width, height):
    x1 = min(max(x1, 0.0), width)
    x2 = min(max(x2, 0.0), width)
    y1 = min(max(y1, 0.0), height)
    y2 = min(max(y2, 0.0), height)
    if x2 <= x1 or y2 <= y1:
        return None
    return BoundingBox(x1, y1, x2, y2)


def _box_values(record, idx):
    try:
        return tuple(float(record[key]) for key in ("x1", "y1", "x2", "y2"))
    except (KeyError, TypeError, ValueError):
        raise ParseError("2-D box must carry numeric fields x1, y1, x2, y2", idx) from None


def _parse_bdd100k(doc, classes: ClassTable) -> ParseResult:
    if not isinstance(doc, list):
        raise ParseError("expected a top-level array of frame records")
    lookup = {name.lower(): classes.index(name) for name in classes.foreground}
    scenes = []
    skipped: Counter[str] = Counter()
    for idx, frame in enumerate(doc):
        if not isinstance(frame, dict):
            raise ParseError("frame record must be an object", idx)
        image_id = frame.get("name")
        if not isinstance(image_id, str) or not image_id:
            raise ParseError("frame record must carry a non-empty 'name'", idx)
        labels = frame.get("labels", [])
        if labels is None:
            labels = []
        if not isinstance(labels, list):
            raise ParseError("'labels' must be a list", idx)
        objects = []
        for label in labels:
            if not isinstance(label, dict):
                raise ParseError("label must be an object", idx)
            category = str(label.get("category", "")).lower()
            if category not in lookup:
                skipped[category or "<missing category>"] += 1
                continue
            if "box2d" not in label or not isinstance(label["box2d"], dict):
                skipped["<no box2d>"] += 1
                continue
            x1, y1, x2, y2 = _box_values(label["box2d"], idx)
            box = _clip_box(x1, y1, x2, y2, DEFAULT_IMAGE_WIDTH, DEFAULT_IMAGE_HEIGHT)
            if box is None:
                skipped["<degenerate box>"] += 1
                continue
            objects.append(GroundTruthObject(box=box, class_index=lookup[category]))
        scenes.append(Scene(image_id=image_id, objects=tuple(objects)))
    return ParseResult(scenes=scenes, skipped=dict(skipped), classes=classes)


def _parse_simple_jsonl(lines, classes: ClassTable) -> ParseResult:
    lookup = {name.lower(): classes.index(name) for name in classes.foreground}
    per_image: dict[str, list[GroundTruthObject]] = {}
    skipped: Counter[str] = Counter()
    for idx, line in enumerate(lines):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}", idx) from None
        if not isinstance(record, dict) or "image_id" not in record:
            raise ParseError("record must be an object with an 'image_id'", idx)
        image_id = str(record["image_id"])
        objects = per_image.setdefault(image_id, [])
        category = str(record.get("class", "")).lower()
        if category not in lookup:
            skipped[category or "<missing category>"] += 1
            continue
        x1, y1, x2, y2 = _box_values(record, idx)
        # the simple format carries no frame size; grow the virtual frame to fit
        width = max(DEFAULT_IMAGE_WIDTH, x1, x2)
        height = max(DEFAULT_IMAGE_HEIGHT, y1, y2)
        box = _clip_box(x1, y1, x2, y2, width, height)
        if box is None:
            skipped["<degenerate box>"] += 1
            continue
        objects.append(GroundTruthObject(box=box, class_index=lookup[category]))
    scenes = []
    for image_id, objects in per_image.items():
        width = max([DEFAULT_IMAGE_WIDTH, *(o.box.x2 for o in objects)])
        height = max([DEFAULT_IMAGE_HEIGHT, *(o.box.y2 for o in objects)])
        scenes.append(
            Scene(image_id=image_id, objects=tuple(objects), image_width=width, image_height=height)
        )
    return ParseResult(scenes=scenes, skipped=dict(skipped), classes=classes)


def parse_labels(
    path: str | Path, format: str = "bdd100k", classes: ClassTable | None = None
) -> ParseResult:
    """Read an annotation file into scenes.

    Categories are matched case-insensitively against the table's foreground
    names; labels of other categories, or lacking a usable 2-D box, are
    skipped and tallied in the result's skip report.
    """
    if format not in LABEL_FORMATS:
        raise InvalidInputError(f"unknown label format {format!r}; expected one of {LABEL_FORMATS}")
    if classes is None:
        classes = ClassTable.with_background(BDD_TARGET_CLASSES)
    path = Path(path)
    if format == "bdd100k":
        try:
            with open(path, "r", encoding="utf-8") as f:
                doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON document: {exc}") from None
        result = _parse_bdd100k(doc, classes)
    else:
        with open(path, "r", encoding="utf-8") as f:
            result = _parse_simple_jsonl(f, classes)
    if not result.scenes:
        raise EmptyDatasetError(f"{path} contains no scenes")
    return result


def compute_stats(scenes: Sequence[Scene], classes: ClassTable) -> ClassStats:
    """Total instance counts and per-image frequencies over the scenes."""
    if not scenes:
        raise InvalidInputError("at least one scene is required")
    counts = {name: 0 for name in classes.foreground}
    for scene in scenes:
        for obj in scene.objects:
            counts[classes.names[obj.class_index]] += 1
    return ClassStats(classes=classes, image_count=len(scenes), counts=counts)


def save_stats(
    stats: ClassStats,
    path: str | Path,
    skipped: Mapping[str, int] | None = None,
    run_metadata: Mapping | None = None,
) -> None:
    doc = {
        "format_version": fileio.FORMAT_VERSION,
        "kind": "class_stats",
        "background": stats.classes.background,
        "image_count": stats.image_count,
        "classes": [
            {
                "name": name,
                "count": stats.count(name),
                "frequency": stats.frequency(name),
            }
            for name in stats.classes.foreground
        ],
        "skipped": dict(skipped or {}),
    }
    if run_metadata is not None:
        doc["run"] = dict(run_metadata)
    fileio.write_json_atomic(path, doc)


def load_stats(path: str | Path) -> ClassStats:
    doc = fileio.read_json(path)
    if doc.get("kind") != "class_stats":
        raise InvalidInputError(f"{path} is not a stats file")
    table = ClassTable.with_background(
        tuple(rec["name"] for rec in doc["classes"]), background=doc.get("background", "background")
    )
    counts = {rec["name"]: int(rec["count"]) for rec in doc["classes"]}
    return ClassStats(classes=table, image_count=int(doc["image_count"]), counts=counts)


@dataclass
class DatasetSplit:
    scenes: list[Scene]
    proposals: ProposalBatch


@dataclass
class Dataset:
    """A class table plus named splits of scenes and proposals."""

    classes: ClassTable
    splits: dict[str, DatasetSplit]
    generator_config: dict | None = None
    split_seeds: dict[str, int] = field(default_factory=dict)


def _scene_to_record(scene: Scene) -> dict:
    return {
        "image_id": scene.image_id,
        "width": scene.image_width,
        "height": scene.image_height,
        "objects": [
            {"class_index": obj.class_index, "box": list(obj.box.as_tuple())}
            for obj in scene.objects
        ],
    }


def _scene_from_record(record: dict) -> Scene:
    objects = tuple(
        GroundTruthObject(box=BoundingBox(*entry["box"]), class_index=int(entry["class_index"]))
        for entry in record["objects"]
    )
    return Scene(
        image_id=record["image_id"],
        objects=objects,
        image_width=float(record["width"]),
        image_height=float(record["height"]),
    )


def save_dataset(dataset: Dataset, out_dir: str | Path, run_metadata: Mapping | None = None) -> None:
    """Persist a dataset directory: manifest, per-split scenes and proposal arrays."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest_splits = {}
    for name, split in dataset.splits.items():
        scenes_file = f"scenes_{name}.jsonl"
        lines = "".join(
            json.dumps(_scene_to_record(s), sort_keys=True) + "\n" for s in split.scenes
        )
        fileio.write_text_atomic(out / scenes_file, lines)
        prop = split.proposals
        scene_index = np.array(
            [split_scene_ids_index(split.scenes)[sid] for sid in prop.scene_ids], dtype=np.int64
        )
        files = {
            "scenes": scenes_file,
            "features": f"{name}_features.npy",
            "labels": f"{name}_labels.npy",
            "boxes": f"{name}_boxes.npy",
            "scene_index": f"{name}_scene_index.npy",
        }
        fileio.write_array_atomic(out / files["features"], prop.features)
        fileio.write_array_atomic(out / files["labels"], prop.labels)
        fileio.write_array_atomic(out / files["boxes"], prop.boxes)
        fileio.write_array_atomic(out / files["scene_index"], scene_index)
        manifest_splits[name] = {
            "num_images": len(split.scenes),
            "num_proposals": len(prop),
            "files": files,
            "seed": dataset.split_seeds.get(name),
        }
    manifest = {
        "format_version": fileio.FORMAT_VERSION,
        "kind": "dataset",
        "classes": list(dataset.classes.names),
        "generator": dataset.generator_config,
        "splits": manifest_splits,
    }
    if run_metadata is not None:
        manifest["run"] = dict(run_metadata)
    fileio.write_json_atomic(out / "manifest.json", manifest)


def split_scene_ids_index(scenes: Sequence[Scene]) -> dict[str, int]:
    return {scene.image_id: i for i, scene in enumerate(scenes)}


def load_dataset(in_dir: str | Path) -> Dataset:
    root = Path(in_dir)
    manifest = fileio.read_json(root / "manifest.json")
    if manifest.get("kind") != "dataset":
        raise InvalidInputError(f"{root} does not contain a dataset manifest")
    classes = ClassTable(tuple(manifest["classes"]))
    splits = {}
    split_seeds = {}
    for name, entry in manifest["splits"].items():
        files = entry["files"]
        with open(root / files["scenes"], "r", encoding="utf-8") as f:
            scenes = [_scene_from_record(json.loads(line)) for line in f if line.strip()]
        scene_index = fileio.read_array(root / files["scene_index"])
        proposals = ProposalBatch(
            features=fileio.read_array(root / files["features"]),
            labels=fileio.read_array(root / files["labels"]),
            boxes=fileio.read_array(root / files["boxes"]),
            scene_ids=tuple(scenes[i].image_id for i in scene_index),
        )
        splits[name] = DatasetSplit(scenes=scenes, proposals=proposals)
        if entry.get("seed") is not None:
            split_seeds[name] = int(entry["seed"])
    return Dataset(
        classes=classes,
        splits=splits,
        generator_config=manifest.get("generator"),
        split_seeds=split_seeds,
    )
