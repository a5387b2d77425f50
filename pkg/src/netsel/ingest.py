"""Loaders for COCO annotation/result documents, profile tables and scenarios."""
from __future__ import annotations

import csv
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Iterable, Optional

from .core import (
    CAMPAIGN_BATCH_SIZES,
    Backend,
    BoundingBox,
    DanglingReference,
    Detection,
    DuplicateProfile,
    GroundTruthBox,
    MalformedFile,
    NetworkProfile,
)

log = logging.getLogger(__name__)

PROFILE_HEADER = [
    "model",
    "backend",
    "batch",
    "latency_ms",
    "map_overall",
    "map_small",
    "map_medium",
    "map_large",
]


@dataclass(frozen=True)
class ImageInfo:
    image_id: Hashable
    width: int
    height: int
    file_name: Optional[str] = None


@dataclass
class Dataset:
    images: list[ImageInfo]
    categories: dict[Hashable, str]
    ground_truth: list[GroundTruthBox]
    dropped_boxes: int = 0

    def __post_init__(self):
        known = {im.image_id for im in self.images}
        if len(known) != len(self.images):
            raise MalformedFile("duplicate image ids")
        for gt in self.ground_truth:
            if gt.image_id not in known:
                raise DanglingReference(f"annotation references unknown image {gt.image_id!r}")
            if gt.category_id not in self.categories:
                raise DanglingReference(f"annotation references unknown category {gt.category_id!r}")
        self._by_image: dict[Hashable, list[GroundTruthBox]] = defaultdict(list)
        for gt in self.ground_truth:
            self._by_image[gt.image_id].append(gt)

    @property
    def image_ids(self) -> list[Hashable]:
        return [im.image_id for im in self.images]

    def boxes_for(self, image_id: Hashable) -> list[GroundTruthBox]:
        return list(self._by_image.get(image_id, ()))


@dataclass
class DetectionSet:
    network_id: str
    detections: list[Detection]
    clamped: int = 0
    rejected: int = 0

    def __len__(self) -> int:
        return len(self.detections)


def _read_json(path: Path):
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"{path}: {exc}") from exc


def _as_box(raw, where: str) -> Optional[BoundingBox]:
    try:
        x, y, w, h = (float(v) for v in raw)
    except (TypeError, ValueError) as exc:
        raise MalformedFile(f"{where}: bbox must be [x, y, w, h], got {raw!r}") from exc
    if not all(math.isfinite(v) for v in (x, y, w, h)):
        raise MalformedFile(f"{where}: non-finite bbox {raw!r}")
    if w <= 0 or h <= 0:
        return None
    return BoundingBox(x, y, w, h)


def parse_ground_truth(doc: dict, source: str = "<memory>") -> Dataset:
    if not isinstance(doc, dict):
        raise MalformedFile(f"{source}: expected a JSON object")
    try:
        images = [
            ImageInfo(im["id"], int(im["width"]), int(im["height"]), im.get("file_name"))
            for im in doc["images"]
        ]
        categories = {c["id"]: str(c.get("name", c["id"])) for c in doc["categories"]}
        annotations = doc.get("annotations", [])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedFile(f"{source}: {exc!r}") from exc

    boxes = []
    dropped = 0
    for ann in annotations:
        try:
            box = _as_box(ann["bbox"], f"{source} annotation {ann.get('id')}")
            image_id, category_id = ann["image_id"], ann["category_id"]
        except (KeyError, TypeError) as exc:
            raise MalformedFile(f"{source}: annotation missing {exc}") from exc
        if box is None:
            dropped += 1
            continue
        ignored = bool(ann.get("ignore", 0)) or bool(ann.get("iscrowd", 0))
        boxes.append(GroundTruthBox(image_id, category_id, box, ignored))
    if dropped:
        log.warning("%s: dropped %d ground-truth boxes with non-positive extent", source, dropped)
    return Dataset(images, categories, boxes, dropped_boxes=dropped)


def load_ground_truth(path) -> Dataset:
    path = Path(path)
    return parse_ground_truth(_read_json(path), str(path))


def dump_ground_truth(dataset: Dataset, path) -> None:
    doc = {
        "images": [
            {"id": im.image_id, "width": im.width, "height": im.height, "file_name": im.file_name}
            for im in dataset.images
        ],
        "categories": [{"id": cid, "name": name} for cid, name in dataset.categories.items()],
        "annotations": [
            {
                "id": i + 1,
                "image_id": gt.image_id,
                "category_id": gt.category_id,
                "bbox": gt.box.as_list(),
                "ignore": int(gt.ignored),
            }
            for i, gt in enumerate(dataset.ground_truth)
        ],
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)


def network_id_from_path(path) -> str:
    """``yolo-v3__GPU__8.json`` -> ``yolo-v3:GPU:8``; other stems are used verbatim."""
    return Path(path).stem.replace("__", ":")


def parse_detections(records, dataset: Dataset, network_id: str, source: str = "<memory>") -> DetectionSet:
    if not isinstance(records, list):
        raise MalformedFile(f"{source}: expected a JSON array of results")
    known_images = set(dataset.image_ids)
    dets = []
    clamped = rejected = 0
    for n, rec in enumerate(records):
        try:
            image_id, category_id = rec["image_id"], rec["category_id"]
            score = float(rec["score"])
            box = _as_box(rec["bbox"], f"{source} record {n}")
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedFile(f"{source} record {n}: {exc!r}") from exc
        if image_id not in known_images:
            raise DanglingReference(f"{source} record {n}: unknown image {image_id!r}")
        if category_id not in dataset.categories:
            raise DanglingReference(f"{source} record {n}: unknown category {category_id!r}")
        if not math.isfinite(score):
            raise MalformedFile(f"{source} record {n}: non-finite score")
        if box is None:
            rejected += 1
            continue
        if score > 1.0 or score < 0.0:
            score = min(max(score, 0.0), 1.0)
            clamped += 1
        dets.append(Detection(image_id, category_id, box, score))
    if clamped:
        log.warning("%s: clamped %d scores into [0, 1]", source, clamped)
    if rejected:
        log.warning("%s: rejected %d detections with non-positive extent", source, rejected)
    return DetectionSet(network_id, dets, clamped=clamped, rejected=rejected)


def load_detections(path, dataset: Dataset, network_id: Optional[str] = None) -> DetectionSet:
    path = Path(path)
    return parse_detections(
        _read_json(path), dataset, network_id or network_id_from_path(path), str(path)
    )


def dump_detections(detset: DetectionSet, path) -> None:
    records = [
        {"image_id": d.image_id, "category_id": d.category_id, "bbox": d.box.as_list(), "score": d.score}
        for d in detset.detections
    ]
    with open(path, "w") as f:
        json.dump(records, f)


def _parse_float(value: str, where: str) -> float:
    try:
        return float(value)
    except ValueError as exc:
        raise MalformedFile(f"{where}: not a number: {value!r}") from exc


def parse_profiles(lines: Iterable[str], source: str = "<memory>") -> list[NetworkProfile]:
    reader = csv.reader(lines)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise MalformedFile(f"{source}: empty profile table") from None
    if header[: len(PROFILE_HEADER)] != PROFILE_HEADER:
        raise MalformedFile(f"{source}: header must start with {','.join(PROFILE_HEADER)}")
    extra = header[len(PROFILE_HEADER):]
    for col in extra:
        if not col.startswith("class:") or col == "class:":
            raise MalformedFile(f"{source}: unexpected column {col!r}")

    profiles = []
    seen = {}
    odd_batches = 0
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        where = f"{source}:{lineno}"
        if len(row) != len(header):
            raise MalformedFile(f"{where}: expected {len(header)} fields, got {len(row)}")
        row = [cell.strip() for cell in row]
        try:
            backend = Backend(row[1])
        except ValueError:
            raise MalformedFile(f"{where}: unknown backend {row[1]!r}") from None
        try:
            batch = int(row[2])
        except ValueError:
            raise MalformedFile(f"{where}: batch must be an integer, got {row[2]!r}") from None
        nums = [_parse_float(v, where) for v in row[3:8]]
        per_class = {
            col[len("class:"):]: _parse_float(v, where) for col, v in zip(extra, row[8:]) if v != ""
        }
        try:
            profile = NetworkProfile(row[0], backend, batch, *nums, per_class_map=per_class)
        except ValueError as exc:
            raise MalformedFile(f"{where}: {exc}") from exc
        if profile.key in seen:
            raise DuplicateProfile(f"{where}: {profile.network_id} already defined on line {seen[profile.key]}")
        seen[profile.key] = lineno
        if batch not in CAMPAIGN_BATCH_SIZES:
            odd_batches += 1
        profiles.append(profile)
    if odd_batches:
        log.warning("%s: %d profiles use batch sizes outside %s", source, odd_batches, CAMPAIGN_BATCH_SIZES)
    return profiles


def load_profiles(path) -> list[NetworkProfile]:
    path = Path(path)
    with open(path, newline="") as f:
        return parse_profiles(f, str(path))


def profile_columns(profiles: Iterable[NetworkProfile]) -> list[str]:
    classes = sorted({c for p in profiles for c in p.per_class_map})
    return PROFILE_HEADER + [f"class:{c}" for c in classes]


def profile_row(profile: NetworkProfile, columns: list[str]) -> list[str]:
    row = [
        profile.model_name,
        profile.backend.value,
        str(profile.batch_size),
        repr(profile.latency_ms),
        repr(profile.map_overall),
        repr(profile.map_small),
        repr(profile.map_medium),
        repr(profile.map_large),
    ]
    for col in columns[len(PROFILE_HEADER):]:
        value = profile.per_class_map.get(col[len("class:"):])
        row.append("" if value is None else repr(value))
    return row


def dump_profiles(profiles: list[NetworkProfile], path) -> None:
    columns = profile_columns(profiles)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for p in profiles:
            writer.writerow(profile_row(p, columns))
