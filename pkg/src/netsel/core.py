"""Domain types shared across the toolkit.

Boxes are ``(x, y, w, h)`` in continuous pixel coordinates. A per-image score
of ``None`` means the image had no ground truth (``NO_GROUND_TRUTH``); it is
never folded into 0.0.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Optional

NO_GROUND_TRUTH = None

SMALL_AREA = 32 * 32
LARGE_AREA = 96 * 96

CAMPAIGN_BATCH_SIZES = (1, 2, 4, 8, 16, 32)


class NetselError(Exception):
    """Base class for input errors. ``exit_code`` is what the CLI returns."""

    exit_code = 2


class MalformedFile(NetselError):
    pass


class DanglingReference(NetselError):
    pass


class DuplicateProfile(NetselError):
    pass


class MixedImage(NetselError):
    pass


class EmptyRegistry(NetselError):
    pass


class UnknownMetric(NetselError):
    pass


class IncompleteScores(NetselError):
    pass


class EmptyLabels(NetselError):
    pass


class Infeasible(NetselError):
    exit_code = 3


class DegenerateImage(NetselError):
    pass


class EmptyClass(NetselError):
    pass


class DegenerateCorpus(NetselError):
    pass


class UnknownKind(NetselError):
    pass


class SizeBucket(enum.Enum):
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"


class Backend(enum.Enum):
    CPU = "CPU"
    CPU_AVX2 = "CPU_AVX2"
    GPU = "GPU"
    GPU_TRT = "GPU_TRT"
    GPU_TRT_DYN = "GPU_TRT_DYN"


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"box origin must be finite: {self}")
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box extent must be positive: {self}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]


def area_bucket(box: BoundingBox) -> SizeBucket:
    """Classify a box by area; 1024 and 9216 go to the larger bucket."""
    area = box.area
    if area < SMALL_AREA:
        return SizeBucket.SMALL
    if area < LARGE_AREA:
        return SizeBucket.MEDIUM
    return SizeBucket.LARGE


@dataclass(frozen=True)
class GroundTruthBox:
    image_id: Hashable
    category_id: Hashable
    box: BoundingBox
    ignored: bool = False


@dataclass(frozen=True)
class Detection:
    image_id: Hashable
    category_id: Hashable
    box: BoundingBox
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"detection score outside [0, 1]: {self.score}")


def make_network_id(model_name: str, backend: Backend | str, batch_size: int) -> str:
    backend = backend.value if isinstance(backend, Backend) else backend
    return f"{model_name}:{backend}:{batch_size}"


@dataclass(frozen=True)
class NetworkProfile:
    model_name: str
    backend: Backend
    batch_size: int
    latency_ms: float
    map_overall: float
    map_small: float
    map_medium: float
    map_large: float
    per_class_map: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch size must be positive: {self.batch_size}")
        if not self.latency_ms > 0:
            raise ValueError(f"latency must be positive: {self.latency_ms}")
        for name in ("map_overall", "map_small", "map_medium", "map_large"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} outside [0, 1]: {value}")
        for cat, value in self.per_class_map.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"class:{cat} outside [0, 1]: {value}")

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.model_name, self.backend.value, self.batch_size)

    @property
    def network_id(self) -> str:
        return make_network_id(self.model_name, self.backend, self.batch_size)

    def metric(self, name: str) -> float:
        """Accuracy under ``overall``, ``small``, ``medium``, ``large`` or ``class:<id>``."""
        if name in ("overall", "small", "medium", "large"):
            return getattr(self, f"map_{name}")
        if name.startswith("class:"):
            cat = name[len("class:"):]
            if cat in self.per_class_map:
                return self.per_class_map[cat]
            raise UnknownMetric(f"profile {self.network_id} has no accuracy for {name!r}")
        raise UnknownMetric(f"unknown accuracy metric {name!r}")


def check_metric_name(name: str) -> None:
    if name in ("overall", "small", "medium", "large"):
        return
    if name.startswith("class:") and len(name) > len("class:"):
        return
    raise UnknownMetric(f"unknown accuracy metric {name!r}")


@dataclass(frozen=True)
class PerImageScore:
    image_id: Hashable
    network_id: str
    score: Optional[float]
    latency_ms: Optional[float] = None

    def __post_init__(self):
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise ValueError(f"per-image score outside [0, 1]: {self.score}")
