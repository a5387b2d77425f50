"""Adaptive object-detection network selection toolkit."""
from .core import (
    NO_GROUND_TRUTH,
    Backend,
    BoundingBox,
    Detection,
    GroundTruthBox,
    NetworkProfile,
    PerImageScore,
    SizeBucket,
    area_bucket,
)
from .evaluation import average_precision, evaluate_dataset, evaluate_per_image, iou, match_detections
from .frontier import best_per_network, pareto_frontier
from .ingest import load_detections, load_ground_truth, load_profiles
from .oracle import build_oracle, oracle_distribution, restrict_to_pareto
from .features import FEATURE_NAMES, FeatureConfig, RasterImage, extract_all
from .predictor import LabeledCorpus, Pipeline, pca_fit, pca_transform, run_training, train
from .reactive import ConstraintSpec, ContextEvent, InfeasiblePolicy, select_network, simulate_stream

__version__ = "0.1.0"

__all__ = [
    "NO_GROUND_TRUTH",
    "Backend",
    "BoundingBox",
    "Detection",
    "GroundTruthBox",
    "NetworkProfile",
    "PerImageScore",
    "SizeBucket",
    "area_bucket",
    "average_precision",
    "evaluate_dataset",
    "evaluate_per_image",
    "iou",
    "match_detections",
    "best_per_network",
    "pareto_frontier",
    "load_detections",
    "load_ground_truth",
    "load_profiles",
    "build_oracle",
    "oracle_distribution",
    "restrict_to_pareto",
    "FEATURE_NAMES",
    "FeatureConfig",
    "RasterImage",
    "extract_all",
    "LabeledCorpus",
    "Pipeline",
    "pca_fit",
    "pca_transform",
    "run_training",
    "train",
    "ConstraintSpec",
    "ContextEvent",
    "InfeasiblePolicy",
    "select_network",
    "simulate_stream",
]
