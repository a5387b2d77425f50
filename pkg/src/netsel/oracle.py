"""Per-image best-network labels and their distribution."""
from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

from .core import EmptyLabels, EmptyRegistry, IncompleteScores, NetworkProfile, PerImageScore
from .frontier import FrontierPoint

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OracleLabel:
    image_id: Hashable
    network_id: str
    score: float
    runner_up_margin: float


def _latency(s: PerImageScore, registry: dict[str, NetworkProfile]) -> float:
    if s.latency_ms is not None:
        return s.latency_ms
    return registry[s.network_id].latency_ms


def _group_scores(
    scores: Iterable[PerImageScore], networks: Sequence[str]
) -> dict[Hashable, dict[str, PerImageScore]]:
    wanted = set(networks)
    by_image: dict[Hashable, dict[str, PerImageScore]] = defaultdict(dict)
    for s in scores:
        if s.network_id in wanted:
            by_image[s.image_id][s.network_id] = s
    for image_id, row in by_image.items():
        missing = wanted - row.keys()
        if missing:
            raise IncompleteScores(f"image {image_id!r} has no score for {sorted(missing)}")
    return by_image


def _label_images(by_image, registry, images=None) -> tuple[list[OracleLabel], list[Hashable]]:
    labels, excluded = [], []
    for image_id in by_image if images is None else images:
        row = by_image[image_id]
        if all(s.score is None for s in row.values()):
            excluded.append(image_id)
            continue
        ranked = sorted(
            row.values(),
            key=lambda s: (-(s.score or 0.0), _latency(s, registry), s.network_id),
        )
        winner = ranked[0]
        margin = (winner.score or 0.0) - (ranked[1].score or 0.0) if len(ranked) > 1 else 0.0
        labels.append(OracleLabel(image_id, winner.network_id, winner.score or 0.0, margin))
    if excluded:
        log.info("oracle: %d images without ground truth excluded", len(excluded))
    return labels, excluded


def build_oracle(
    scores: Sequence[PerImageScore], profiles: Sequence[NetworkProfile]
) -> list[OracleLabel]:
    """Label each image with its highest-scoring network.

    Ties go to the lower latency (the score's own latency when present, else the
    profile's), then to the smaller network id. Images with no ground truth are
    dropped; see :func:`unlabeled_images`.
    """
    return build_oracle_with_exclusions(scores, profiles)[0]


def build_oracle_with_exclusions(
    scores: Sequence[PerImageScore], profiles: Sequence[NetworkProfile]
) -> tuple[list[OracleLabel], list[Hashable]]:
    if not profiles:
        raise EmptyRegistry("oracle needs at least one network")
    registry = {p.network_id: p for p in profiles}
    by_image = _group_scores(scores, list(registry))
    return _label_images(by_image, registry)


def unlabeled_images(scores: Sequence[PerImageScore]) -> list[Hashable]:
    """Images whose every score is ``NoGroundTruth``, in first-seen order."""
    state: dict[Hashable, bool] = {}
    for s in scores:
        state[s.image_id] = state.get(s.image_id, True) and s.score is None
    return [i for i, empty in state.items() if empty]


@dataclass(frozen=True)
class Share:
    count: int
    fraction: float


def oracle_distribution(labels: Sequence[OracleLabel]) -> dict[str, Share]:
    if not labels:
        raise EmptyLabels("no oracle labels to summarize")
    counts = Counter(l.network_id for l in labels)
    total = len(labels)
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return {net: Share(n, n / total) for net, n in ordered}


def restrict_to_pareto(
    labels: Sequence[OracleLabel],
    scores: Sequence[PerImageScore],
    frontier: Sequence[FrontierPoint],
) -> list[OracleLabel]:
    """Relabel the already-labelled images using only frontier networks."""
    if not frontier:
        raise EmptyRegistry("frontier is empty")
    registry = {fp.profile.network_id: fp.profile for fp in frontier}
    by_image = _group_scores(scores, list(registry))
    missing = [l.image_id for l in labels if l.image_id not in by_image]
    if missing:
        raise IncompleteScores(f"no scores for labelled images {missing[:5]}")
    relabeled, _ = _label_images(by_image, registry, images=[l.image_id for l in labels])
    return relabeled


ORACLE_HEADER = ["image_id", "network_id", "score", "margin"]


def oracle_row(label: OracleLabel) -> list[str]:
    return [str(label.image_id), label.network_id, repr(label.score), repr(label.runner_up_margin)]
