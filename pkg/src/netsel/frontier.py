"""Accuracy/latency Pareto frontier and per-model best configurations."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .core import EmptyRegistry, NetworkProfile, check_metric_name


@dataclass(frozen=True)
class FrontierPoint:
    profile: NetworkProfile
    accuracy: float
    latency_ms: float


def _points(profiles: Sequence[NetworkProfile], metric: str) -> list[FrontierPoint]:
    if not profiles:
        raise EmptyRegistry("no profiles to rank")
    check_metric_name(metric)
    return [FrontierPoint(p, p.metric(metric), p.latency_ms) for p in profiles]


def dominates(p: FrontierPoint, q: FrontierPoint) -> bool:
    return (
        p.accuracy >= q.accuracy
        and p.latency_ms <= q.latency_ms
        and (p.accuracy > q.accuracy or p.latency_ms < q.latency_ms)
    )


def pareto_frontier(profiles: Sequence[NetworkProfile], metric: str = "overall") -> list[FrontierPoint]:
    """Non-dominated points sorted by latency ascending.

    Points tied in both coordinates collapse onto the smallest profile key.
    Sweep: after sorting by (latency asc, accuracy desc, key), a point is on
    the frontier iff its accuracy beats everything faster than it.
    """
    points = sorted(
        _points(profiles, metric), key=lambda fp: (fp.latency_ms, -fp.accuracy, fp.profile.key)
    )
    frontier: list[FrontierPoint] = []
    best = None
    for fp in points:
        if best is None or fp.accuracy > best:
            frontier.append(fp)
            best = fp.accuracy
    return frontier


def best_per_network(profiles: Sequence[NetworkProfile], metric: str = "overall") -> dict[str, FrontierPoint]:
    best: dict[str, FrontierPoint] = {}
    for fp in _points(profiles, metric):
        name = fp.profile.model_name
        cur = best.get(name)
        if cur is None or (-fp.accuracy, fp.latency_ms, fp.profile.key) < (
            -cur.accuracy,
            cur.latency_ms,
            cur.profile.key,
        ):
            best[name] = fp
    return dict(sorted(best.items()))
