"""Constraint-driven network selection and the stream simulator."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .core import (
    EmptyRegistry,
    Infeasible,
    MalformedFile,
    NetworkProfile,
    check_metric_name,
)


class InfeasiblePolicy(enum.Enum):
    FASTEST_FALLBACK = "fastest"
    REJECT = "reject"


@dataclass(frozen=True)
class ConstraintSpec:
    max_latency_ms: float = math.inf
    min_accuracy: Optional[float] = None
    objective_metric: str = "overall"
    infeasible_policy: InfeasiblePolicy = InfeasiblePolicy.FASTEST_FALLBACK

    def __post_init__(self):
        if not self.max_latency_ms > 0:
            raise ValueError(f"latency bound must be positive, got {self.max_latency_ms}")
        check_metric_name(self.objective_metric)

    def satisfied_by(self, latency_ms: float, objective: float) -> bool:
        if latency_ms > self.max_latency_ms:
            return False
        return self.min_accuracy is None or objective >= self.min_accuracy


@dataclass(frozen=True)
class Selection:
    profile: NetworkProfile
    satisfied: bool


def choose(registry: Sequence[NetworkProfile], c: ConstraintSpec) -> Selection:
    if not registry:
        raise EmptyRegistry("no profiles to select from")
    feasible = [
        p for p in registry if c.satisfied_by(p.latency_ms, p.metric(c.objective_metric))
    ]
    if feasible:
        best = min(feasible, key=lambda p: (-p.metric(c.objective_metric), p.latency_ms, p.key))
        return Selection(best, True)
    if c.infeasible_policy is InfeasiblePolicy.REJECT:
        raise Infeasible(
            f"no profile meets latency <= {c.max_latency_ms} ms"
            + ("" if c.min_accuracy is None else f" and {c.objective_metric} >= {c.min_accuracy}")
        )
    return Selection(min(registry, key=lambda p: (p.latency_ms, p.key)), False)


def select_network(registry: Sequence[NetworkProfile], c: ConstraintSpec) -> NetworkProfile:
    """Most accurate feasible profile; ties go to lower latency, then key.

    With nothing feasible the fastest profile is returned under the fallback
    policy (use :func:`choose` to see the ``satisfied`` flag) and
    :class:`Infeasible` is raised under ``REJECT``.
    """
    return choose(registry, c).profile


@dataclass(frozen=True)
class ContextEvent:
    frame_index: int
    constraints: ConstraintSpec
    label: str = ""


@dataclass(frozen=True)
class TraceEntry:
    frame_index: int
    label: str
    network_id: str
    latency_ms: float
    objective_metric: str
    objective: float
    map_overall: float
    constraint_satisfied: bool
    switch_cost_ms: float = 0.0
    tracked: Mapping[str, float] = field(default_factory=dict)


def simulate_stream(
    registry: Sequence[NetworkProfile],
    events: Sequence[ContextEvent],
    n_frames: int,
    latency_trace: Optional[Mapping[int, float] | Sequence[float]] = None,
    track: Sequence[str] = (),
    switch_cost_ms: float = 0.0,
) -> list[TraceEntry]:
    """Replay a scenario frame by frame.

    ``latency_trace`` overrides the measured latency per frame (a sequence
    indexed by frame, or a ``{frame: ms}`` mapping); satisfaction is then judged
    on the overridden value. ``track`` lists extra accuracy metrics recorded for
    the running network on every frame. ``switch_cost_ms`` is charged on frames
    where the network changes (reported only, not added to latency).
    """
    if not events or events[0].frame_index != 0:
        raise MalformedFile("scenario must start with an event at frame 0")
    for a, b in zip(events, events[1:]):
        if b.frame_index <= a.frame_index:
            raise MalformedFile(f"event frames must increase strictly ({a.frame_index} -> {b.frame_index})")
    for metric in track:
        check_metric_name(metric)
    if isinstance(latency_trace, Sequence):
        latency_trace = dict(enumerate(latency_trace))
    latency_trace = latency_trace or {}

    trace = []
    ev = 0
    selection = None
    previous = None
    for frame in range(n_frames):
        changed = selection is None
        while ev + 1 < len(events) and events[ev + 1].frame_index <= frame:
            ev += 1
            changed = True
        event = events[ev]
        c = event.constraints
        if changed:
            selection = choose(registry, c)
        profile = selection.profile
        latency = latency_trace.get(frame, profile.latency_ms)
        objective = profile.metric(c.objective_metric)
        trace.append(
            TraceEntry(
                frame_index=frame,
                label=event.label,
                network_id=profile.network_id,
                latency_ms=latency,
                objective_metric=c.objective_metric,
                objective=objective,
                map_overall=profile.map_overall,
                constraint_satisfied=selection.satisfied and c.satisfied_by(latency, objective),
                switch_cost_ms=switch_cost_ms if previous not in (None, profile.network_id) else 0.0,
                tracked={m: profile.metric(m) for m in track},
            )
        )
        previous = profile.network_id
    return trace


SCENARIO_HEADER = ["frame", "label", "max_latency_ms", "min_accuracy", "objective"]


def _bound(text: str) -> float:
    text = text.strip()
    if text.lower() in ("", "inf", "none", "unbounded"):
        return math.inf
    return float(text)


def parse_scenario(
    lines: Iterable[str],
    policy: InfeasiblePolicy = InfeasiblePolicy.FASTEST_FALLBACK,
    source: str = "<memory>",
) -> list[ContextEvent]:
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != SCENARIO_HEADER:
        raise MalformedFile(f"{source}: header must be {','.join(SCENARIO_HEADER)}")
    events = []
    for lineno, row in enumerate(reader, start=2):
        try:
            min_acc = row["min_accuracy"].strip()
            c = ConstraintSpec(
                max_latency_ms=_bound(row["max_latency_ms"]),
                min_accuracy=float(min_acc) if min_acc else None,
                objective_metric=row["objective"].strip() or "overall",
                infeasible_policy=policy,
            )
            events.append(ContextEvent(int(row["frame"]), c, row["label"].strip()))
        except (ValueError, AttributeError) as exc:
            raise MalformedFile(f"{source}:{lineno}: {exc}") from exc
    return events


def load_scenario(path, policy: InfeasiblePolicy = InfeasiblePolicy.FASTEST_FALLBACK) -> list[ContextEvent]:
    path = Path(path)
    with open(path, newline="") as f:
        return parse_scenario(f, policy, str(path))


def trace_columns(trace: Sequence[TraceEntry]) -> list[str]:
    tracked = list(trace[0].tracked) if trace else []
    return [
        "frame",
        "label",
        "network_id",
        "latency_ms",
        "objective_metric",
        "objective",
        "map_overall",
        "constraint_satisfied",
        "switch_cost_ms",
    ] + tracked


def trace_row(entry: TraceEntry) -> list[str]:
    return [
        str(entry.frame_index),
        entry.label,
        entry.network_id,
        repr(entry.latency_ms),
        entry.objective_metric,
        repr(entry.objective),
        repr(entry.map_overall),
        "1" if entry.constraint_satisfied else "0",
        repr(entry.switch_cost_ms),
    ] + [repr(v) for v in entry.tracked.values()]
