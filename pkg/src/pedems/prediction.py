"""Route and segment probabilities given the segment the vehicle is currently on.

Two backends are provided. The count backend weighs every stored route that
passes through the current segment by how often it was driven. The Markov
backend compresses the same history into segment-to-segment turning
probabilities and propagates reach probabilities forward.
"""

from __future__ import annotations

from dataclasses import dataclass
from graphlib import CycleError, TopologicalSorter
from typing import Mapping

from .errors import CyclicModel, EmptyHistory, NoMatchingRoute, UnknownState
from .history import TripHistory
from .network import RoadNetwork


@dataclass(frozen=True)
class SegmentPrediction:
    current_segment: str
    route_probs: Mapping[str, float]
    segment_probs: Mapping[str, float]

    def likely_segments(self) -> list[str]:
        """Segments with non-zero probability, current segment first."""
        rest = [s for s, p in self.segment_probs.items() if p > 0 and s != self.current_segment]
        return [self.current_segment] + rest

    def matching_routes(self) -> list[str]:
        return [r for r, p in self.route_probs.items() if p > 0]


def _matching_routes(history: TripHistory, network: RoadNetwork, current_segment: str) -> list[str]:
    network.segment(current_segment)
    through = set(network.routes_through(current_segment))
    matches = [rid for rid in history.route_counts if rid in through]
    if not matches:
        raise NoMatchingRoute(f"no stored route passes through segment {current_segment!r}")
    return matches


def route_probabilities(
    history: TripHistory, network: RoadNetwork, current_segment: str
) -> dict[str, float]:
    """Count-weighted probability of each stored route given the current segment.

    Routes that do not pass through ``current_segment`` get probability 0.
    """
    matches = _matching_routes(history, network, current_segment)
    total = sum(history.route_counts[r] for r in matches)
    probs = {rid: 0.0 for rid in history.route_counts}
    for rid in matches:
        probs[rid] = history.route_counts[rid] / total
    return probs


def segment_probabilities(
    history: TripHistory, network: RoadNetwork, current_segment: str
) -> SegmentPrediction:
    route_probs = route_probabilities(history, network, current_segment)
    seg_probs: dict[str, float] = {}
    for rid in history.route_counts:
        for sid in network.route(rid).segments:
            seg_probs.setdefault(sid, 0.0)
    # sum in route order so results do not depend on dict iteration quirks
    for rid, p in route_probs.items():
        if p == 0:
            continue
        for sid in network.route(rid).suffix(current_segment):
            seg_probs[sid] += p
    seg_probs[current_segment] = 1.0
    for sid, p in seg_probs.items():
        if p > 1.0:
            seg_probs[sid] = 1.0
    return SegmentPrediction(current_segment, route_probs, seg_probs)


# Markov backend


@dataclass(frozen=True)
class MarkovModel:
    """First-order chain over segments.

    ``transition[a][b]`` is the fraction of trips on ``a`` that continued onto
    ``b``; ``stop[a]`` is the fraction that ended on ``a``. Each row of
    ``transition`` plus its ``stop`` entry sums to 1.
    """

    states: tuple[str, ...]
    transition: Mapping[str, Mapping[str, float]]
    stop: Mapping[str, float]

    def successors(self, state: str) -> Mapping[str, float]:
        return self.transition.get(state, {})


def build_markov(history: TripHistory, network: RoadNetwork) -> MarkovModel:
    if not history.route_counts:
        raise EmptyHistory("cannot build a Markov model from an empty history")
    flows: dict[str, dict[str, float]] = {}
    ends: dict[str, float] = {}
    states: dict[str, None] = {}
    for rid, n in history.route_counts.items():
        segs = network.route(rid).segments
        for sid in segs:
            states.setdefault(sid)
        for a, b in zip(segs, segs[1:]):
            row = flows.setdefault(a, {})
            row[b] = row.get(b, 0.0) + n
        ends[segs[-1]] = ends.get(segs[-1], 0.0) + n

    transition: dict[str, dict[str, float]] = {}
    stop: dict[str, float] = {}
    for s in states:
        row = flows.get(s, {})
        out = sum(row.values()) + ends.get(s, 0.0)
        transition[s] = {b: c / out for b, c in row.items()}
        stop[s] = ends.get(s, 0.0) / out
    return MarkovModel(tuple(states), transition, stop)


def markov_segment_probabilities(model: MarkovModel, current_segment: str) -> SegmentPrediction:
    """Probability of ever reaching each segment from ``current_segment``.

    Exact forward propagation over the states reachable from the current one;
    the reachable subgraph must be acyclic.
    """
    if current_segment not in model.transition:
        raise UnknownState(f"segment {current_segment!r} is not a state of the model")

    reachable = {current_segment}
    frontier = [current_segment]
    while frontier:
        a = frontier.pop()
        for b in model.successors(a):
            if b not in reachable:
                reachable.add(b)
                frontier.append(b)

    graph: dict[str, list[str]] = {s: [] for s in reachable}
    for a in reachable:
        for b in model.successors(a):
            graph[b].append(a)
    try:
        order = list(TopologicalSorter(graph).static_order())
    except CycleError as exc:
        raise CyclicModel(f"reachable states from {current_segment!r} contain a cycle") from exc

    reach = {s: 0.0 for s in model.states}
    reach[current_segment] = 1.0
    for a in order:
        for b, p in model.successors(a).items():
            reach[b] += reach[a] * p
    reach = {s: min(p, 1.0) for s, p in reach.items()}
    reach[current_segment] = 1.0
    return SegmentPrediction(current_segment, {}, reach)


class Predictor:
    """Callable wrapper that picks a backend once and caches its model."""

    backends = ("counts", "markov")

    def __init__(self, history: TripHistory, network: RoadNetwork, backend: str = "counts"):
        if backend not in self.backends:
            raise ValueError(f"unknown predictor backend {backend!r}")
        self.history = history
        self.network = network
        self.backend = backend
        self._model = build_markov(history, network) if backend == "markov" else None

    def __call__(self, current_segment: str) -> SegmentPrediction:
        if self._model is None:
            return segment_probabilities(self.history, self.network, current_segment)
        pred = markov_segment_probabilities(self._model, current_segment)
        # route-level view is still useful to the robust policy and to reports
        try:
            routes = route_probabilities(self.history, self.network, current_segment)
        except NoMatchingRoute:
            routes = {}
        return SegmentPrediction(current_segment, routes, pred.segment_probs)
