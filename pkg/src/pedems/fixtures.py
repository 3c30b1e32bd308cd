"""Ready-made networks and histories used by the tests, the docs and ``pedems fixtures``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .density import StaticDensity, SyntheticDensity
from .history import TripHistory, history_from_counts, synthetic_history, uniform_energy_history
from .network import RoadNetwork, Route, Segment, build_network, segmentize_road


def three_route_network() -> RoadNetwork:
    """Five segments shared by three routes from a common first segment r1."""
    segs = [Segment(f"r{k}", 100.0) for k in range(1, 6)]
    routes = [
        Route("R1", ("r1", "r2", "r3")),
        Route("R2", ("r1", "r2", "r4")),
        Route("R3", ("r1", "r5", "r4")),
    ]
    return build_network(segs, routes)


THREE_ROUTE_COUNTS = {"R1": 100, "R2": 200, "R3": 400}
THREE_ROUTE_ENERGY = {"r1": 0.02, "r2": 0.03, "r3": 0.04, "r4": 0.025, "r5": 0.035}


def three_route_history() -> TripHistory:
    return history_from_counts(
        THREE_ROUTE_COUNTS, {s: [e] for s, e in THREE_ROUTE_ENERGY.items()}
    )


# Y network: two feeder roads merging into one trunk


Y_FLOWS = {"r1": 20, "r2": 20, "r3": 40}
Y_DENSITY = 50.0
Y_ENERGY = 0.025


def y_network() -> RoadNetwork:
    segs = [Segment(s, 100.0) for s in ("r1", "r2", "r3")]
    return build_network(segs, [Route("A", ("r1", "r3")), Route("B", ("r2", "r3"))])


def y_history() -> TripHistory:
    return uniform_energy_history(y_network(), {"A": Y_FLOWS["r1"], "B": Y_FLOWS["r2"]}, Y_ENERGY)


def y_density() -> StaticDensity:
    return StaticDensity({s: Y_DENSITY for s in ("r1", "r2", "r3")}, y_network())


# campus: four routes from one start, 100 m segments


CAMPUS_ROUTE_COUNTS = {"route1": 40, "route2": 30, "route3": 20, "route4": 10}
CAMPUS_MAX_SEGMENT = 100.0


def campus_network() -> RoadNetwork:
    """Shared 200 m entrance; route 1 is a long 1.1 km exit, routes 2-4 short exits.

    Roads are cut into 100 m segments. Routes 3 and 4 share their first exit
    segment before splitting.
    """
    roads = {
        "gate": 200.0,
        "long": 1100.0,
        "north": 200.0,
        "east": 100.0,
        "east_a": 100.0,
        "east_b": 100.0,
    }
    pieces = {r: segmentize_road(r, length, CAMPUS_MAX_SEGMENT) for r, length in roads.items()}
    ids = {r: [s.id for s in segs] for r, segs in pieces.items()}
    routes = [
        Route("route1", tuple(ids["gate"] + ids["long"])),
        Route("route2", tuple(ids["gate"] + ids["north"])),
        Route("route3", tuple(ids["gate"] + ids["east"] + ids["east_a"])),
        Route("route4", tuple(ids["gate"] + ids["east"] + ids["east_b"])),
    ]
    segments = [s for segs in pieces.values() for s in segs]
    return build_network(segments, routes, CAMPUS_MAX_SEGMENT)


def campus_history(seed: int = 7, samples_per_segment: int = 20) -> TripHistory:
    return synthetic_history(campus_network(), CAMPUS_ROUTE_COUNTS, samples_per_segment, seed)


def campus_density(seed: int = 11, amplitude: float = 0.0) -> SyntheticDensity:
    """Independent seeded crowd level per segment."""
    return SyntheticDensity(seed=seed, network=campus_network(), low=5.0, high=100.0, amplitude=amplitude)


def campus_centre_density(
    seed: int = 11,
    peak: float = 100.0,
    decay_m: float = 400.0,
    jitter: float = 0.1,
    amplitude: float = 0.05,
) -> SyntheticDensity:
    """Crowd concentrated around the shared start, thinning out toward the exits.

    Baseline on a segment is ``peak * exp(-distance / decay_m)`` times a seeded
    factor in ``[1 - jitter, 1 + jitter]``, where distance is measured from the
    start of the trip to the segment midpoint.
    """
    net = campus_network()
    rng = np.random.default_rng(seed)
    dist: dict[str, float] = {}
    for route in net.routes.values():
        offset = 0.0
        for sid in route.segments:
            length = net.segment(sid).length
            dist.setdefault(sid, offset + length / 2)
            offset += length
    baselines = {
        sid: peak * math.exp(-d / decay_m) * rng.uniform(1 - jitter, 1 + jitter)
        for sid, d in sorted(dist.items())
    }
    return SyntheticDensity(seed=seed, network=net, amplitude=amplitude, baselines=baselines)


@dataclass(frozen=True)
class Fixture:
    network: RoadNetwork
    history: TripHistory


def all_fixtures() -> dict[str, Fixture]:
    return {
        "three_route": Fixture(three_route_network(), three_route_history()),
        "y_network": Fixture(y_network(), y_history()),
        "campus": Fixture(campus_network(), campus_history()),
    }
