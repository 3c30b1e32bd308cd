"""Road segments, routes and the validated network that holds them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

from .errors import DuplicateId, EmptyRoute, NonPositiveLength, UnknownRoute, UnknownSegment, ValidationError

DEFAULT_MAX_SEGMENT_LENGTH = 500.0  # meters


@dataclass(frozen=True)
class Segment:
    id: str
    length: float  # meters

    def __post_init__(self):
        if not (self.length > 0) or not math.isfinite(self.length):
            raise NonPositiveLength(f"segment {self.id!r} has non-positive length {self.length}")


@dataclass(frozen=True)
class Route:
    id: str
    segments: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise EmptyRoute(f"route {self.id!r} has no segments")
        if len(set(self.segments)) != len(self.segments):
            raise ValidationError(f"route {self.id!r} visits a segment more than once")

    def __contains__(self, segment_id) -> bool:
        return segment_id in self.segments

    def __len__(self) -> int:
        return len(self.segments)

    def suffix(self, segment_id: str) -> tuple[str, ...]:
        """Segments from ``segment_id`` (inclusive) to the end of the route."""
        return self.segments[self.segments.index(segment_id):]


@dataclass(frozen=True)
class RoadNetwork:
    segments: Mapping[str, Segment]
    routes: Mapping[str, Route]
    max_segment_length: float = DEFAULT_MAX_SEGMENT_LENGTH
    _route_index: Mapping[str, tuple[str, ...]] = field(default=None, repr=False, compare=False)

    def segment(self, segment_id: str) -> Segment:
        try:
            return self.segments[segment_id]
        except KeyError:
            raise UnknownSegment(f"unknown segment {segment_id!r}") from None

    def route(self, route_id: str) -> Route:
        try:
            return self.routes[route_id]
        except KeyError:
            raise UnknownRoute(f"unknown route {route_id!r}") from None

    def routes_through(self, segment_id: str) -> tuple[str, ...]:
        """Ids of routes that contain ``segment_id``, in definition order."""
        return self._route_index.get(segment_id, ())

    @property
    def universe(self) -> frozenset[str]:
        """Segments that appear on at least one route."""
        return frozenset(self._route_index)

    def route_length(self, route_id: str) -> float:
        return sum(self.segments[s].length for s in self.route(route_id).segments)

    def to_dict(self) -> dict:
        return {
            "max_segment_length": self.max_segment_length,
            "segments": [{"id": s.id, "length_m": s.length} for s in self.segments.values()],
            "routes": [{"id": r.id, "segment_ids": list(r.segments)} for r in self.routes.values()],
        }


def build_network(
    segments: Sequence[Segment],
    routes: Sequence[Route],
    max_segment_length: float = DEFAULT_MAX_SEGMENT_LENGTH,
) -> RoadNetwork:
    """Validate segments and routes and assemble an immutable :class:`RoadNetwork`.

    Raises DuplicateId for repeated segment or route ids, UnknownSegment when a
    route references a segment that was not declared, and NonPositiveLength /
    ValidationError for segments longer than ``max_segment_length``.
    """
    if not segments:
        raise ValidationError("network needs at least one segment")
    if not routes:
        raise ValidationError("network needs at least one route")
    if not max_segment_length > 0:
        raise NonPositiveLength("max_segment_length must be positive")

    seg_map: dict[str, Segment] = {}
    for seg in segments:
        if seg.id in seg_map:
            raise DuplicateId(f"duplicate segment id {seg.id!r}")
        # small tolerance so that segmentize() output always validates
        if seg.length > max_segment_length * (1 + 1e-12):
            raise ValidationError(
                f"segment {seg.id!r} is {seg.length} m, longer than the {max_segment_length} m limit"
            )
        seg_map[seg.id] = seg

    route_map: dict[str, Route] = {}
    index: dict[str, list[str]] = {}
    for route in routes:
        if route.id in route_map:
            raise DuplicateId(f"duplicate route id {route.id!r}")
        for sid in route.segments:
            if sid not in seg_map:
                raise UnknownSegment(f"route {route.id!r} references unknown segment {sid!r}")
            index.setdefault(sid, []).append(route.id)
        route_map[route.id] = route

    return RoadNetwork(
        segments=MappingProxyType(seg_map),
        routes=MappingProxyType(route_map),
        max_segment_length=float(max_segment_length),
        _route_index=MappingProxyType({k: tuple(v) for k, v in index.items()}),
    )


def segmentize(road_length: float, max_len: float = DEFAULT_MAX_SEGMENT_LENGTH) -> list[float]:
    """Split a road into the fewest equal pieces that are each at most ``max_len`` long."""
    if not (road_length > 0) or not (max_len > 0):
        raise NonPositiveLength("road_length and max_len must both be positive")
    n = math.ceil(road_length / max_len)
    # guard against float round-up, e.g. 300.0000000001 / 100
    if n > 1 and road_length / (n - 1) <= max_len:
        n -= 1
    piece = road_length / n
    pieces = [piece] * n
    pieces[-1] = road_length - piece * (n - 1)
    return pieces


def segmentize_road(
    road_id: str, road_length: float, max_len: float = DEFAULT_MAX_SEGMENT_LENGTH
) -> list[Segment]:
    """Segments named ``<road_id>.0``, ``<road_id>.1``, ... covering one road."""
    pieces = segmentize(road_length, max_len)
    if len(pieces) == 1:
        return [Segment(road_id, pieces[0])]
    return [Segment(f"{road_id}.{k}", length) for k, length in enumerate(pieces)]


def network_from_dict(data: Mapping) -> RoadNetwork:
    segments = [Segment(str(s["id"]), float(s["length_m"])) for s in data["segments"]]
    routes = [Route(str(r["id"]), tuple(str(x) for x in r["segment_ids"])) for r in data["routes"]]
    return build_network(
        segments, routes, float(data.get("max_segment_length", DEFAULT_MAX_SEGMENT_LENGTH))
    )


def iter_route_pairs(route: Route) -> Iterable[tuple[str, str]]:
    return zip(route.segments, route.segments[1:])
