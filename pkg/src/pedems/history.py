"""Trip history: how often each route was driven and what each segment cost in electric mode."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

import numpy as np

from .errors import NegativeEnergy, NoSamples, UnknownSegment, ValidationError
from .network import RoadNetwork

DEFAULT_CAPACITY = 100

# energies observed per 100 m segment in pure electric mode
SYNTHETIC_ENERGY_RANGE = (0.0, 0.05)  # kWh


@dataclass(frozen=True)
class EnergyEstimate:
    segment_id: str
    mean_kwh: float
    max_kwh: float
    sample_count: int


@dataclass(frozen=True)
class TripHistory:
    """Immutable snapshot of stored trips.

    ``route_counts`` maps route id to the number of times it was driven.
    ``last_recorded`` holds a logical clock value per route so that eviction
    can tell old rare routes from freshly recorded ones.
    """

    route_counts: Mapping[str, int] = field(default_factory=dict)
    energy_samples: Mapping[str, tuple[float, ...]] = field(default_factory=dict)
    capacity: int = DEFAULT_CAPACITY
    last_recorded: Mapping[str, int] = field(default_factory=dict)
    clock: int = 0

    def __post_init__(self):
        if self.capacity < 1:
            raise ValidationError("history capacity must be at least 1")
        if len(self.route_counts) > self.capacity:
            raise ValidationError(
                f"{len(self.route_counts)} routes stored but capacity is {self.capacity}"
            )
        for rid, n in self.route_counts.items():
            if int(n) != n or n < 1:
                raise ValidationError(f"route {rid!r} has invalid count {n}")
        for sid, samples in self.energy_samples.items():
            for v in samples:
                if not v >= 0 or not math.isfinite(v):
                    raise NegativeEnergy(f"segment {sid!r} has invalid energy sample {v}")

    @property
    def total_trips(self) -> int:
        return sum(self.route_counts.values())

    def count(self, route_id: str) -> int:
        return self.route_counts.get(route_id, 0)

    def to_dict(self) -> dict:
        return {
            "capacity": self.capacity,
            "trips": [{"route_id": r, "count": n} for r, n in self.route_counts.items()],
            "energy_samples": [
                {"segment_id": s, "kwh": list(v)} for s, v in self.energy_samples.items()
            ],
        }


def history_from_counts(
    counts: Mapping[str, int],
    energy_samples: Optional[Mapping[str, list]] = None,
    capacity: int = DEFAULT_CAPACITY,
) -> TripHistory:
    counts = {str(k): int(v) for k, v in counts.items()}
    samples = {str(k): tuple(float(x) for x in v) for k, v in (energy_samples or {}).items()}
    return TripHistory(
        route_counts=counts,
        energy_samples=samples,
        capacity=capacity,
        last_recorded={rid: k for k, rid in enumerate(counts)},
        clock=len(counts),
    )


def history_from_dict(data: Mapping) -> TripHistory:
    counts: dict[str, int] = {}
    for trip in data.get("trips", []):
        rid = str(trip["route_id"])
        counts[rid] = counts.get(rid, 0) + int(trip.get("count", 1))
    samples: dict[str, list] = {}
    for entry in data.get("energy_samples", []):
        samples.setdefault(str(entry["segment_id"]), []).extend(entry["kwh"])
    return history_from_counts(counts, samples, int(data.get("capacity", DEFAULT_CAPACITY)))


def validate_history(history: TripHistory, network: RoadNetwork) -> None:
    for rid in history.route_counts:
        network.route(rid)
    for sid in history.energy_samples:
        network.segment(sid)


def record_trip(
    history: TripHistory,
    network: RoadNetwork,
    route_id: str,
    energies: Optional[Mapping[str, float]] = None,
) -> TripHistory:
    """Return a new history with one more trip along ``route_id``.

    When a previously unseen route would push the store over capacity, the
    stored route with the smallest count is dropped first (oldest record wins
    ties). Energy samples are kept per segment and survive eviction.
    """
    route = network.route(route_id)
    energies = dict(energies or {})
    for sid, kwh in energies.items():
        if sid not in route:
            raise UnknownSegment(f"segment {sid!r} is not on route {route_id!r}")
        if not kwh >= 0 or not math.isfinite(kwh):
            raise NegativeEnergy(f"energy {kwh} for segment {sid!r} is negative or invalid")

    counts = dict(history.route_counts)
    last = dict(history.last_recorded)
    if route_id not in counts and len(counts) >= history.capacity:
        victim = min(counts, key=lambda r: (counts[r], last.get(r, -1)))
        del counts[victim]
        last.pop(victim, None)
    counts[route_id] = counts.get(route_id, 0) + 1
    last[route_id] = history.clock

    samples = dict(history.energy_samples)
    for sid, kwh in energies.items():
        samples[sid] = samples.get(sid, ()) + (float(kwh),)

    return replace(
        history,
        route_counts=counts,
        energy_samples=samples,
        last_recorded=last,
        clock=history.clock + 1,
    )


def expected_energy(history: TripHistory, segment_id: str) -> EnergyEstimate:
    samples = history.energy_samples.get(segment_id)
    if not samples:
        raise NoSamples(f"no energy samples for segment {segment_id!r}")
    arr = np.asarray(samples, dtype=float)
    mean = float(arr.mean())
    top = float(arr.max())
    # mean of identical floats can round one ulp above the max
    return EnergyEstimate(segment_id, min(mean, top), top, len(samples))


def synthetic_history(
    network: RoadNetwork,
    counts: Mapping[str, int],
    samples_per_segment: int = 20,
    seed: int = 0,
    energy_range: tuple[float, float] = SYNTHETIC_ENERGY_RANGE,
    capacity: int = DEFAULT_CAPACITY,
) -> TripHistory:
    """Trip counts as given plus seeded uniform energy samples for every used segment."""
    for rid in counts:
        network.route(rid)
    rng = np.random.default_rng(seed)
    lo, hi = energy_range
    used = sorted({s for rid in counts for s in network.route(rid).segments})
    samples = {sid: rng.uniform(lo, hi, samples_per_segment).tolist() for sid in used}
    return history_from_counts(counts, samples, capacity)


def uniform_energy_history(
    network: RoadNetwork, counts: Mapping[str, int], kwh: float, capacity: int = DEFAULT_CAPACITY
) -> TripHistory:
    """History in which every segment always costs exactly ``kwh``."""
    used = {s for rid in counts for s in network.route(rid).segments}
    return history_from_counts(counts, {s: [kwh] for s in used}, capacity)


__all__ = [
    "DEFAULT_CAPACITY",
    "EnergyEstimate",
    "TripHistory",
    "expected_energy",
    "history_from_counts",
    "history_from_dict",
    "record_trip",
    "synthetic_history",
    "uniform_energy_history",
    "validate_history",
]
