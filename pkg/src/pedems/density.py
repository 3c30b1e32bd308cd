"""Pedestrian density providers.

A provider answers ``density(segment_id, t)`` with the expected number of
people along a segment at simulation time ``t`` (seconds). Values are real
numbers so normalised feeds work unchanged.
"""

from __future__ import annotations

import bisect
import json
import math
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Protocol, Sequence

import numpy as np

from .errors import UnknownSegment, ValidationError
from .network import RoadNetwork


class DensityProvider(Protocol):
    def density(self, segment_id: str, t: float) -> float: ...


def get_density(provider: DensityProvider, segment_id: str, t: float = 0.0) -> float:
    return provider.density(segment_id, t)


@dataclass(frozen=True)
class DensitySnapshot:
    time: float
    counts: Mapping[str, float]

    def __post_init__(self):
        for s, v in self.counts.items():
            if not v >= 0:
                raise ValidationError(f"negative density {v} on segment {s!r}")

    def to_dict(self) -> dict:
        return {"t": self.time, "counts": dict(self.counts)}


@dataclass(frozen=True)
class PointObservation:
    segment_id: str
    weight: float = 1.0
    offset: Optional[float] = None  # meters along the segment, if known

    def __post_init__(self):
        if not self.weight >= 0:
            raise ValidationError(f"observation weight must be >= 0, got {self.weight}")


def _check_keys(keys: Iterable[str], network: Optional[RoadNetwork]) -> None:
    if network is None:
        return
    for s in keys:
        network.segment(s)


class StaticDensity:
    """Fixed table; time is ignored. Segments not in the table get ``default``."""

    def __init__(
        self,
        table: Mapping[str, float],
        network: Optional[RoadNetwork] = None,
        default: float = 0.0,
    ):
        _check_keys(table, network)
        for s, v in table.items():
            if not v >= 0:
                raise ValidationError(f"negative density {v} on segment {s!r}")
        self.table = dict(table)
        self.network = network
        self.default = default

    def density(self, segment_id: str, t: float = 0.0) -> float:
        if segment_id in self.table:
            return float(self.table[segment_id])
        if self.network is not None:
            self.network.segment(segment_id)
            return self.default
        raise UnknownSegment(f"no density for segment {segment_id!r}")


def _segment_key(segment_id: str) -> int:
    return zlib.crc32(segment_id.encode("utf-8"))


class SyntheticDensity:
    """Seeded sinusoidal crowd levels.

    Each segment gets a baseline drawn uniformly from ``[low, high]`` and a
    random phase; the density at time ``t`` is

        baseline * (1 + amplitude * sin(2*pi*t/period + phase))

    clipped at zero. Everything is a pure function of (seed, segment, t).
    A ``baselines`` mapping overrides the random draw for chosen segments.
    """

    def __init__(
        self,
        seed: int = 0,
        network: Optional[RoadNetwork] = None,
        low: float = 0.0,
        high: float = 100.0,
        amplitude: float = 0.0,
        period: float = 600.0,
        baselines: Optional[Mapping[str, float]] = None,
    ):
        if not 0 <= low <= high:
            raise ValidationError("need 0 <= low <= high")
        if period <= 0:
            raise ValidationError("period must be positive")
        self.seed = int(seed)
        self.network = network
        self.low = low
        self.high = high
        self.amplitude = amplitude
        self.period = period
        self.baselines = dict(baselines or {})
        _check_keys(self.baselines, network)

    def _params(self, segment_id: str) -> tuple[float, float]:
        rng = np.random.default_rng([self.seed, _segment_key(segment_id)])
        base = rng.uniform(self.low, self.high)
        phase = rng.uniform(0.0, 2 * math.pi)
        return float(self.baselines.get(segment_id, base)), float(phase)

    def density(self, segment_id: str, t: float = 0.0) -> float:
        if self.network is not None:
            self.network.segment(segment_id)
        base, phase = self._params(segment_id)
        value = base * (1.0 + self.amplitude * math.sin(2 * math.pi * t / self.period + phase))
        return max(value, 0.0)


class ReplayDensity:
    """Replays timestamped snapshots; the latest snapshot at or before ``t`` wins.

    Before the first snapshot the first one is used. Segments absent from the
    active snapshot get ``default``.
    """

    def __init__(
        self,
        snapshots: Sequence[DensitySnapshot],
        network: Optional[RoadNetwork] = None,
        default: float = 0.0,
    ):
        if not snapshots:
            raise ValidationError("replay needs at least one snapshot")
        snaps = sorted(snapshots, key=lambda s: s.time)
        for snap in snaps:
            _check_keys(snap.counts, network)
        self.snapshots = snaps
        self._times = [s.time for s in snaps]
        self.network = network
        self.default = default

    def snapshot_at(self, t: float) -> DensitySnapshot:
        k = bisect.bisect_right(self._times, t) - 1
        return self.snapshots[max(k, 0)]

    def density(self, segment_id: str, t: float = 0.0) -> float:
        if self.network is not None:
            self.network.segment(segment_id)
        return float(self.snapshot_at(t).counts.get(segment_id, self.default))

    @classmethod
    def from_jsonl(cls, path, network: Optional[RoadNetwork] = None) -> "ReplayDensity":
        snaps = []
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            counts = rec.get("counts")
            if counts is None:
                counts = {k: v for k, v in rec.items() if k != "t"}
            snaps.append(DensitySnapshot(float(rec["t"]), {str(k): float(v) for k, v in counts.items()}))
        return cls(snaps, network)


def aggregate_points(
    observations: Iterable[PointObservation], network: RoadNetwork, time: float = 0.0
) -> DensitySnapshot:
    """Sum observation weights per segment. Every network segment appears in the result."""
    counts = {s: 0.0 for s in network.segments}
    for obs in observations:
        seg = network.segment(obs.segment_id)
        if obs.offset is not None and not 0.0 <= obs.offset <= seg.length:
            raise ValidationError(
                f"offset {obs.offset} lies outside segment {obs.segment_id!r} ({seg.length} m)"
            )
        counts[obs.segment_id] += obs.weight
    return DensitySnapshot(time, counts)


def parse_density_spec(spec: str, network: Optional[RoadNetwork] = None, base_dir=None) -> DensityProvider:
    """Build a provider from ``static:<file>``, ``replay:<file>`` or ``synthetic:<seed>``."""
    kind, _, arg = spec.partition(":")
    if kind == "synthetic":
        return SyntheticDensity(seed=int(arg or 0), network=network)
    path = Path(arg)
    if base_dir is not None and not path.is_absolute():
        path = Path(base_dir) / path
    if kind == "static":
        table = json.loads(path.read_text())
        return StaticDensity({str(k): float(v) for k, v in table.items()}, network)
    if kind == "replay":
        return ReplayDensity.from_jsonl(path, network)
    raise ValidationError(f"unknown density source {spec!r}")


def density_from_dict(data: Mapping, network: Optional[RoadNetwork] = None, base_dir=None) -> DensityProvider:
    """Provider from an inline scenario entry, e.g. ``{"type": "static", "table": {...}}``."""
    kind = data.get("type", "static")
    if kind == "static":
        if "file" in data:
            return parse_density_spec(f"static:{data['file']}", network, base_dir)
        return StaticDensity(
            {str(k): float(v) for k, v in data["table"].items()},
            network,
            float(data.get("default", 0.0)),
        )
    if kind == "synthetic":
        return SyntheticDensity(
            seed=int(data.get("seed", 0)),
            network=network,
            low=float(data.get("low", 0.0)),
            high=float(data.get("high", 100.0)),
            amplitude=float(data.get("amplitude", 0.0)),
            period=float(data.get("period", 600.0)),
            baselines=data.get("baselines"),
        )
    if kind == "replay":
        if "file" in data:
            return parse_density_spec(f"replay:{data['file']}", network, base_dir)
        snaps = [
            DensitySnapshot(float(s["t"]), {str(k): float(v) for k, v in s["counts"].items()})
            for s in data["snapshots"]
        ]
        return ReplayDensity(snaps, network)
    raise ValidationError(f"unknown density type {kind!r}")
