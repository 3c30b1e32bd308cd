"""JSON/CSV readers and writers for networks, histories, instances, plans and traces."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence, Union

from . import __version__
from .density import DensityProvider, density_from_dict, parse_density_spec
from .errors import ValidationError
from .history import TripHistory, history_from_dict
from .network import RoadNetwork, network_from_dict
from .optimizer import AllocationPlan, SegmentInstance
from .simulator import VehicleConfig

PathLike = Union[str, Path]


@dataclass
class RunManifest:
    command: str
    inputs: dict[str, str] = field(default_factory=dict)
    seed: Optional[int] = None
    output_dir: Optional[str] = None
    version: str = __version__

    def to_dict(self) -> dict:
        return asdict(self)


def read_json(path: PathLike) -> Any:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_json(path: PathLike, data: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=False) + "\n", encoding="utf-8")
    return path


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return path


def read_csv(path: PathLike) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _resolve(ref, base_dir: Optional[Path]):
    """Inline dict, or a path relative to ``base_dir``."""
    if isinstance(ref, Mapping):
        return ref
    path = Path(ref)
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    return read_json(path)


def load_network(ref, base_dir: Optional[Path] = None) -> RoadNetwork:
    return network_from_dict(_resolve(ref, base_dir))


def load_history(ref, base_dir: Optional[Path] = None) -> TripHistory:
    return history_from_dict(_resolve(ref, base_dir))


def load_density(ref, network: Optional[RoadNetwork] = None, base_dir: Optional[Path] = None) -> DensityProvider:
    if isinstance(ref, str):
        return parse_density_spec(ref, network, base_dir)
    return density_from_dict(ref, network, base_dir)


# optimisation instances


@dataclass
class InstanceFile:
    instances: list[SegmentInstance]
    budget: float
    routes: Optional[dict[str, list[str]]] = None
    green: list[str] = field(default_factory=list)
    caps: dict[str, float] = field(default_factory=dict)


def instance_from_dict(data: Mapping) -> InstanceFile:
    instances = [
        SegmentInstance(
            id=str(s["id"]),
            p=float(s.get("p", 1.0)),
            d=float(s["d"]),
            e=float(s["e"]),
            f=float(s.get("f", 1.0)),
        )
        for s in data["segments"]
    ]
    routes = data.get("routes")
    if routes is not None and not isinstance(routes, Mapping):
        routes = {f"route{k + 1}": list(r) for k, r in enumerate(routes)}
    return InstanceFile(
        instances=instances,
        budget=float(data.get("budget", 0.0)),
        routes={str(k): [str(s) for s in v] for k, v in routes.items()} if routes else None,
        green=[str(s) for s in data.get("green", [])],
        caps={str(k): float(v) for k, v in data.get("caps", {}).items()},
    )


def instance_to_dict(inst: InstanceFile) -> dict:
    out: dict[str, Any] = {
        "budget": inst.budget,
        "segments": [asdict(i) for i in inst.instances],
    }
    if inst.routes:
        out["routes"] = inst.routes
    if inst.green:
        out["green"] = inst.green
    if inst.caps:
        out["caps"] = inst.caps
    return out


PLAN_COLUMNS = ("segment_id", "x", "objective_coefficient")


def plan_rows(plan: AllocationPlan) -> list[tuple]:
    return [(s, x, plan.objective_terms.get(s, 0.0)) for s, x in plan.x.items()]


# scenarios

VEHICLE_FIELDS = {
    "initial_budget",
    "policy",
    "energy_model",
    "actual_route",
    "origin",
    "battery_capacity",
    "initial_soc",
    "realization",
    "green_segments",
    "green_base",
    "speed",
    "name",
}


def vehicle_from_dict(data: Mapping) -> VehicleConfig:
    unknown = set(data) - VEHICLE_FIELDS - {"count"}
    if unknown:
        raise ValidationError(f"unknown vehicle fields: {sorted(unknown)}")
    kwargs = {k: v for k, v in data.items() if k in VEHICLE_FIELDS}
    if "green_segments" in kwargs:
        kwargs["green_segments"] = tuple(kwargs["green_segments"])
    return VehicleConfig(**kwargs)


@dataclass
class Scenario:
    network: RoadNetwork
    history: TripHistory
    density: DensityProvider
    data: dict
    base_dir: Path

    @property
    def seed(self) -> int:
        return int(self.data.get("seed", 0))

    @property
    def predictor(self) -> str:
        return self.data.get("predictor", "counts")

    @property
    def flows(self) -> dict[str, float]:
        return {str(k): float(v) for k, v in self.data.get("flows", {}).items()}

    @property
    def caps(self) -> dict[str, float]:
        return {str(k): float(v) for k, v in self.data.get("caps", {}).items()}

    def vehicle(self) -> VehicleConfig:
        return vehicle_from_dict(self.data["vehicle"])

    def fleet(self, overrides: Optional[Mapping] = None) -> list[VehicleConfig]:
        out = []
        for entry in self.data["vehicles"]:
            merged = {**entry, **(overrides or {})}
            cfg = vehicle_from_dict(merged)
            for k in range(int(entry.get("count", 1))):
                out.append(VehicleConfig(**{**asdict(cfg), "name": f"{cfg.name or cfg.actual_route or 'veh'}#{k}"}))
        return out


def load_scenario(path: PathLike) -> Scenario:
    path = Path(path)
    data = read_json(path)
    base = path.parent
    network = load_network(data["network"], base)
    history = load_history(data["history"], base)
    density = load_density(data["density"], network, base)
    return Scenario(network, history, density, data, base)
