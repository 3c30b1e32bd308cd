"""Rolling-horizon execution of the allocation problems.

A vehicle drives its actual route one segment at a time. On entering each
segment it re-predicts the rest of the trip, refreshes pedestrian densities,
re-solves its policy with whatever budget is left and applies the electric
fraction planned for the current segment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy.stats import spearmanr

from .density import DensityProvider
from .errors import InsufficientBudgetForGreenZone, NegativeBudget, UnknownRoute, ValidationError
from .history import EnergyEstimate, TripHistory, expected_energy
from .network import RoadNetwork
from .optimizer import (
    AllocationPlan,
    FleetPlan,
    PlanStatus,
    SegmentInstance,
    none_opt_plan,
    solve_capped_fleet,
    solve_expected,
    solve_flow,
    solve_green_zone,
    solve_robust,
)
from .prediction import Predictor, SegmentPrediction, route_probabilities

BATTERY_CAPACITY_KWH = 4.4


class Policy(str, Enum):
    EXPECTED = "Expected"
    ROBUST = "Robust"
    FLOW = "Flow"
    GREEN_ZONE = "GreenZone"
    NONE_OPT = "NoneOpt"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class VehicleConfig:
    initial_budget: float
    policy: Policy = Policy.EXPECTED
    energy_model: str = "mean"  # "mean" or "max": which estimate the planner sees
    actual_route: Optional[str] = None  # None: sample one at the origin
    origin: Optional[str] = None  # start segment; defaults to the route's first
    battery_capacity: float = BATTERY_CAPACITY_KWH
    initial_soc: Optional[float] = None  # kWh, defaults to a full battery
    # "sampled": each segment costs a draw from its history samples
    # "forecast": each segment costs exactly the planner's estimate
    realization: str = "sampled"
    green_segments: tuple[str, ...] = ()
    green_base: str = "expected"
    speed: float = 8.0  # m/s, only used to advance the density clock
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "policy", Policy(self.policy))
        object.__setattr__(self, "green_segments", tuple(self.green_segments))
        if not self.initial_budget >= 0:
            raise NegativeBudget(f"initial budget {self.initial_budget} is negative")
        if self.initial_budget > self.battery_capacity:
            raise ValidationError("initial budget exceeds battery capacity")
        if self.soc0 < self.initial_budget:
            raise ValidationError("initial SOC is below the energy budget")
        if self.energy_model not in ("mean", "max"):
            raise ValidationError(f"energy_model must be 'mean' or 'max', not {self.energy_model!r}")
        if self.realization not in ("sampled", "forecast"):
            raise ValidationError(f"unknown realization {self.realization!r}")
        if self.actual_route is None and self.origin is None:
            raise ValidationError("need an actual route or an origin to sample one from")
        if not self.speed > 0:
            raise ValidationError("speed must be positive")

    @property
    def soc0(self) -> float:
        return self.battery_capacity if self.initial_soc is None else self.initial_soc


@dataclass(frozen=True)
class StepRecord:
    step: int
    segment_id: str
    time: float
    soc_kwh: float
    x_planned: float
    x_applied: float
    segment_kwh: float  # energy the segment would take fully electric
    electric_kwh: float
    density: float
    clean_air: float
    pollutant_units: float
    objective: float  # density * mean energy * x
    clamped: bool


CSV_COLUMNS = ("step", "segment_id", "soc_kwh", "x", "electric_kwh", "clean_air", "pollutant_units")


@dataclass
class SimulationTrace:
    vehicle: VehicleConfig
    route_id: str
    steps: list[StepRecord] = field(default_factory=list)
    plans: list[AllocationPlan] = field(default_factory=list)

    @property
    def total_electric_kwh(self) -> float:
        return math.fsum(s.electric_kwh for s in self.steps)

    @property
    def cumulative_objective(self) -> float:
        return math.fsum(s.objective for s in self.steps)

    @property
    def cumulative_clean_air(self) -> float:
        return math.fsum(s.clean_air for s in self.steps)

    def soc_series(self) -> list[float]:
        return [s.soc_kwh for s in self.steps]

    def cumulative(self, attr: str) -> list[float]:
        return list(np.cumsum([getattr(s, attr) for s in self.steps]))

    def rows(self) -> list[tuple]:
        return [
            (s.step, s.segment_id, s.soc_kwh, s.x_applied, s.electric_kwh, s.clean_air, s.pollutant_units)
            for s in self.steps
        ]

    def summary(self) -> dict:
        return {
            "route_id": self.route_id,
            "policy": str(self.vehicle.policy),
            "energy_model": self.vehicle.energy_model,
            "initial_budget": self.vehicle.initial_budget,
            "total_electric_kwh": self.total_electric_kwh,
            "final_soc_kwh": self.steps[-1].soc_kwh if self.steps else self.vehicle.soc0,
            "cumulative_objective": self.cumulative_objective,
            "cumulative_clean_air": self.cumulative_clean_air,
            "pollutant_units": math.fsum(s.pollutant_units for s in self.steps),
            "clamped_steps": sum(s.clamped for s in self.steps),
        }


# helpers


class _Energies:
    def __init__(self, history: TripHistory):
        self.history = history
        self._cache: dict[str, EnergyEstimate] = {}

    def estimate(self, segment_id: str) -> EnergyEstimate:
        est = self._cache.get(segment_id)
        if est is None:
            est = self._cache[segment_id] = expected_energy(self.history, segment_id)
        return est

    def value(self, segment_id: str, model: str) -> float:
        est = self.estimate(segment_id)
        return est.max_kwh if model == "max" else est.mean_kwh


def normalize_flows(flows: Optional[Mapping[str, float]]) -> dict[str, float]:
    """Flows as fractions of the total; empty when no flows are given."""
    if not flows:
        return {}
    for s, v in flows.items():
        if not v >= 0:
            raise ValidationError(f"negative flow {v} on {s!r}")
    total = math.fsum(flows.values())
    if total == 0:
        return {s: 0.0 for s in flows}
    return {s: v / total for s, v in flows.items()}


def build_instances(
    prediction: SegmentPrediction,
    energies: _Energies,
    density: DensityProvider,
    t: float,
    energy_model: str,
    flows: Mapping[str, float],
) -> list[SegmentInstance]:
    out = []
    for s in prediction.likely_segments():
        out.append(
            SegmentInstance(
                id=s,
                p=prediction.segment_probs[s],
                d=density.density(s, t),
                e=energies.value(s, energy_model),
                f=flows.get(s, 1.0) if flows else 1.0,
            )
        )
    return out


def _suffix_routes(network: RoadNetwork, prediction: SegmentPrediction) -> dict[str, tuple[str, ...]]:
    cur = prediction.current_segment
    return {rid: network.route(rid).suffix(cur) for rid in prediction.matching_routes()}


def _pick_route(network, history, vehicle, rng) -> tuple[str, tuple[str, ...]]:
    if vehicle.actual_route is not None:
        route = network.route(vehicle.actual_route)
    else:
        probs = route_probabilities(history, network, vehicle.origin)
        ids = [r for r, p in probs.items() if p > 0]
        weights = np.array([probs[r] for r in ids])
        route = network.route(ids[int(rng.choice(len(ids), p=weights / weights.sum()))])
    if vehicle.origin is not None:
        if vehicle.origin not in route:
            raise UnknownRoute(f"origin {vehicle.origin!r} is not on route {route.id!r}")
        return route.id, route.suffix(vehicle.origin)
    return route.id, route.segments


Planner = Callable[[SegmentPrediction, list, float], AllocationPlan]


def _policy_planner(network: RoadNetwork, vehicle: VehicleConfig) -> Planner:
    policy = vehicle.policy

    def plan(prediction, instances, budget):
        if policy is Policy.EXPECTED:
            return solve_expected(instances, budget)
        if policy is Policy.FLOW:
            return solve_flow(instances, budget)
        if policy is Policy.ROBUST:
            return solve_robust(instances, _suffix_routes(network, prediction), budget)
        if policy is Policy.GREEN_ZONE:
            ids = {i.id for i in instances}
            green = [s for s in vehicle.green_segments if s in ids]
            try:
                return solve_green_zone(instances, green, budget, vehicle.green_base)
            except InsufficientBudgetForGreenZone as exc:
                # cannot keep the zone clean: put everything that is left into it
                frac = budget / exc.required if exc.required > 0 else 1.0
                x = {i.id: (frac if i.id in green else 0.0) for i in instances}
                return AllocationPlan(x, 0.0, budget, PlanStatus.OPTIMAL, budget, problem="green_zone_shortfall")
        raise ValueError(f"policy {policy} has no rolling planner")

    return plan


def _drive(
    network: RoadNetwork,
    history: TripHistory,
    vehicle: VehicleConfig,
    density: DensityProvider,
    rng: np.random.Generator,
    predictor: Predictor,
    flows: Mapping[str, float],
    route_id: str,
    trip: Sequence[str],
    fixed_plan: Optional[AllocationPlan] = None,
) -> SimulationTrace:
    energies = _Energies(history)
    trace = SimulationTrace(vehicle, route_id)
    planner = _policy_planner(network, vehicle)
    remaining = float(vehicle.initial_budget)
    soc = float(vehicle.soc0)
    t = 0.0

    for k, seg in enumerate(trip):
        if fixed_plan is None:
            pred = predictor(seg)
            instances = build_instances(pred, energies, density, t, vehicle.energy_model, flows)
            plan = planner(pred, instances, remaining)
            trace.plans.append(plan)
        else:
            plan = fixed_plan
        x_plan = min(max(plan.x.get(seg, 0.0), 0.0), 1.0)

        if vehicle.realization == "forecast":
            seg_kwh = energies.value(seg, vehicle.energy_model)
        else:
            seg_kwh = float(rng.choice(history.energy_samples[seg])) if seg in history.energy_samples else energies.value(seg, "mean")
        x = x_plan
        electric = x * seg_kwh
        clamped = False
        if electric > remaining:
            clamped = electric > remaining + 1e-12
            electric = remaining
            if clamped:
                x = remaining / seg_kwh
        remaining = max(remaining - electric, 0.0)
        soc -= electric

        d = density.density(seg, t)
        trace.steps.append(
            StepRecord(
                step=k,
                segment_id=seg,
                time=t,
                soc_kwh=soc,
                x_planned=x_plan,
                x_applied=x,
                segment_kwh=seg_kwh,
                electric_kwh=electric,
                density=d,
                clean_air=d * x,
                pollutant_units=d * (1.0 - x),
                objective=d * energies.value(seg, "mean") * x,
                clamped=clamped,
            )
        )
        t += network.segment(seg).length / vehicle.speed
    return trace


def run_single(
    network: RoadNetwork,
    history: TripHistory,
    vehicle: VehicleConfig,
    density: DensityProvider,
    seed: int = 0,
    predictor: str = "counts",
    flows: Optional[Mapping[str, float]] = None,
) -> SimulationTrace:
    """Simulate one vehicle; identical arguments give identical traces."""
    rng = np.random.default_rng(seed)
    route_id, trip = _pick_route(network, history, vehicle, rng)
    pred = Predictor(history, network, predictor)
    fixed = None
    if vehicle.policy is Policy.NONE_OPT:
        energies = _Energies(history)
        fixed = none_opt_plan({s: energies.value(s, "max") for s in trip}, vehicle.initial_budget)
    trace = _drive(network, history, vehicle, density, rng, pred, normalize_flows(flows), route_id, trip, fixed)
    if fixed is not None:
        trace.plans.append(fixed)
    return trace


# fleets


@dataclass
class FleetTrace:
    traces: list[SimulationTrace]
    vehicles_on: dict[str, int]
    pollutant_units: dict[str, float]
    clean_air_units: dict[str, float]
    exposure: dict[str, float]  # sum of densities seen by passing vehicles
    fleet_plan: Optional[FleetPlan] = None
    caps: dict[str, float] = field(default_factory=dict)

    @property
    def cap_status(self) -> Optional[str]:
        if self.fleet_plan is None:
            return None
        return str(self.fleet_plan.status)

    def summary(self) -> dict:
        out = {
            "vehicles": len(self.traces),
            "vehicles_on": dict(self.vehicles_on),
            "pollutant_units": dict(self.pollutant_units),
            "clean_air_units": dict(self.clean_air_units),
            "total_pollutant_units": math.fsum(self.pollutant_units.values()),
            "total_electric_kwh": math.fsum(t.total_electric_kwh for t in self.traces),
        }
        if self.caps:
            out["caps"] = dict(self.caps)
            out["cap_status"] = self.cap_status
            out["cap_violation"] = {
                s: max(0.0, self.pollutant_units.get(s, 0.0) - c) for s, c in self.caps.items()
            }
        return out


def replicate(vehicle: VehicleConfig, count: int) -> list[VehicleConfig]:
    return [replace(vehicle, name=f"{vehicle.name or 'veh'}#{k}") for k in range(count)]


def run_fleet(
    network: RoadNetwork,
    history: TripHistory,
    vehicles: Sequence[VehicleConfig],
    flows: Mapping[str, float],
    density: DensityProvider,
    caps: Optional[Mapping[str, float]] = None,
    seed: int = 0,
    predictor: str = "counts",
) -> FleetTrace:
    """Simulate a steady-state fleet and total pollutant units per segment.

    Without caps each vehicle runs its own rolling-horizon policy. With caps,
    all vehicles are planned together once at their origins by the capped
    fleet LP and then drive that plan (the budget clamp still applies).
    """
    if not vehicles:
        raise ValidationError("fleet needs at least one vehicle")
    norm = normalize_flows(flows)
    children = np.random.SeedSequence(seed).spawn(len(vehicles))
    rngs = [np.random.default_rng(c) for c in children]
    pred = Predictor(history, network, predictor)
    picks = [_pick_route(network, history, v, r) for v, r in zip(vehicles, rngs)]

    fleet_plan = None
    traces = []
    if caps:
        energies = _Energies(history)
        inst_sets = []
        for v, (_, trip) in zip(vehicles, picks):
            inst_sets.append(build_instances(pred(trip[0]), energies, density, 0.0, v.energy_model, norm))
        fleet_plan = solve_capped_fleet(inst_sets, [v.initial_budget for v in vehicles], caps)
        for v, rng, (rid, trip), plan in zip(vehicles, rngs, picks, fleet_plan.plans):
            traces.append(_drive(network, history, v, density, rng, pred, norm, rid, trip, plan))
            traces[-1].plans.append(plan)
    else:
        for v, rng, (rid, trip) in zip(vehicles, rngs, picks):
            fixed = None
            if v.policy is Policy.NONE_OPT:
                energies = _Energies(history)
                fixed = none_opt_plan({s: energies.value(s, "max") for s in trip}, v.initial_budget)
            traces.append(_drive(network, history, v, density, rng, pred, norm, rid, trip, fixed))

    vehicles_on: dict[str, int] = {}
    pollutant: dict[str, float] = {}
    clean: dict[str, float] = {}
    exposure: dict[str, float] = {}
    for tr in traces:
        for st in tr.steps:
            s = st.segment_id
            vehicles_on[s] = vehicles_on.get(s, 0) + 1
            pollutant[s] = pollutant.get(s, 0.0) + st.pollutant_units
            clean[s] = clean.get(s, 0.0) + st.clean_air
            exposure[s] = exposure.get(s, 0.0) + st.density
    order = [s for s in network.segments if s in vehicles_on]
    return FleetTrace(
        traces,
        {s: vehicles_on[s] for s in order},
        {s: pollutant[s] for s in order},
        {s: clean[s] for s in order},
        {s: exposure[s] for s in order},
        fleet_plan,
        dict(caps or {}),
    )


# scenario comparison


def standard_scenarios() -> dict[str, dict]:
    """The three single-vehicle scenarios: mean forecast, max forecast, no optimisation."""
    return {
        "Average-Forecast": {"policy": Policy.EXPECTED, "energy_model": "mean"},
        "Max-Forecast": {"policy": Policy.EXPECTED, "energy_model": "max"},
        "None-Opt": {"policy": Policy.NONE_OPT, "energy_model": "max"},
    }


COMPARISON_COLUMNS = (
    "scenario",
    "step",
    "segment_id",
    "soc_kwh",
    "x",
    "electric_kwh",
    "clean_air",
    "cumulative_clean_air",
    "objective",
    "cumulative_objective",
)


@dataclass
class ComparisonTable:
    traces: dict[str, SimulationTrace]

    def rows(self) -> list[tuple]:
        out = []
        for name, tr in self.traces.items():
            cum_clean = 0.0
            cum_obj = 0.0
            for st in tr.steps:
                cum_clean += st.clean_air
                cum_obj += st.objective
                out.append(
                    (name, st.step, st.segment_id, st.soc_kwh, st.x_applied, st.electric_kwh,
                     st.clean_air, cum_clean, st.objective, cum_obj)
                )
        return out

    def summary(self) -> dict:
        return {name: tr.summary() for name, tr in self.traces.items()}


def compare_scenarios(
    network: RoadNetwork,
    history: TripHistory,
    base: VehicleConfig,
    density: DensityProvider,
    variants: Optional[Mapping[str, Mapping]] = None,
    seed: int = 0,
    predictor: str = "counts",
    flows: Optional[Mapping[str, float]] = None,
) -> ComparisonTable:
    """Run ``base`` once per variant (field overrides), all with the same seed."""
    variants = standard_scenarios() if variants is None else variants
    traces = {}
    for name, overrides in variants.items():
        cfg = replace(base, **dict(overrides))
        traces[name] = run_single(network, history, cfg, density, seed, predictor, flows)
    return ComparisonTable(traces)


# budget sweep


@dataclass
class SweepResult:
    origin: str
    budgets: np.ndarray
    segments: list[str]
    densities: dict[str, float]
    mean_x: dict[str, float]

    @property
    def rank_correlation(self) -> float:
        d = [self.densities[s] for s in self.segments]
        x = [self.mean_x[s] for s in self.segments]
        if len(self.segments) < 2:
            return 1.0
        return float(spearmanr(d, x).statistic)

    def rows(self) -> list[tuple]:
        return [(s, self.densities[s], self.mean_x[s]) for s in self.segments]


def budget_sweep(
    network: RoadNetwork,
    history: TripHistory,
    density: DensityProvider,
    origin: str,
    max_budget: float,
    steps: int = 1000,
    energy_model: str = "mean",
    policy: Policy = Policy.EXPECTED,
    predictor: str = "counts",
    flows: Optional[Mapping[str, float]] = None,
) -> SweepResult:
    """Average one-shot allocation at ``origin`` over linearly spaced budgets in [0, max_budget]."""
    if steps < 1:
        raise ValidationError("steps must be >= 1")
    if not max_budget >= 0:
        raise NegativeBudget("max_budget must be non-negative")
    pred = Predictor(history, network, predictor)(origin)
    instances = build_instances(pred, _Energies(history), density, 0.0, energy_model, normalize_flows(flows))
    policy = Policy(policy)
    solve = {Policy.EXPECTED: solve_expected, Policy.FLOW: solve_flow}.get(policy)
    if policy is Policy.ROBUST:
        routes = _suffix_routes(network, pred)
        solve = lambda inst, b: solve_robust(inst, routes, b)  # noqa: E731
    if solve is None:
        raise ValidationError(f"sweep does not support policy {policy}")
    budgets = np.linspace(0.0, max_budget, steps)
    totals = {i.id: 0.0 for i in instances}
    for b in budgets:
        plan = solve(instances, float(b))
        for s, v in plan.x.items():
            totals[s] += v
    ids = [i.id for i in instances]
    return SweepResult(
        origin=origin,
        budgets=budgets,
        segments=ids,
        densities={i.id: i.d for i in instances},
        mean_x={s: totals[s] / steps for s in ids},
    )
