"""Pedestrian-aware electric-mode allocation for plug-in hybrid vehicles."""

__version__ = "0.1.0"

from .density import (  # noqa: E402
    DensitySnapshot,
    PointObservation,
    ReplayDensity,
    StaticDensity,
    SyntheticDensity,
    aggregate_points,
    get_density,
)
from .history import (  # noqa: E402
    EnergyEstimate,
    TripHistory,
    expected_energy,
    history_from_counts,
    record_trip,
    synthetic_history,
)
from .network import RoadNetwork, Route, Segment, build_network, segmentize  # noqa: E402
from .optimizer import (  # noqa: E402
    AllocationPlan,
    PlanStatus,
    SegmentInstance,
    solve_capped_fleet,
    solve_expected,
    solve_flow,
    solve_green_zone,
    solve_robust,
)
from .prediction import (  # noqa: E402
    MarkovModel,
    SegmentPrediction,
    build_markov,
    markov_segment_probabilities,
    route_probabilities,
    segment_probabilities,
)
from .simulator import (  # noqa: E402
    Policy,
    SimulationTrace,
    VehicleConfig,
    budget_sweep,
    compare_scenarios,
    run_fleet,
    run_single,
)

__all__ = [
    "AllocationPlan",
    "DensitySnapshot",
    "EnergyEstimate",
    "MarkovModel",
    "PlanStatus",
    "PointObservation",
    "Policy",
    "ReplayDensity",
    "RoadNetwork",
    "Route",
    "Segment",
    "SegmentInstance",
    "SegmentPrediction",
    "SimulationTrace",
    "StaticDensity",
    "SyntheticDensity",
    "TripHistory",
    "VehicleConfig",
    "aggregate_points",
    "budget_sweep",
    "build_markov",
    "build_network",
    "compare_scenarios",
    "expected_energy",
    "get_density",
    "history_from_counts",
    "markov_segment_probabilities",
    "record_trip",
    "route_probabilities",
    "run_fleet",
    "run_single",
    "segment_probabilities",
    "segmentize",
    "solve_capped_fleet",
    "solve_expected",
    "solve_flow",
    "solve_green_zone",
    "solve_robust",
    "synthetic_history",
]
