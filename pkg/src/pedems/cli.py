"""Command-line front end.

Exit codes: 0 ok, 2 unreadable or invalid input, 3 prediction failure,
4 infeasible green-zone reservation, 5 anything else.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__, fixtures
from .errors import (
    InsufficientBudgetForGreenZone,
    NoMatchingRoute,
    PedemsError,
    UnknownSegment,
    UnknownState,
    ValidationError,
)
from .history import validate_history
from .io import (
    PLAN_COLUMNS,
    RunManifest,
    instance_from_dict,
    load_history,
    load_network,
    load_scenario,
    plan_rows,
    read_json,
    write_csv,
    write_json,
)
from .optimizer import solve_expected, solve_flow, solve_green_zone, solve_robust
from .prediction import Predictor
from .simulator import (
    COMPARISON_COLUMNS,
    CSV_COLUMNS,
    budget_sweep,
    compare_scenarios,
    run_fleet,
    run_single,
    standard_scenarios,
)

log = logging.getLogger("pedems")

OUTPUT_ENV = "PEDEMS_OUTPUT_DIR"
EXIT_OK, EXIT_PARSE, EXIT_PREDICT, EXIT_INFEASIBLE, EXIT_INTERNAL = 0, 2, 3, 4, 5


class PredictionFailed(Exception):
    pass


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUTPUT_ENV, "pedems_out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(args, inputs: dict, seed=None, out=None) -> dict:
    return RunManifest(
        command=args.command,
        inputs={k: str(v) for k, v in inputs.items()},
        seed=seed,
        output_dir=str(out) if out is not None else None,
    ).to_dict()


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2) + "\n")


# commands


def cmd_predict(args) -> int:
    network = load_network(args.network)
    history = load_history(args.history)
    validate_history(history, network)
    try:
        pred = Predictor(history, network, args.predictor)(args.at)
    except (NoMatchingRoute, UnknownSegment, UnknownState) as exc:
        raise PredictionFailed(str(exc)) from exc
    _emit(
        {
            "current_segment": pred.current_segment,
            "predictor": args.predictor,
            "route_probs": {r: round(p, 6) for r, p in pred.route_probs.items()},
            "segment_probs": {s: round(p, 6) for s, p in pred.segment_probs.items()},
            "manifest": _manifest(args, {"network": args.network, "history": args.history}),
        }
    )
    return EXIT_OK


def cmd_optimize(args) -> int:
    inst = instance_from_dict(read_json(args.instance))
    budget = inst.budget if args.budget is None else args.budget
    green = args.green.split(",") if args.green else inst.green
    if args.problem == 2:
        if not inst.routes:
            raise ValidationError("problem 2 needs 'routes' in the instance file")
        plan = solve_robust(inst.instances, inst.routes, budget)
    elif green:
        plan = solve_green_zone(inst.instances, green, budget, "flow" if args.problem == 3 else "expected")
    elif args.problem == 3:
        plan = solve_flow(inst.instances, budget)
    else:
        plan = solve_expected(inst.instances, budget)

    report = plan.to_dict()
    report["manifest"] = _manifest(args, {"instance": args.instance})
    if args.out or os.environ.get(OUTPUT_ENV):
        out = _out_dir(args)
        report["manifest"]["output_dir"] = str(out)
        write_json(out / "plan.json", report)
        write_csv(out / "plan.csv", PLAN_COLUMNS, plan_rows(plan))
    _emit(report)
    return EXIT_OK


def _scenario_inputs(args) -> dict:
    return {"scenario": args.scenario}


def cmd_simulate(args) -> int:
    sc = load_scenario(args.scenario)
    validate_history(sc.history, sc.network)
    seed = sc.seed if args.seed is None else args.seed
    predictor = args.predictor or sc.predictor
    out = _out_dir(args)
    trace = run_single(sc.network, sc.history, sc.vehicle(), sc.density, seed, predictor, sc.flows)
    write_csv(out / "trace.csv", CSV_COLUMNS, trace.rows())
    summary = trace.summary()
    summary["manifest"] = _manifest(args, _scenario_inputs(args), seed, out)
    write_json(out / "summary.json", summary)
    _emit(summary)
    return EXIT_OK


def cmd_compare(args) -> int:
    sc = load_scenario(args.scenario)
    seed = sc.seed if args.seed is None else args.seed
    predictor = args.predictor or sc.predictor
    out = _out_dir(args)
    variants = sc.data.get("variants") or standard_scenarios()
    table = compare_scenarios(
        sc.network, sc.history, sc.vehicle(), sc.density, variants, seed, predictor, sc.flows
    )
    write_csv(out / "comparison.csv", COMPARISON_COLUMNS, table.rows())
    summary = {"scenarios": table.summary()}
    summary["manifest"] = _manifest(args, _scenario_inputs(args), seed, out)
    write_json(out / "comparison_summary.json", summary)
    _emit(summary)
    return EXIT_OK


def cmd_fleet(args) -> int:
    sc = load_scenario(args.scenario)
    seed = sc.seed if args.seed is None else args.seed
    predictor = args.predictor or sc.predictor
    out = _out_dir(args)
    runs = sc.data.get("fleet_scenarios") or {"fleet": {}}
    results = {}
    for name, spec in runs.items():
        spec = dict(spec)
        caps = spec.pop("caps", sc.caps)
        vehicles = sc.fleet(spec)
        ft = run_fleet(sc.network, sc.history, vehicles, sc.flows, sc.density, caps or None, seed, predictor)
        results[name] = ft.summary()
        rows = [
            (s, ft.vehicles_on[s], ft.pollutant_units[s], ft.clean_air_units[s])
            for s in sc.network.segments
            if s in ft.vehicles_on
        ]
        write_csv(out / f"fleet_{name}.csv", ("segment_id", "vehicles", "pollutant_units", "clean_air_units"), rows)
    summary = {"scenarios": results, "manifest": _manifest(args, _scenario_inputs(args), seed, out)}
    write_json(out / "fleet_summary.json", summary)
    _emit(summary)
    return EXIT_OK


def cmd_sweep(args) -> int:
    sc = load_scenario(args.scenario)
    cfg = sc.data.get("sweep", {})
    origin = args.origin or cfg.get("origin")
    if origin is None:
        raise ValidationError("sweep needs an origin segment")
    max_budget = args.max_budget if args.max_budget is not None else float(cfg.get("max_budget", 0.22))
    steps = args.steps if args.steps is not None else int(cfg.get("steps", 1000))
    out = _out_dir(args)
    try:
        result = budget_sweep(
            sc.network,
            sc.history,
            sc.density,
            origin,
            max_budget,
            steps,
            cfg.get("energy_model", "mean"),
            cfg.get("policy", "Expected"),
            args.predictor or sc.predictor,
            sc.flows,
        )
    except (NoMatchingRoute, UnknownSegment, UnknownState) as exc:
        raise PredictionFailed(str(exc)) from exc
    write_csv(out / "sweep.csv", ("segment_id", "density", "mean_x"), result.rows())
    summary = {
        "origin": origin,
        "max_budget": max_budget,
        "steps": steps,
        "rank_correlation": result.rank_correlation,
        "mean_x": result.mean_x,
        "manifest": _manifest(args, _scenario_inputs(args), None, out),
    }
    write_json(out / "sweep_summary.json", summary)
    _emit(summary)
    return EXIT_OK


def cmd_fixtures(args) -> int:
    out = _out_dir(args)
    write_fixture_files(out)
    _emit({"written": sorted(p.name for p in out.iterdir())})
    return EXIT_OK


def write_fixture_files(out: Path) -> None:
    """Dump the built-in fixtures as network/history/density/scenario files."""
    three = fixtures.three_route_network()
    write_json(out / "three_route_network.json", three.to_dict())
    write_json(out / "three_route_history.json", fixtures.three_route_history().to_dict())
    pr = {"r1": 1.0, "r2": 3 / 7, "r3": 1 / 7, "r4": 6 / 7, "r5": 4 / 7}
    dens = {"r1": 30.0, "r2": 80.0, "r3": 10.0, "r4": 60.0, "r5": 40.0}
    write_json(
        out / "three_route_instance.json",
        {
            "budget": 0.05,
            "segments": [
                {"id": s, "p": pr[s], "d": dens[s], "e": fixtures.THREE_ROUTE_ENERGY[s]} for s in pr
            ],
            "routes": {r.id: list(r.segments) for r in three.routes.values()},
        },
    )

    y = fixtures.y_network()
    write_json(out / "y_network.json", y.to_dict())
    write_json(out / "y_history.json", fixtures.y_history().to_dict())
    write_json(out / "y_density.json", {s: fixtures.Y_DENSITY for s in y.segments})
    write_json(
        out / "y_fleet_scenario.json",
        {
            "network": "y_network.json",
            "history": "y_history.json",
            "density": "static:y_density.json",
            "seed": 0,
            "flows": fixtures.Y_FLOWS,
            "vehicles": [
                {"actual_route": "A", "count": 20, "initial_budget": 0.01, "realization": "forecast"},
                {"actual_route": "B", "count": 20, "initial_budget": 0.01, "realization": "forecast"},
            ],
            "fleet_scenarios": {
                "expected": {"policy": "Expected"},
                "flow": {"policy": "Flow"},
                "limited_pollutants": {"policy": "Flow", "caps": {"r3": 800}},
                "green_zone": {
                    "policy": "GreenZone",
                    "green_segments": ["r3"],
                    "green_base": "flow",
                    "initial_budget": 0.04,
                },
            },
        },
    )

    campus = fixtures.campus_network()
    dens = fixtures.campus_centre_density()
    write_json(out / "campus_network.json", campus.to_dict())
    write_json(out / "campus_history.json", fixtures.campus_history().to_dict())
    write_json(out / "campus_density.json", {s: dens.density(s, 0.0) for s in campus.segments})
    write_json(
        out / "campus_scenario.json",
        {
            "network": "campus_network.json",
            "history": "campus_history.json",
            "density": "static:campus_density.json",
            "seed": 0,
            "vehicle": {
                "initial_budget": 0.22,
                "actual_route": "route1",
                "policy": "Expected",
                "energy_model": "mean",
                "realization": "forecast",
            },
            "sweep": {"origin": campus.route("route1").segments[0], "max_budget": 0.22, "steps": 1000},
        },
    )


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pedems", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        if scenario:
            sp.add_argument("scenario", help="scenario JSON file")
            sp.add_argument("--seed", type=int, default=None)
            sp.add_argument("--predictor", choices=("counts", "markov"), default=None)
        sp.add_argument("--out", default=None, help=f"output directory (default ${OUTPUT_ENV} or ./pedems_out)")

    sp = sub.add_parser("predict", help="route and segment probabilities at a segment")
    sp.add_argument("--network", required=True)
    sp.add_argument("--history", required=True)
    sp.add_argument("--at", required=True, help="current segment id")
    sp.add_argument("--predictor", choices=("counts", "markov"), default="counts")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("optimize", help="one-shot allocation from an instance file")
    sp.add_argument("instance")
    sp.add_argument("--problem", type=int, choices=(1, 2, 3), default=1)
    sp.add_argument("--budget", type=float, default=None, help="kWh; overrides the file")
    sp.add_argument("--green", default=None, help="comma-separated green-zone segments")
    common(sp, scenario=False)
    sp.set_defaults(func=cmd_optimize)

    for name, func, text in (
        ("simulate", cmd_simulate, "rolling-horizon run of one vehicle"),
        ("compare", cmd_compare, "Average-Forecast / Max-Forecast / None-Opt comparison"),
        ("fleet", cmd_fleet, "steady-state fleet pollutant totals"),
    ):
        sp = sub.add_parser(name, help=text)
        common(sp)
        sp.set_defaults(func=func)

    sp = sub.add_parser("sweep", help="average one-shot allocation over a budget sweep")
    common(sp)
    sp.add_argument("--origin", default=None)
    sp.add_argument("--max-budget", type=float, default=None)
    sp.add_argument("--steps", type=int, default=None)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("fixtures", help="write the built-in example files")
    common(sp, scenario=False)
    sp.set_defaults(func=cmd_fixtures)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except PredictionFailed as exc:
        log.error("prediction failed: %s", exc)
        return EXIT_PREDICT
    except InsufficientBudgetForGreenZone as exc:
        log.error("infeasible: %s", exc)
        return EXIT_INFEASIBLE
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValidationError) as exc:
        log.error("bad input: %s", exc)
        return EXIT_PARSE
    except PedemsError as exc:
        log.error("%s", exc)
        return EXIT_INTERNAL
    except Exception:  # noqa: BLE001
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
