"""Acceptance criteria, one test per criterion.

Each test records PASS or FAIL and the terminal summary prints one line per
criterion (see ``pytest_terminal_summary`` in conftest.py). Run on its own with
``pytest tests/test_acceptance.py -v``.
"""

import math
import statistics
import time
from contextlib import contextmanager

import numpy as np
import pytest

from instances import random_instances
from oracles import expected_route_probs, knapsack_oracle, lp_vertex_oracle
from pedems.density import StaticDensity
from pedems.errors import InsufficientBudgetForGreenZone
from pedems.fixtures import (
    THREE_ROUTE_COUNTS,
    Y_FLOWS,
    campus_centre_density,
    campus_history,
    campus_network,
    three_route_history,
    three_route_network,
    y_density,
    y_history,
    y_network,
)
from pedems.history import expected_energy
from pedems.optimizer import (
    PlanStatus,
    SegmentInstance,
    expected_constraint,
    solve_capped_fleet,
    solve_expected,
    solve_flow,
    solve_green_zone,
    solve_robust,
)
from pedems.prediction import (
    build_markov,
    markov_segment_probabilities,
    route_probabilities,
    segment_probabilities,
)
from pedems.simulator import Policy, VehicleConfig, budget_sweep, compare_scenarios, replicate, run_fleet, run_single
from trees import random_scenario, random_tree_history

RESULTS: dict[int, tuple[str, str, str]] = {}


@contextmanager
def criterion(num: int, title: str):
    try:
        yield
    except BaseException as exc:
        RESULTS[num] = ("FAIL", title, f"{type(exc).__name__}: {exc}".splitlines()[0][:160])
        raise
    RESULTS[num] = ("PASS", title, "")


def report_lines() -> list[str]:
    out = []
    for num in sorted(RESULTS):
        status, title, why = RESULTS[num]
        line = f"{status} criterion {num}: {title}"
        out.append(line + (f" ({why})" if why else ""))
    return out


def _median_runtime(fn, repeat=50):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


THREE_ROUTES = {"R1": ("r1", "r2", "r3"), "R2": ("r1", "r2", "r4"), "R3": ("r1", "r5", "r4")}


def test_criterion_01_worked_example_probabilities():
    with criterion(1, "worked-example route/segment probabilities exact, < 1 ms"):
        net, hist = three_route_network(), three_route_history()
        oracle = expected_route_probs(THREE_ROUTE_COUNTS, THREE_ROUTES, "r1")
        rp = route_probabilities(hist, net, "r1")
        for r, want in oracle.items():
            assert abs(rp[r] - float(want)) <= 1e-12
        seg_want = {"r1": 1, "r2": 3 / 7, "r3": 1 / 7, "r4": 6 / 7, "r5": 4 / 7}
        sp = segment_probabilities(hist, net, "r1").segment_probs
        for s, want in seg_want.items():
            assert abs(sp[s] - want) <= 1e-12, s
        runtime = _median_runtime(lambda: segment_probabilities(hist, net, "r1"))
        assert runtime < 1e-3, f"median runtime {runtime * 1e3:.3f} ms"


def test_criterion_02_constraint_generation():
    with criterion(2, "constraint generation for the expected and per-route problems"):
        e = {s: expected_energy(three_route_history(), s).mean_kwh for s in ("r1", "r2", "r3", "r4", "r5")}
        sp = segment_probabilities(three_route_history(), three_route_network(), "r1").segment_probs
        insts = [SegmentInstance(s, sp[s], 10.0, e[s]) for s in e]

        single = expected_constraint(insts, 0.05)
        coeff = {"r1": 1, "r2": 3 / 7, "r3": 1 / 7, "r4": 6 / 7, "r5": 4 / 7}
        assert list(single.coefficients) == list(coeff)
        for s, w in coeff.items():
            assert abs(single.coefficients[s] - w * e[s]) <= 1e-15
        assert single.render() == (
            "e[r1]*x[r1] + 3/7*e[r2]*x[r2] + 1/7*e[r3]*x[r3] + 6/7*e[r4]*x[r4] + 4/7*e[r5]*x[r5] <= E_av"
        )
        assert len(solve_expected(insts, 0.05).constraints) == 1

        cons = solve_robust(insts, [list(r) for r in THREE_ROUTES.values()], 0.05).constraints
        assert [c.render() for c in cons] == [
            "e[r1]*x[r1] + e[r2]*x[r2] + e[r3]*x[r3] <= E_av",
            "e[r1]*x[r1] + e[r2]*x[r2] + e[r4]*x[r4] <= E_av",
            "e[r1]*x[r1] + e[r5]*x[r5] + e[r4]*x[r4] <= E_av",
        ]
        for c, route in zip(cons, THREE_ROUTES.values()):
            assert c.coefficients == {s: e[s] for s in route}


def _y_fleet(policy, budget, caps=None, **kw):
    vehicles = []
    for route in ("A", "B"):
        cfg = VehicleConfig(budget, policy, actual_route=route, realization="forecast", **kw)
        vehicles += replicate(cfg, 20)
    return run_fleet(y_network(), y_history(), vehicles, Y_FLOWS, y_density(), caps=caps)


def test_criterion_03_y_network_fleet():
    with criterion(3, "Y-network fleet: expected 1600, flow 1200, green zone (400, 400, 0), < 1 s"):
        t0 = time.perf_counter()
        expected = _y_fleet(Policy.EXPECTED, 0.01)
        flow = _y_fleet(Policy.FLOW, 0.01)
        green = _y_fleet(Policy.GREEN_ZONE, 0.04, green_segments=("r3",), green_base="flow")
        runtime = time.perf_counter() - t0
        assert abs(expected.pollutant_units["r3"] - 1600) <= 1e-6, expected.pollutant_units
        assert abs(flow.pollutant_units["r3"] - 1200) <= 1e-6, flow.pollutant_units
        got = [green.pollutant_units[s] for s in ("r1", "r2", "r3")]
        assert all(abs(a - b) <= 1e-6 for a, b in zip(got, (400, 400, 0))), got
        assert runtime < 1.0, f"{runtime:.3f} s"


def test_criterion_04_pollutant_cap():
    with criterion(4, "pollutant cap 800 on r3: met at budget 0.015, InfeasibleCap 1200 at 0.01"):
        met = _y_fleet(Policy.FLOW, 0.015, caps={"r3": 800})
        assert met.cap_status == "Optimal"
        assert abs(met.pollutant_units["r3"] - 800) <= 1e-6, met.pollutant_units
        short = _y_fleet(Policy.FLOW, 0.01, caps={"r3": 800})
        assert short.cap_status == "InfeasibleCap"
        assert abs(short.pollutant_units["r3"] - 1200) <= 1e-6, short.pollutant_units


# criterion 5 helpers: the oracle sees plain arrays only


def _knapsack_check(insts, budget, use_flow):
    c = [i.p * i.d * i.e * (i.f if use_flow else 1.0) for i in insts]
    return knapsack_oracle(c, [i.p * i.e for i in insts], budget)[0]


def _robust_check(insts, routes, budget):
    ids = [i.id for i in insts]
    A = np.zeros((len(routes), len(ids)))
    for r, segs in enumerate(routes.values()):
        for s in segs:
            A[r, ids.index(s)] = insts[ids.index(s)].e
    c = [i.p * i.d * i.e for i in insts]
    return lp_vertex_oracle(c, A, np.full(len(routes), budget))[0]


def _green_check(insts, green, budget, use_flow):
    lo = np.array([1.0 if i.id in green else 0.0 for i in insts])
    c = [i.p * i.d * i.e * (i.f if use_flow else 1.0) for i in insts]
    return lp_vertex_oracle(c, [[i.p * i.e for i in insts]], [budget], lo=lo)[0]


def _fleet_check(vehicles, budgets, caps):
    cols = [(v, inst) for v, insts in enumerate(vehicles) for inst in insts]
    n = len(cols)
    c = np.array([i.p * i.d * i.e * i.f for _, i in cols])
    rows, rhs = [], []
    for v, b in enumerate(budgets):
        rows.append([i.p * i.e if vv == v else 0.0 for vv, i in cols])
        rhs.append(b)
    cap_rows, cap_rhs = [], []
    for s, cap in caps.items():
        # sum p d (1 - x) <= cap  <=>  -sum p d x <= cap - sum p d
        w = [i.p * i.d if i.id == s else 0.0 for _, i in cols]
        cap_rows.append([-v for v in w])
        cap_rhs.append(cap - sum(w))
    val, _ = lp_vertex_oracle(c, rows + cap_rows, rhs + cap_rhs)
    if val is not None:
        return "feasible", val
    # smallest worst-case violation t: maximise -t with t as an extra column
    A = [r + [0.0] for r in rows] + [r + [-1.0] for r in cap_rows]
    big = sum(abs(x) for r in cap_rows for x in r) + max(abs(x) for x in cap_rhs) + 1.0
    val, _ = lp_vertex_oracle(np.append(np.zeros(n), -1.0), A, rhs + cap_rhs,
                              lo=np.zeros(n + 1), hi=np.append(np.ones(n), big))
    return "infeasible", -val


def _random_fleet(rng, insts):
    k = min(4, len(insts))
    vehicles = []
    for _ in range(2):
        pick = sorted(rng.choice(len(insts), int(rng.integers(1, k + 1)), replace=False).tolist())
        vehicles.append([insts[j] for j in pick])
    budgets = [float(rng.uniform(0, 1.0) * sum(i.cost for i in v)) for v in vehicles]
    shared = sorted({i.id for v in vehicles for i in v})
    capped = rng.choice(shared, int(rng.integers(1, min(2, len(shared)) + 1)), replace=False)
    caps = {}
    for s in capped:
        load = sum(i.p * i.d for v in vehicles for i in v if i.id == s)
        caps[str(s)] = float(rng.uniform(0.3, 1.1) * load)
    return vehicles, budgets, caps


def test_criterion_05_lp_oracle_equivalence():
    with criterion(5, "500 random instances: every solver within 1e-7 of the vertex oracle, < 30 s"):
        t0 = time.perf_counter()
        rng = np.random.default_rng(20240501)
        worst = 0.0
        for _ in range(500):
            insts, routes, budget = random_instances(rng, max_segments=8, max_routes=4)
            checks = [
                (solve_expected(insts, budget).objective, _knapsack_check(insts, budget, False)),
                (solve_flow(insts, budget).objective, _knapsack_check(insts, budget, True)),
                (solve_robust(insts, routes, budget).objective, _robust_check(insts, routes, budget)),
            ]
            green = {i.id for i in insts if rng.random() < 0.3}
            use_flow = bool(rng.random() < 0.5)
            oracle = _green_check(insts, green, budget, use_flow)
            try:
                plan = solve_green_zone(insts, green, budget, "flow" if use_flow else "expected")
            except InsufficientBudgetForGreenZone:
                assert oracle is None, "green zone rejected a feasible reservation"
            else:
                assert oracle is not None, "green zone accepted an infeasible reservation"
                checks.append((plan.objective, oracle))

            vehicles, budgets, caps = _random_fleet(rng, insts)
            fp = solve_capped_fleet(vehicles, budgets, caps)
            kind, value = _fleet_check(vehicles, budgets, caps)
            if kind == "feasible":
                assert fp.status is PlanStatus.OPTIMAL
                checks.append((math.fsum(p.objective for p in fp.plans), value))
            else:
                assert fp.status is PlanStatus.INFEASIBLE_CAP
                checks.append((fp.max_violation, value))

            for got, want in checks:
                worst = max(worst, abs(got - want))
                assert abs(got - want) <= 1e-7, (got, want)
        runtime = time.perf_counter() - t0
        assert runtime < 30.0, f"{runtime:.1f} s"


def test_criterion_06_budget_exactness():
    with criterion(6, "rolling horizon uses exactly 0.22 kWh on route 1 (mean and max models)"):
        net, hist, dens = campus_network(), campus_history(), campus_centre_density()
        for model in ("mean", "max"):
            demand = sum(getattr(expected_energy(hist, s), f"{model}_kwh") for s in net.route("route1").segments)
            assert demand > 0.22, demand
            cfg = VehicleConfig(0.22, Policy.EXPECTED, model, actual_route="route1", realization="forecast")
            tr = run_single(net, hist, cfg, dens, seed=0)
            assert abs(tr.total_electric_kwh - 0.22) <= 1e-6, (model, tr.total_electric_kwh)
            assert abs(tr.steps[-1].soc_kwh - (4.4 - 0.22)) <= 1e-6


def _ordering_holds(history_seed, density_seed):
    net = campus_network()
    hist = campus_history(seed=history_seed)
    dens = campus_centre_density(seed=density_seed)
    base = VehicleConfig(0.22, actual_route="route1", realization="forecast")
    table = compare_scenarios(net, hist, base, dens, seed=0)
    avg, mx, none = (table.traces[k] for k in ("Average-Forecast", "Max-Forecast", "None-Opt"))
    assert avg.cumulative_objective >= mx.cumulative_objective - 1e-12
    for t in (avg, mx):
        for a, b in zip(t.cumulative("clean_air"), none.cumulative("clean_air")):
            assert a >= b - 1e-9
    for a, m in zip(avg.soc_series(), mx.soc_series()):
        assert m <= a + 1e-12


def test_criterion_07_ordering_properties():
    with criterion(7, "Average >= Max objective, optimised clean air >= None-Opt, Max SOC <= Average SOC"):
        _ordering_holds(7, 11)  # default campus fixture
        for k in range(20):
            _ordering_holds(100 + k, 200 + k)


def test_criterion_08_density_rank():
    with criterion(8, "1000-budget sweep: mean allocation rank equals density rank"):
        net, hist, dens = campus_network(), campus_history(), campus_centre_density()
        origin = net.route("route1").segments[0]
        sweep = budget_sweep(net, hist, dens, origin, 0.22, steps=1000)
        d = [sweep.densities[s] for s in sweep.segments]
        assert len(set(d)) == len(d), "densities are not distinct"
        order = sorted(sweep.segments, key=sweep.densities.get)
        xs = [sweep.mean_x[s] for s in order]
        assert all(b >= a for a, b in zip(xs, xs[1:]))
        assert sweep.rank_correlation == 1.0, sweep.rank_correlation


def test_criterion_09_predictor_equivalence():
    with criterion(9, "Markov and count predictors agree within 1e-12 (example + 100 prefix trees)"):
        cases = [(three_route_network(), three_route_history())]
        rng = np.random.default_rng(99)
        cases += [random_tree_history(rng) for _ in range(100)]
        for net, hist in cases:
            model = build_markov(hist, net)
            for cur in sorted(net.universe):
                a = segment_probabilities(hist, net, cur).segment_probs
                b = markov_segment_probabilities(model, cur).segment_probs
                assert set(a) == set(b)
                for s in a:
                    assert abs(a[s] - b[s]) <= 1e-12, (cur, s, a[s], b[s])


def test_criterion_10_invariant_suite():
    with criterion(10, "200 random scenarios: SOC >= 0, electric <= budget, conservation, determinism"):
        for seed in range(200):
            rng = np.random.default_rng(seed)
            net, hist, dens, vehicle, flows = random_scenario(rng)
            fleet = replicate(vehicle, 3)
            ft = run_fleet(net, hist, fleet, flows or {}, dens, seed=seed)
            again = run_fleet(net, hist, fleet, flows or {}, dens, seed=seed)
            assert [t.rows() for t in ft.traces] == [t.rows() for t in again.traces], seed
            for tr in ft.traces:
                assert all(st.soc_kwh >= 0 for st in tr.steps)
                soc = [vehicle.soc0] + tr.soc_series()
                assert all(b <= a for a, b in zip(soc, soc[1:]))
                assert tr.total_electric_kwh <= vehicle.initial_budget + 1e-9
                for st in tr.steps:
                    assert st.electric_kwh <= st.x_applied * st.segment_kwh + 1e-12
            for s, n in ft.vehicles_on.items():
                assert abs(ft.pollutant_units[s] + ft.clean_air_units[s] - ft.exposure[s]) <= 1e-9
            # with a static crowd the exposure is exactly n_vehicles * d
            static = StaticDensity({s: dens.density(s, 0.0) for s in net.universe}, net)
            st_ft = run_fleet(net, hist, fleet, flows or {}, static, seed=seed)
            for s, n in st_ft.vehicles_on.items():
                total = st_ft.pollutant_units[s] + st_ft.clean_air_units[s]
                assert abs(total - n * static.density(s, 0.0)) <= 1e-9 * max(1.0, total)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
