"""Electric-mode allocation problems.

Every problem chooses ``x[s]`` in [0, 1], the fraction of segment ``s`` to
drive electrically, to maximise the pedestrian-weighted electric energy

    sum_s p[s] * d[s] * e[s] * x[s]            (times f[s] for the flow variant)

under an energy budget. Single-constraint problems are fractional knapsacks
and are solved greedily; the route-wise robust problem and the coordinated
fleet problem go through a dense LP.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

import numpy as np
from scipy.optimize import linprog

from .errors import (
    InsufficientBudgetForGreenZone,
    NegativeBudget,
    NegativeCap,
    SolverError,
    UnknownSegment,
    ValidationError,
)

FEAS_TOL = 1e-9
TIE_RTOL = 1e-12


class PlanStatus(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE_CAP = "InfeasibleCap"
    TRIVIAL_ALL_ONE = "TrivialAllOne"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class SegmentInstance:
    id: str
    p: float  # probability the segment is still ahead
    d: float  # pedestrians along the segment
    e: float  # expected electric energy to drive it, kWh
    f: float = 1.0  # relative traffic flow

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValidationError(f"segment {self.id!r}: probability {self.p} outside [0, 1]")
        for name in ("d", "e", "f"):
            v = getattr(self, name)
            if not v >= 0 or not math.isfinite(v):
                raise ValidationError(f"segment {self.id!r}: {name}={v} must be finite and >= 0")

    @property
    def cost(self) -> float:
        return self.p * self.e


def _frac_str(w: float) -> str:
    if w == 1.0:
        return ""
    fr = Fraction(w).limit_denominator(1000)
    if abs(float(fr) - w) <= 1e-12:
        return f"{fr}*"
    return f"{w:.6g}*"


@dataclass(frozen=True)
class LinearConstraint:
    """``sum_s weights[s] * e[s] * x[s] <= rhs``.

    ``weights`` keeps the probability factor separate from the energy so the
    constraint can be rendered symbolically as well as numerically.
    """

    label: str
    weights: Mapping[str, float]
    energies: Mapping[str, float]
    rhs: float

    @property
    def coefficients(self) -> dict[str, float]:
        return {s: w * self.energies[s] for s, w in self.weights.items()}

    def lhs(self, x: Mapping[str, float]) -> float:
        return sum(c * x.get(s, 0.0) for s, c in self.coefficients.items())

    def slack(self, x: Mapping[str, float]) -> float:
        return self.rhs - self.lhs(x)

    def render(self) -> str:
        terms = [f"{_frac_str(w)}e[{s}]*x[{s}]" for s, w in self.weights.items()]
        return " + ".join(terms) + " <= E_av"

    def __str__(self):
        return self.render()


@dataclass
class AllocationPlan:
    x: dict[str, float]
    objective: float
    budget_used: float
    status: PlanStatus
    budget: float
    objective_terms: dict[str, float] = field(default_factory=dict)
    constraints: list[LinearConstraint] = field(default_factory=list)
    problem: str = "expected"

    @property
    def binding(self) -> list[str]:
        return [
            c.label
            for c in self.constraints
            if c.slack(self.x) <= FEAS_TOL * max(1.0, abs(c.rhs))
        ]

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "status": str(self.status),
            "budget": self.budget,
            "budget_used": self.budget_used,
            "objective": self.objective,
            "x": dict(self.x),
            "objective_terms": dict(self.objective_terms),
            "constraints": [
                {
                    "label": c.label,
                    "expression": c.render(),
                    "coefficients": c.coefficients,
                    "rhs": c.rhs,
                    "slack": c.slack(self.x),
                }
                for c in self.constraints
            ],
            "binding": self.binding,
        }


def _check_budget(budget: float) -> float:
    if not budget >= 0 or not math.isfinite(budget):
        raise NegativeBudget(f"budget must be finite and non-negative, got {budget}")
    return float(budget)


def _check_instances(instances: Sequence[SegmentInstance]) -> None:
    if not instances:
        raise ValidationError("at least one segment instance is required")
    seen = set()
    for inst in instances:
        if inst.id in seen:
            raise ValidationError(f"segment {inst.id!r} listed twice")
        seen.add(inst.id)


def objective_coefficients(
    instances: Sequence[SegmentInstance], use_flow: bool = False
) -> dict[str, float]:
    if use_flow:
        return {i.id: i.p * i.d * i.e * i.f for i in instances}
    return {i.id: i.p * i.d * i.e for i in instances}


def expected_constraint(instances: Sequence[SegmentInstance], budget: float) -> LinearConstraint:
    return LinearConstraint(
        "expected",
        {i.id: i.p for i in instances},
        {i.id: i.e for i in instances},
        budget,
    )


RoutesArg = Union[Mapping[str, Sequence[str]], Sequence[Sequence[str]]]


def _named_routes(routes: RoutesArg) -> dict[str, tuple[str, ...]]:
    if isinstance(routes, Mapping):
        return {str(k): tuple(v) for k, v in routes.items()}
    return {f"route{k + 1}": tuple(r) for k, r in enumerate(routes)}


def route_constraints(
    instances: Sequence[SegmentInstance], routes: RoutesArg, budget: float
) -> list[LinearConstraint]:
    """One unweighted energy constraint per route (worst case over routes)."""
    energy = {i.id: i.e for i in instances}
    out = []
    for name, segs in _named_routes(routes).items():
        missing = [s for s in segs if s not in energy]
        if missing:
            raise UnknownSegment(f"route {name!r} uses segments without an instance: {missing}")
        out.append(
            LinearConstraint(
                f"route:{name}", {s: 1.0 for s in segs}, {s: energy[s] for s in segs}, budget
            )
        )
    return out


# greedy fractional knapsack


def _greedy(
    instances: Sequence[SegmentInstance], budget: float, density: Mapping[str, float]
) -> tuple[dict[str, float], bool]:
    """Fill segments in descending ``density`` order; ties at the margin share equally.

    Returns the allocation and whether the budget covered everything.
    """
    x: dict[str, float] = {}
    paid = []
    for inst in instances:
        if inst.p == 0.0:
            x[inst.id] = 0.0
        elif inst.e == 0.0:
            x[inst.id] = 1.0  # free
        else:
            paid.append(inst)

    total = math.fsum(i.cost for i in paid)
    if total <= budget:
        for inst in paid:
            x[inst.id] = 1.0
        return x, True

    paid.sort(key=lambda i: -density[i.id])
    remaining = budget
    k = 0
    while k < len(paid):
        top = density[paid[k].id]
        j = k
        while j < len(paid) and abs(density[paid[j].id] - top) <= TIE_RTOL * max(abs(top), 1e-300):
            j += 1
        group = paid[k:j]
        cost = math.fsum(i.cost for i in group)
        if cost <= remaining:
            for inst in group:
                x[inst.id] = 1.0
            remaining -= cost
        else:
            frac = max(remaining, 0.0) / cost
            for inst in group:
                x[inst.id] = frac
            for inst in paid[j:]:
                x[inst.id] = 0.0
            break
        k = j
    return x, False


def _knapsack_plan(instances, budget, use_flow, problem) -> AllocationPlan:
    _check_instances(instances)
    budget = _check_budget(budget)
    if use_flow:
        density = {i.id: i.d * i.f for i in instances}
    else:
        density = {i.id: i.d for i in instances}
    x, all_one = _greedy(instances, budget, density)
    x = {i.id: x[i.id] for i in instances}
    coef = objective_coefficients(instances, use_flow)
    con = expected_constraint(instances, budget)
    return AllocationPlan(
        x=x,
        objective=math.fsum(coef[s] * x[s] for s in x),
        budget_used=con.lhs(x),
        status=PlanStatus.TRIVIAL_ALL_ONE if all_one else PlanStatus.OPTIMAL,
        budget=budget,
        objective_terms=coef,
        constraints=[con],
        problem=problem,
    )


def solve_expected(instances: Sequence[SegmentInstance], budget: float) -> AllocationPlan:
    """Maximise pedestrian-weighted electric energy under the probability-weighted budget."""
    return _knapsack_plan(instances, budget, use_flow=False, problem="expected")


def solve_flow(instances: Sequence[SegmentInstance], budget: float) -> AllocationPlan:
    """Like :func:`solve_expected` but each segment's value is scaled by its traffic flow."""
    return _knapsack_plan(instances, budget, use_flow=True, problem="flow")


# LP path


def _solve_lp(
    c: np.ndarray,
    A: np.ndarray,
    b: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
) -> np.ndarray:
    """Maximise ``c @ x`` s.t. ``A @ x <= b``, ``lo <= x <= hi``.

    Rows and objective are rescaled before handing off to HiGHS; the result is
    clipped to the box. Returns None if infeasible.
    """
    n = len(c)
    if A.size == 0:
        A = np.zeros((0, n))
        b = np.zeros(0)
    row_scale = np.abs(A).max(axis=1) if len(A) else np.zeros(0)
    row_scale[row_scale == 0] = 1.0
    As = A / row_scale[:, None]
    bs = b / row_scale
    cmax = np.abs(c).max() if n else 0.0
    cs = c / cmax if cmax > 0 else c
    res = linprog(
        -cs,
        A_ub=As if len(As) else None,
        b_ub=bs if len(bs) else None,
        bounds=list(zip(lo, hi)),
        method="highs",
        options={
            "primal_feasibility_tolerance": 1e-10,
            "dual_feasibility_tolerance": 1e-10,
        },
    )
    if res.status == 2:
        return None
    if res.status != 0:
        raise SolverError(f"LP solver failed: {res.message}")
    x = np.clip(res.x, lo, hi)
    return _polish_vertex(cs, As, bs, lo, hi, x)


def _polish_vertex(c, A, b, lo, hi, x, tol=1e-9):
    """Snap a solver answer onto the vertex its active constraints define.

    HiGHS stops within its tolerances; solving the active set directly
    recovers the vertex to rounding error. The answer is kept only if it stays
    feasible and does not lose objective.
    """
    at_lo = np.abs(x - lo) <= tol
    at_hi = ~at_lo & (np.abs(x - hi) <= tol)
    fixed = at_lo | at_hi
    free = ~fixed
    z = np.where(at_lo, lo, np.where(at_hi, hi, x))
    if free.any():
        if not len(A):
            return x
        tight = np.abs(A @ x - b) <= tol
        if not tight.any():
            return x
        M = A[np.ix_(tight, free)]
        rhs = b[tight] - A[np.ix_(tight, fixed)] @ z[fixed]
        delta = np.linalg.lstsq(M, rhs - M @ z[free], rcond=None)[0]
        z[free] = z[free] + delta
        if np.abs(M @ z[free] - rhs).max() > 1e-12:
            return x
    if (z < lo - 1e-12).any() or (z > hi + 1e-12).any():
        return x
    z = np.clip(z, lo, hi)
    if len(A) and (A @ z > b + 1e-12).any():
        return x
    if c @ z < c @ x - 1e-12 * max(1.0, abs(float(c @ x))):
        return x
    return z


def _shrink_to_budget(x: np.ndarray, A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pull a solver answer back inside non-negative budget rows.

    HiGHS works to ~1e-10 in scaled units; scaling ``x`` down by the worst
    row ratio restores exact feasibility at a negligible objective cost.
    """
    worst = 1.0
    for row, rhs in zip(A, b):
        if (row >= 0).all():
            lhs = float(row @ x)
            if lhs > rhs and lhs > 0:
                worst = min(worst, max(rhs, 0.0) / lhs)
    return x * worst if worst < 1.0 else x


def solve_robust(
    instances: Sequence[SegmentInstance], routes: RoutesArg, budget: float
) -> AllocationPlan:
    """Maximise the expected objective while every route alone fits the budget."""
    _check_instances(instances)
    budget = _check_budget(budget)
    cons = route_constraints(instances, routes, budget)
    ids = [i.id for i in instances]
    col = {s: k for k, s in enumerate(ids)}
    coef = objective_coefficients(instances)
    c = np.array([coef[s] for s in ids])
    A = np.zeros((len(cons), len(ids)))
    for r, con in enumerate(cons):
        for s, v in con.coefficients.items():
            A[r, col[s]] += v
    b = np.full(len(cons), budget)

    worst_case = A.sum(axis=1).max() if len(cons) else 0.0
    if worst_case <= budget:
        xv = np.ones(len(ids))
        status = PlanStatus.TRIVIAL_ALL_ONE
    else:
        xv = _solve_lp(c, A, b, np.zeros(len(ids)), np.ones(len(ids)))
        if xv is None:  # x = 0 is always feasible
            raise SolverError("robust LP reported infeasible")
        xv = _shrink_to_budget(xv, A, b)
        status = PlanStatus.OPTIMAL
    x = {s: float(xv[col[s]]) for s in ids}
    return AllocationPlan(
        x=x,
        objective=math.fsum(coef[s] * x[s] for s in ids),
        budget_used=max((con.lhs(x) for con in cons), default=0.0),
        status=status,
        budget=budget,
        objective_terms=coef,
        constraints=cons,
        problem="robust",
    )


def solve_green_zone(
    instances: Sequence[SegmentInstance],
    green_segments: Iterable[str],
    budget: float,
    base: str = "expected",
) -> AllocationPlan:
    """Drive every green segment fully electric, then optimise the rest with what is left."""
    _check_instances(instances)
    budget = _check_budget(budget)
    if base not in ("expected", "flow"):
        raise ValueError(f"unknown base problem {base!r}")
    green = set(green_segments)
    by_id = {i.id: i for i in instances}
    unknown = green - set(by_id)
    if unknown:
        raise UnknownSegment(f"green segments without an instance: {sorted(unknown)}")
    reserve = math.fsum(by_id[s].cost for s in green)
    if reserve > budget * (1 + FEAS_TOL) + FEAS_TOL * 1e-3:
        raise InsufficientBudgetForGreenZone(reserve, budget)

    rest = [i for i in instances if i.id not in green]
    use_flow = base == "flow"
    x = {s: 1.0 for s in green}
    status = PlanStatus.TRIVIAL_ALL_ONE
    if rest:
        sub = _knapsack_plan(rest, max(budget - reserve, 0.0), use_flow, base)
        x.update(sub.x)
        status = sub.status
    x = {i.id: x[i.id] for i in instances}
    coef = objective_coefficients(instances, use_flow)
    con = expected_constraint(instances, budget)
    return AllocationPlan(
        x=x,
        objective=math.fsum(coef[s] * x[s] for s in x),
        budget_used=con.lhs(x),
        status=status,
        budget=budget,
        objective_terms=coef,
        constraints=[con],
        problem=f"green_zone[{base}]",
    )


def none_opt_plan(route_energies: Mapping[str, float], budget: float) -> AllocationPlan:
    """Benchmark without optimisation: one electric fraction for the whole route.

    ``route_energies`` should hold the largest observed energy per segment;
    the budget is then spread in proportion to those energies.
    """
    budget = _check_budget(budget)
    total = math.fsum(route_energies.values())
    frac = 1.0 if total <= budget else budget / total
    x = {s: frac for s in route_energies}
    return AllocationPlan(
        x=x,
        objective=0.0,
        budget_used=frac * total,
        status=PlanStatus.TRIVIAL_ALL_ONE if frac == 1.0 else PlanStatus.OPTIMAL,
        budget=budget,
        problem="none_opt",
    )


# coordinated fleet with pollutant caps


@dataclass
class FleetPlan:
    plans: list[AllocationPlan]
    status: PlanStatus
    pollutant: dict[str, float]  # expected pollutant units per capped segment
    caps: dict[str, float]

    @property
    def violation(self) -> dict[str, float]:
        return {s: max(0.0, self.pollutant[s] - cap) for s, cap in self.caps.items()}

    @property
    def max_violation(self) -> float:
        return max(self.violation.values(), default=0.0)

    def to_dict(self) -> dict:
        return {
            "status": str(self.status),
            "caps": dict(self.caps),
            "pollutant": dict(self.pollutant),
            "violation": self.violation,
            "plans": [p.to_dict() for p in self.plans],
        }


def solve_capped_fleet(
    vehicles: Sequence[Sequence[SegmentInstance]],
    budgets: Sequence[float],
    caps: Mapping[str, float],
) -> FleetPlan:
    """Jointly plan a fleet so that pollutant units on capped segments stay under their caps.

    Each vehicle keeps its own flow-weighted objective and budget. Pollutant
    units on segment ``s`` are ``sum_v p[v,s] * d[s] * (1 - x[v,s])``. When the
    caps cannot all be met, the largest violation is minimised first and the
    objective is maximised among plans achieving it; status is then
    ``InfeasibleCap``.
    """
    if len(vehicles) != len(budgets):
        raise ValidationError("need one budget per vehicle")
    budgets = [_check_budget(b) for b in budgets]
    for s, cap in caps.items():
        if not cap >= 0:
            raise NegativeCap(f"cap on {s!r} is negative: {cap}")
    for insts in vehicles:
        _check_instances(insts)

    # variable layout: vehicle blocks in order, then one slack for violation
    cols: list[tuple[int, SegmentInstance]] = [
        (v, inst) for v, insts in enumerate(vehicles) for inst in insts
    ]
    n = len(cols)
    c = np.array([inst.p * inst.d * inst.e * inst.f for _, inst in cols])

    budget_rows = np.zeros((len(vehicles), n))
    for k, (v, inst) in enumerate(cols):
        budget_rows[v, k] = inst.cost
    budget_rhs = np.array(budgets)

    active = {s: float(cap) for s, cap in caps.items() if math.isfinite(cap)}
    cap_ids = [s for s in active if any(inst.id == s and inst.p > 0 for _, inst in cols)]
    cap_rows = np.zeros((len(cap_ids), n))
    cap_rhs = np.zeros(len(cap_ids))
    for r, s in enumerate(cap_ids):
        load = 0.0
        for k, (_, inst) in enumerate(cols):
            if inst.id == s:
                w = inst.p * inst.d
                cap_rows[r, k] = -w
                load += w
        cap_rhs[r] = active[s] - load

    lo = np.zeros(n)
    hi = np.ones(n)
    status = PlanStatus.OPTIMAL
    if len(cap_ids):
        # phase 1: smallest achievable worst-case violation t
        A1 = np.vstack([
            np.hstack([budget_rows, np.zeros((len(vehicles), 1))]),
            np.hstack([cap_rows, -np.ones((len(cap_ids), 1))]),
        ])
        b1 = np.concatenate([budget_rhs, cap_rhs])
        c1 = np.zeros(n + 1)
        c1[-1] = -1.0
        big = float(np.abs(cap_rhs).max() + np.abs(cap_rows).sum() + 1.0)
        x1 = _solve_lp(c1, A1, b1, np.append(lo, 0.0), np.append(hi, big))
        if x1 is None:
            raise SolverError("phase-1 fleet LP infeasible")
        t_star = float(x1[-1])
        scale = max(1.0, float(np.abs(cap_rhs).max()))
        if t_star > 1e-7 * scale:
            status = PlanStatus.INFEASIBLE_CAP
            # phase 2: best objective with the violation pinned at its minimum
            c2 = np.append(c, 0.0)
            x2 = _solve_lp(c2, A1, b1, np.append(lo, t_star), np.append(hi, t_star))
            if x2 is None:
                t_hi = t_star * (1 + 1e-12) + 1e-12 * scale
                x2 = _solve_lp(c2, A1, b1, np.append(lo, t_star), np.append(hi, t_hi))
            xv = x2[:-1] if x2 is not None else x1[:-1]
        else:
            A = np.vstack([budget_rows, cap_rows])
            b = np.concatenate([budget_rhs, cap_rhs])
            xv = _solve_lp(c, A, b, lo, hi)
            if xv is None:
                # numerically on the boundary; phase 1 point is feasible to tolerance
                xv = x1[:-1]
    else:
        xv = _solve_lp(c, budget_rows, budget_rhs, lo, hi)
        if xv is None:
            raise SolverError("fleet LP infeasible without caps")

    # per-vehicle exact budget feasibility
    for v in range(len(vehicles)):
        mask = budget_rows[v] > 0
        used = float(budget_rows[v] @ xv)
        if used > budgets[v] and used > 0:
            xv = np.where(mask, xv * (budgets[v] / used), xv)

    plans = []
    for v, insts in enumerate(vehicles):
        x = {}
        for k, (vv, inst) in enumerate(cols):
            if vv == v:
                x[inst.id] = float(xv[k])
        coef = objective_coefficients(insts, use_flow=True)
        con = expected_constraint(insts, budgets[v])
        plans.append(
            AllocationPlan(
                x=x,
                objective=math.fsum(coef[s] * x[s] for s in x),
                budget_used=con.lhs(x),
                status=status,
                budget=budgets[v],
                objective_terms=coef,
                constraints=[con],
                problem="capped_fleet",
            )
        )

    pollutant = {}
    for s in caps:
        pollutant[s] = math.fsum(
            inst.p * inst.d * (1.0 - plans[v].x[inst.id])
            for v, inst in cols
            if inst.id == s
        )
    return FleetPlan(plans, status, pollutant, {s: float(cap) for s, cap in caps.items()})


def plan_feasible(plan: AllocationPlan, tol: float = FEAS_TOL) -> bool:
    if any(not (-tol <= v <= 1 + tol) for v in plan.x.values()):
        return False
    return all(c.slack(plan.x) >= -tol * max(1.0, abs(c.rhs)) for c in plan.constraints)


__all__ = [
    "AllocationPlan",
    "FleetPlan",
    "LinearConstraint",
    "PlanStatus",
    "SegmentInstance",
    "expected_constraint",
    "none_opt_plan",
    "objective_coefficients",
    "plan_feasible",
    "route_constraints",
    "solve_capped_fleet",
    "solve_expected",
    "solve_flow",
    "solve_green_zone",
    "solve_robust",
]
