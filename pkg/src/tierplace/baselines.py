"""Comparison policies: exhaustive search, Performance, Economic and ActGreedy."""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import SearchSpaceTooLarge
from .model import TOL, ConstraintReport, CostModel, PlacementPlan
from .planner import near_optimal_planning

DEFAULT_SEARCH_CAP = 10 ** 7


@dataclass
class PolicyOutcome:
    policy: str
    plan: PlacementPlan
    total_cost: float
    reports: list
    wall_time: float
    postponed: tuple = ()

    @property
    def time_ok(self) -> bool:
        return all(r.time_ok for r in self.reports)

    @property
    def money_ok(self) -> bool:
        return all(r.money_ok for r in self.reports)


def outcome(policy: str, model: CostModel, matrix, wall_time: float,
            postponed: tuple = ()) -> PolicyOutcome:
    reports = model.reports(matrix)
    return PolicyOutcome(policy, model.plan(matrix), model.total_cost(matrix, strict=False),
                         reports, wall_time, postponed)


def _planned_rows(model: CostModel):
    return [i for i in range(model.M) if model.consumers[i]]


def _uniform(model: CostModel, j: int, rows=None) -> np.ndarray:
    m = np.zeros((model.M, model.N))
    for i in (_planned_rows(model) if rows is None else rows):
        m[i, j] = 1.0
    return m


def brute_force(model: CostModel, constrained: bool = False,
                cap: int = DEFAULT_SEARCH_CAP) -> PolicyOutcome:
    """Minimum total cost over every whole-tier assignment of the planned datasets.

    With ``constrained`` only assignments meeting every hard constraint
    count; if none does, every row is left unplaced and the cost is infinite.
    """
    start = time.perf_counter()
    rows = _planned_rows(model)
    M, N = len(rows), model.N
    if N ** M > cap:
        raise SearchSpaceTooLarge(f"{N}^{M} assignments exceed the cap of {cap}")
    base = model.base_cost()
    row_cost = model.single_tier_row_cost()
    costs = [list(map(float, row_cost[i])) for i in rows]
    best, best_assign = math.inf, None
    if not constrained:
        for assign in itertools.product(range(N), repeat=M):
            c = base
            for r, j in zip(costs, assign):
                c += r[j]
            if c < best:
                best, best_assign = c, assign
    else:
        K = model.K
        # per (row, tier, job): time and budget-basis money increments
        dT = [[[0.0] * K for _ in range(N)] for _ in rows]
        dM = [[[0.0] * K for _ in range(N)] for _ in rows]
        for a, i in enumerate(rows):
            for j in range(N):
                for k in model.consumers[i]:
                    dT[a][j][k] = float(model.dTT[i, j])
                    dM[a][j][k] = float(model.budget_scale[k] * (
                        model.vmn[k] * model.dTT[i, j] + model.share[k] * model.dSP[i, j]
                        + model.dRP[i, j]))
        t0 = list(map(float, model.init + model.et))
        m0 = list(map(float, model.budget_scale * model.vmn * model.et))
        tdl = list(map(float, model.tdl + TOL))
        mb = list(map(float, model.mb + TOL))
        for assign in itertools.product(range(N), repeat=M):
            c = base
            for r, j in zip(costs, assign):
                c += r[j]
            if c >= best:
                continue
            t, mo = t0[:], m0[:]
            for a, j in enumerate(assign):
                for k in model.consumers[rows[a]]:
                    t[k] += dT[a][j][k]
                    mo[k] += dM[a][j][k]
            if all(t[k] <= tdl[k] and mo[k] <= mb[k] for k in range(K)):
                best, best_assign = c, assign
    matrix = np.zeros((model.M, N))
    if best_assign is not None:
        for i, j in zip(rows, best_assign):
            matrix[i, j] = 1.0
    elapsed = time.perf_counter() - start
    out = outcome("brute", model, matrix, elapsed)
    if best_assign is None and rows:
        out.total_cost = math.inf
    return out


def performance_policy(model: CostModel) -> PolicyOutcome:
    """Everything on the fastest tier."""
    start = time.perf_counter()
    j = int(np.argmax(model.speed))  # first maximum
    return outcome("performance", model, _uniform(model, j), time.perf_counter() - start)


def economic_policy(model: CostModel) -> PolicyOutcome:
    """Everything on the tier with the lowest storage price."""
    start = time.perf_counter()
    j = int(np.argmin(model.sp))
    return outcome("economic", model, _uniform(model, j), time.perf_counter() - start)


def act_greedy(model: CostModel, plan: PlacementPlan | None = None,
               passes: int = 5) -> PolicyOutcome:
    """Per-dataset cost-greedy placement over single tiers, hard constraints ignored."""
    start = time.perf_counter()
    if plan is None:
        plan = PlacementPlan.empty(model.dataset_ids, model.tier_ids)
    result = near_optimal_planning(model, plan, passes=passes, constrained=False)
    return outcome("actgreedy", model, result.matrix, time.perf_counter() - start)


def constraint_summary(reports) -> ConstraintReport:
    """Worst-case view over jobs (max time, max money, all-ok flags)."""
    if not reports:
        return ConstraintReport("", True, True, 0.0, 0.0)
    return ConstraintReport("*", all(r.time_ok for r in reports), all(r.money_ok for r in reports),
                            max(r.time_value for r in reports), max(r.money_value for r in reports))
