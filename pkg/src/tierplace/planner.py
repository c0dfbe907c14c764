"""LNODP slot step, greedy per-dataset replanning and two-tier partitioning."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateTierPair, InfeasibleScenario, PlacementInfeasible, ValidationError
from .lyapunov import (PRESSURE_FORMS, QUEUE_UNITS, QueueState, coefficient_tensor,
                       pressure_matrix)
from .model import TOL, CostModel, PlacementPlan

log = logging.getLogger(__name__)

INTERVAL_MODES = ("numeric", "closed_form")


@dataclass(frozen=True)
class PlannerConfig:
    max_iterations: int = 10  # T
    inner_iterations: int = 5  # T'
    omega: float = 1.0
    grid_step: float = 0.001
    interval_mode: str = "numeric"
    pressure_form: str = "derived"
    queue_unit: str = "GB"

    def __post_init__(self):
        if self.max_iterations < 1 or self.inner_iterations < 1:
            raise ValidationError("iteration counts must be >= 1", "planner.max_iterations")
        if not self.omega >= 0:
            raise ValidationError("omega must be >= 0", "planner.omega")
        if not (0 < self.grid_step <= 0.1):
            raise ValidationError("grid_step must lie in (0, 0.1]", "planner.grid_step")
        if self.interval_mode not in INTERVAL_MODES:
            raise ValidationError(f"unknown interval mode {self.interval_mode!r}",
                                  "planner.interval_mode")
        if self.pressure_form not in PRESSURE_FORMS:
            raise ValidationError(f"unknown pressure form {self.pressure_form!r}",
                                  "planner.pressure_form")
        if self.queue_unit not in QUEUE_UNITS:
            raise ValidationError(f"unknown queue unit {self.queue_unit!r}", "sim.queue_unit")


@dataclass(frozen=True)
class FeasibleInterval:
    lower: float
    upper: float
    j1: int
    j2: int
    a: float | None = None
    b: float | None = None
    c: float | None = None
    d: float | None = None
    mode: str = "numeric"
    closed_lower: float | None = None
    closed_upper: float | None = None

    @property
    def empty(self) -> bool:
        return not (self.lower <= self.upper)

    def intersect(self, other: "FeasibleInterval") -> "FeasibleInterval":
        return FeasibleInterval(max(self.lower, other.lower), min(self.upper, other.upper),
                                self.j1, self.j2, mode=self.mode)


EMPTY = math.nan


def unit_row(n: int, j: int) -> np.ndarray:
    row = np.zeros(n)
    row[j] = 1.0
    return row


class Workspace:
    """Mutable plan plus per-job running sums; row swaps cost O(consumers)."""

    def __init__(self, model: CostModel, matrix):
        self.model = model
        self.matrix = np.array(matrix, dtype=float, copy=True)
        self.rT, self.rS, self.rR = model.row_terms(self.matrix)
        B = model.incidence
        self.dtt, self.ds, self.da = B @ self.rT, B @ self.rS, B @ self.rR

    def row_placed(self, i: int) -> bool:
        return abs(float(self.matrix[i].sum()) - 1.0) <= TOL

    def _terms(self, i, row):
        m = self.model
        return float(m.dTT[i] @ row), float(m.dSP[i] @ row), float(m.dRP[i] @ row)

    def consumer_values(self, i: int, row):
        """(time, budget-basis money, cost) arrays over consumers of i with row swapped in."""
        m = self.model
        ks = m.consumers[i]
        t, s, r = self._terms(i, row)
        dtt = self.dtt[ks] - self.rT[i] + t
        ds = self.ds[ks] - self.rS[i] + s
        da = self.da[ks] - self.rR[i] + r
        time = m.init[ks] + dtt + m.et[ks]
        money = m.vmn[ks] * (dtt + m.et[ks]) + m.share[ks] * ds + da
        cost = (m.wm[ks] * (money / m.dm[ks]) * m.freq[ks] + m.wt[ks] * (time / m.dt[ks]))
        return time, m.budget_scale[ks] * money, cost

    def unit_values(self, i: int):
        """Like :meth:`consumer_values` for every whole-tier row at once (consumers x N)."""
        m = self.model
        ks = m.consumers[i]
        dtt = (self.dtt[ks] - self.rT[i])[:, None] + m.dTT[i][None, :]
        ds = (self.ds[ks] - self.rS[i])[:, None] + m.dSP[i][None, :]
        da = (self.da[ks] - self.rR[i])[:, None] + m.dRP[i][None, :]
        col = lambda a: a[ks][:, None]  # noqa: E731
        time = col(m.init) + dtt + col(m.et)
        money = col(m.vmn) * (dtt + col(m.et)) + col(m.share) * ds + da
        cost = col(m.wm) * (money / col(m.dm)) * col(m.freq) + col(m.wt) * (time / col(m.dt))
        return time, col(m.budget_scale) * money, cost

    def row_cost(self, i: int, row) -> float:
        """Total cost over consumers of i (other jobs do not depend on row i)."""
        return math.fsum(self.consumer_values(i, row)[2])

    def row_feasible(self, i: int, row):
        m = self.model
        ks = m.consumers[i]
        time, budget, _ = self.consumer_values(i, row)
        return bool(np.all(time <= m.tdl[ks] + TOL)), bool(np.all(budget <= m.mb[ks] + TOL))

    def set_row(self, i: int, row):
        m = self.model
        row = np.asarray(row, dtype=float)
        t, s, r = self._terms(i, row)
        ks = m.consumers[i]
        self.dtt[ks] += t - self.rT[i]
        self.ds[ks] += s - self.rS[i]
        self.da[ks] += r - self.rR[i]
        self.rT[i], self.rS[i], self.rR[i] = t, s, r
        self.matrix[i] = row

    def plan(self) -> PlacementPlan:
        return self.model.plan(self.matrix)


def _argmin(values, candidates):
    best, best_j = math.inf, None
    for j in candidates:  # ascending index: ties go to the lowest tier
        if values[j] < best:
            best, best_j = values[j], j
    return best_j


def feasible_type_sets(ws: Workspace, i: int, values=None):
    """Tiers where placing all of dataset i meets every consumer's deadline / budget."""
    m = ws.model
    ks = m.consumers[i]
    time, budget, _ = ws.unit_values(i) if values is None else values
    tok = np.all(time <= m.tdl[ks][:, None] + TOL, axis=0)
    mok = np.all(budget <= m.mb[ks][:, None] + TOL, axis=0)
    return [j for j in range(m.N) if tok[j]], [j for j in range(m.N) if mok[j]]


def closed_form_constants(model: CostModel, i: int, k: int, j1: int, j2: int):
    """The printed a, b, c, d of the two-tier interval for job k (single input)."""
    size = model.size[i]
    s1, s2 = model.speed[j1], model.speed[j2]
    if s1 == s2:
        raise DegenerateTierPair(f"tiers {model.tier_ids[j1]} and {model.tier_ids[j2]} "
                                 "have equal speed", model.tier_ids[j1])
    vmn, et = model.vmn[k], model.et[k]
    d = model.share[k]
    a = ((model.tdl[k] - et - model.init[k]) / size * (s1 * s2 / (s2 - s1))
         - s1 / (s2 - s1))
    c = (vmn * (1.0 / s1 - 1.0 / s2) + d * (model.sp[j1] - model.sp[j2])
         + (model.rp[j1] - model.rp[j2]))
    if c == 0:
        b = math.nan
    else:
        b = (model.mb[k] / (c * size) - vmn * et / (c * size) - vmn / (c * s2)
             - model.sp[j2] / (c * size) - model.rp[j2] / (c * size))
    return a, b, c, d


def _closed_interval(a, b, c):
    if c > 0:
        return max(0.0, a), min(b, 1.0)
    return max(a, b), 1.0


def _split_values(ws: Workspace, i: int, k: int, j1: int, j2: int, p: np.ndarray):
    """Job k's time and budget-basis money with fraction p of dataset i on j1, rest on j2."""
    m = ws.model
    t = m.dTT[i, j1] * p + m.dTT[i, j2] * (1.0 - p)
    s = m.dSP[i, j1] * p + m.dSP[i, j2] * (1.0 - p)
    r = m.dRP[i, j1] * p + m.dRP[i, j2] * (1.0 - p)
    dtt = ws.dtt[k] - ws.rT[i] + t
    ds = ws.ds[k] - ws.rS[i] + s
    da = ws.da[k] - ws.rR[i] + r
    time = m.init[k] + dtt + m.et[k]
    money = m.vmn[k] * (dtt + m.et[k]) + m.share[k] * ds + da
    return time, m.budget_scale[k] * money


def _split_ok(ws, i, k, j1, j2, p, slack: float = TOL):
    time, budget = _split_values(ws, i, k, j1, j2, np.asarray(p, dtype=float))
    return (time <= ws.model.tdl[k] + slack) & (budget <= ws.model.mb[k] + slack)


def _bisect(ws, i, k, j1, j2, bad: float, good: float, tol: float = 1e-9) -> float:
    # exact comparison, so the returned endpoint does not lean on the tolerance
    while abs(good - bad) > tol:
        mid = 0.5 * (good + bad)
        if _split_ok(ws, i, k, j1, j2, mid, 0.0):
            good = mid
        else:
            bad = mid
    return good


def feasible_interval(ws: Workspace, i: int, k: int, j1: int, j2: int,
                      mode: str = "numeric", grid_step: float = 0.001) -> FeasibleInterval:
    """Fractions p of dataset i on j1 (remainder on j2) that satisfy job k's hard constraints."""
    if j1 == j2:
        raise DegenerateTierPair("j1 and j2 must differ")
    m = ws.model
    try:
        a, b, c, d = closed_form_constants(m, i, k, j1, j2)
        lo_c, hi_c = _closed_interval(a, b, c) if c != 0 else (None, None)
    except DegenerateTierPair:
        if mode == "closed_form":
            raise
        a = b = c = d = lo_c = hi_c = None

    if mode == "closed_form" and c != 0:
        return FeasibleInterval(lo_c, hi_c, j1, j2, a, b, c, d, "closed_form", lo_c, hi_c)

    n = int(round(1.0 / grid_step))
    grid = np.linspace(0.0, 1.0, n + 1)
    ok = _split_ok(ws, i, k, j1, j2, grid)
    idx = np.flatnonzero(ok)
    if idx.size == 0:
        return FeasibleInterval(EMPTY, EMPTY, j1, j2, a, b, c, d, "numeric", lo_c, hi_c)
    first, last = int(idx[0]), int(idx[-1])
    lower = (float(grid[first]) if first == 0
             else _bisect(ws, i, k, j1, j2, grid[first - 1], grid[first]))
    upper = (float(grid[last]) if last == n
             else _bisect(ws, i, k, j1, j2, grid[last + 1], grid[last]))
    return FeasibleInterval(lower, upper, j1, j2, a, b, c, d, "numeric", lo_c, hi_c)


def partition_place(ws: Workspace, i: int, time_set, money_set,
                    mode: str = "numeric", grid_step: float = 0.001) -> np.ndarray:
    m = ws.model
    did = m.dataset_ids[i]
    jobs = tuple(m.job_ids[k] for k in m.consumers[i])
    if not time_set or not money_set:
        raise PlacementInfeasible(
            f"dataset {did}: no tier meets the {'deadline' if not time_set else 'budget'} "
            "of every consumer; relax the hard constraints", did, jobs)
    N = m.N
    values = ws.unit_values(i)
    costs = values[2].sum(axis=0)
    j1 = _argmin(costs, time_set)
    j2 = _argmin(costs, money_set)
    if j1 == j2:
        return unit_row(N, j1)
    lo, hi = 0.0, 1.0
    for k in m.consumers[i]:
        iv = feasible_interval(ws, i, k, j1, j2, mode, grid_step)
        if mode == "numeric" and iv.closed_lower is not None and len(m.consumers[i]) == 1:
            off = max(abs(iv.closed_lower - iv.lower), abs(iv.closed_upper - iv.upper))
            if off > grid_step:
                log.debug("dataset %s job %s: numeric interval [%g, %g] vs closed form [%g, %g]",
                          did, m.job_ids[k], iv.lower, iv.upper, iv.closed_lower, iv.closed_upper)
        if iv.empty:
            lo, hi = math.nan, math.nan
            break
        lo, hi = max(lo, iv.lower), min(hi, iv.upper)
    if not (lo <= hi):
        raise PlacementInfeasible(
            f"dataset {did}: no split between {m.tier_ids[j1]} and {m.tier_ids[j2]} "
            "meets every consumer's constraints; relax the hard constraints", did, jobs)

    def split(p):
        row = np.zeros(N)
        row[j1] = p
        row[j2] = 1.0 - p
        return row

    rows = [split(lo), split(hi)]
    c_lo, c_hi = ws.row_cost(i, rows[0]), ws.row_cost(i, rows[1])
    return rows[1] if c_hi < c_lo else rows[0]


def place_dataset(ws: Workspace, i: int, constrained: bool = True,
                  mode: str = "numeric", grid_step: float = 0.001) -> np.ndarray:
    """Cheapest single tier if it meets every consumer's constraints, else a two-tier split."""
    N = ws.model.N
    values = ws.unit_values(i)
    costs = values[2].sum(axis=0)
    j_star = _argmin(costs, range(N))
    if not constrained:
        return unit_row(N, j_star)
    time_set, money_set = feasible_type_sets(ws, i, values)
    if j_star in time_set and j_star in money_set:
        return unit_row(N, j_star)
    return partition_place(ws, i, time_set, money_set, mode, grid_step)


def _row_violates(ws: Workspace, i: int) -> bool:
    tok, mok = ws.row_feasible(i, ws.matrix[i])
    return not (tok and mok)


def near_optimal_planning(model: CostModel, plan: PlacementPlan, order=None, *,
                          passes: int = 1, constrained: bool = True,
                          mode: str = "numeric", grid_step: float = 0.001) -> PlacementPlan:
    """Replace one dataset at a time, keeping a replacement only if it lowers total cost.

    Unplaced rows accept any placement. A row that breaks a hard constraint
    also accepts a replacement that meets them. Raises
    :class:`PlacementInfeasible` if some dataset still has no feasible
    placement after the last pass.
    """
    ws = Workspace(model, plan.matrix)
    if order is None:
        order = range(model.M)
    order = [i for i in order if model.consumers[i]]
    infeasible: dict[int, PlacementInfeasible] = {}
    for _ in range(passes):
        changed = False
        infeasible.clear()
        for i in order:
            try:
                cand = place_dataset(ws, i, constrained, mode, grid_step)
            except PlacementInfeasible as exc:
                infeasible[i] = exc
                continue
            if np.array_equal(cand, ws.matrix[i]):
                continue
            if not ws.row_placed(i):
                adopt = True
            else:
                adopt = ws.row_cost(i, cand) < ws.row_cost(i, ws.matrix[i])
                if not adopt and constrained and _row_violates(ws, i):
                    tok, mok = ws.row_feasible(i, cand)
                    adopt = tok and mok
            if adopt:
                ws.set_row(i, cand)
                changed = True
        if not changed:
            break
    if infeasible:
        raise next(iter(infeasible.values()))
    return ws.plan()


@dataclass
class StepResult:
    plan: PlacementPlan
    candidate: PlacementPlan
    postponed: tuple
    order: tuple
    pressure: np.ndarray = field(repr=False)


def lnodp_step(model: CostModel, state: QueueState, plan: PlacementPlan,
               config: PlannerConfig = PlannerConfig(), slot: int | None = None) -> StepResult:
    """One slot of drift-plus-penalty placement.

    Datasets are visited in descending order of their worst tier pressure.
    A dataset adopts its candidate row only if every nonzero entry that
    changes the current row has pressure <= 0; otherwise the row is zeroed
    and the dataset is reported as postponed. Queue updates are left to the
    caller, which knows the removals and generated volumes of the slot.
    """
    coeff = coefficient_tensor(model)
    pressure = pressure_matrix(model, state, config.omega, config.pressure_form,
                               config.queue_unit, coeff)
    key = pressure.max(axis=1) if model.N else np.zeros(model.M)
    order = sorted((i for i in range(model.M) if model.consumers[i]),
                   key=lambda i: (-key[i], model.dataset_ids[i]))
    try:
        candidate = near_optimal_planning(model, plan, order, passes=config.inner_iterations,
                                          mode=config.interval_mode, grid_step=config.grid_step)
    except PlacementInfeasible as exc:
        raise InfeasibleScenario(str(exc), exc.dataset, slot, exc.jobs) from exc

    out = np.array(plan.matrix, dtype=float, copy=True)
    postponed = []
    for i in order:
        cand = candidate.matrix[i]
        if np.array_equal(cand, plan.matrix[i]):
            continue
        accept = all(pressure[i, j] <= 0.0 for j in range(model.N) if cand[j] != 0.0)
        if accept:
            out[i] = cand
        else:
            out[i] = 0.0
            postponed.append(model.dataset_ids[i])
    return StepResult(model.plan(out), candidate, tuple(sorted(postponed)),
                      tuple(model.dataset_ids[i] for i in order), pressure)
