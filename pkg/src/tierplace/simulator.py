"""Discrete-time engine: executions, intermediate data, expiry, replanning, traces."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import baselines
from .errors import DanglingReference, InfeasibleScenario, TierplaceError, ValidationError
from .lyapunov import (DriftBounds, QueueState, Traffic, coefficient_tensor, lyapunov_value,
                       drift_bound_rhs)
from .model import (BUDGET_BASES, TOL, CostModel, DataSet, EnvironmentParams, JobProfile,
                    PlacementPlan, StorageType)
from .planner import PlannerConfig, lnodp_step

log = logging.getLogger(__name__)

POLICIES = ("lnodp", "brute", "performance", "economic", "actgreedy")
DAY = 86400.0


@dataclass(frozen=True)
class Scenario:
    tiers: tuple
    datasets: tuple  # declared input datasets
    jobs: tuple
    env: EnvironmentParams
    planner: PlannerConfig = PlannerConfig()
    horizon: int = 1
    slot_seconds: float = DAY
    seed: int = 0
    budget_basis: str = "per_execution"
    queue_unit: str = "GB"
    period_seconds: float = 30 * DAY  # charging period
    intermediate_uses: int = 1
    generation_jitter: float = 0.0
    brute_constrained: bool = False

    def __post_init__(self):
        object.__setattr__(self, "tiers", tuple(self.tiers))
        object.__setattr__(self, "jobs", tuple(self.jobs))
        if self.horizon < 1:
            raise ValidationError("horizon must be >= 1", "sim.horizon")
        if not self.slot_seconds > 0 or not self.period_seconds > 0:
            raise ValidationError("slot and period lengths must be > 0", "sim.slot_seconds")
        if self.budget_basis not in BUDGET_BASES:
            raise ValidationError(f"unknown budget basis {self.budget_basis!r}", "sim.budget_basis")
        if self.intermediate_uses < 1:
            raise ValidationError("intermediate_uses must be >= 1", "sim.intermediate_uses")
        if not 0 <= self.generation_jitter < 1:
            raise ValidationError("generation_jitter must lie in [0, 1)", "sim.generation_jitter")
        if not self.tiers:
            raise ValidationError("at least one tier is required", "tiers")
        for kind, items in (("tiers", self.tiers), ("jobs", self.jobs)):
            ids = [x.id for x in items]
            if len(set(ids)) != len(ids):
                raise ValidationError(f"duplicate ids in {kind}", kind)
        known = {d.id for d in self.datasets}
        if len(known) != len(self.datasets):
            raise ValidationError("duplicate ids in datasets", "datasets")
        consumers = {d: set() for d in known}
        for job in self.jobs:
            for d in job.inputs:
                if d not in known:
                    raise DanglingReference(f"job {job.id} reads unknown dataset {d}",
                                            f"jobs.{job.id}.inputs")
                consumers[d].add(job.id)
        job_ids = {j.id for j in self.jobs}
        fixed = []
        for d in self.datasets:
            for c in d.consumers:
                if c not in job_ids:
                    raise DanglingReference(f"dataset {d.id} names unknown consumer {c}",
                                            f"datasets.{d.id}.consumers")
            fixed.append(replace(d, consumers=frozenset(consumers[d.id]) | d.consumers))
        for d in fixed:
            for c in d.consumers:
                job = next(j for j in self.jobs if j.id == c)
                if d.id not in job.inputs:
                    raise ValidationError(f"dataset {d.id} lists consumer {c} but job {c} "
                                          "does not read it", f"datasets.{d.id}.consumers")
        object.__setattr__(self, "datasets", tuple(fixed))
        object.__setattr__(self, "planner", replace(self.planner, queue_unit=self.queue_unit))

    @property
    def slots_per_period(self) -> float:
        return self.period_seconds / self.slot_seconds

    def job_period(self, job: JobProfile) -> int:
        """Slots between executions: round(slots_per_period / f), at least 1."""
        return max(1, int(round(self.slots_per_period / job.frequency)))

    def weight(self, size: float) -> float:
        return size if self.queue_unit == "GB" else 1.0

    def drift_bounds(self) -> DriftBounds:
        """A-priori per-slot bounds from the scenario.

        Any slot moves at most the total live volume, which never exceeds the
        declared inputs plus everything the jobs can generate over the horizon.
        """
        g = [self.weight(j.intermediate_size * (1 + self.generation_jitter)) if j.intermediate_size
             else 0.0 for j in self.jobs]
        volume = sum(self.weight(d.size) for d in self.datasets)
        for job, gk in zip(self.jobs, g):
            volume += gk * math.ceil(self.horizon / self.job_period(job) + 1)
        return DriftBounds(volume, volume, volume, max(g, default=0.0))

    def model(self) -> CostModel:
        return CostModel(self.datasets, self.jobs, self.tiers, self.env, self.budget_basis)


@dataclass
class SlotRecord:
    slot: int
    executed: tuple
    blocked: tuple
    generated: tuple
    expired: tuple
    postponed: tuple
    replanned: bool
    dataset_ids: tuple
    sizes: tuple
    consumers: tuple  # per dataset, sorted job ids
    matrix: np.ndarray
    job_time: dict
    job_money: dict
    job_cost: dict
    time_ok: dict
    money_ok: dict
    total_cost: float
    storage_backlog: np.ndarray  # state at slot start
    job_backlog: np.ndarray
    lyapunov: float
    drift: float
    rhs: float
    rhs_printed: float
    traffic: Traffic
    wall_time: float

    @property
    def backlog(self) -> float:
        return float(self.storage_backlog.sum() + self.job_backlog.sum())


@dataclass
class SimulationTrace:
    policy: str
    tier_ids: tuple
    job_ids: tuple
    omega: float
    records: list = field(default_factory=list)
    bounds: DriftBounds | None = None

    @property
    def time_avg_cost(self) -> float:
        return math.fsum(r.total_cost for r in self.records) / len(self.records)

    @property
    def time_avg_backlog(self) -> float:
        return math.fsum(r.backlog for r in self.records) / len(self.records)

    def summary(self) -> dict:
        last = self.records[-1]
        return {
            "policy": self.policy,
            "slots": len(self.records),
            "time_avg_cost": self.time_avg_cost,
            "time_avg_backlog": self.time_avg_backlog,
            "final_total_cost": last.total_cost,
            "all_time_ok": all(all(r.time_ok.values()) for r in self.records),
            "all_money_ok": all(all(r.money_ok.values()) for r in self.records),
            "bound_violations": sum(1 for r in self.records
                                    if r.drift + self.omega * r.total_cost > r.rhs + 1e-6),
            "postponed_slots": sum(1 for r in self.records if r.postponed),
        }


def _choose(policy: str, model: CostModel, state: QueueState, current: PlacementPlan,
            scenario: Scenario, slot: int):
    """Plan for the planned rows and the postponed dataset ids."""
    if policy == "lnodp":
        step = lnodp_step(model, state, current, scenario.planner, slot)
        return step.plan.matrix, step.postponed
    if policy == "brute":
        out = baselines.brute_force(model, constrained=scenario.brute_constrained)
    elif policy == "performance":
        out = baselines.performance_policy(model)
    elif policy == "economic":
        out = baselines.economic_policy(model)
    elif policy == "actgreedy":
        out = baselines.act_greedy(model, current, passes=scenario.planner.inner_iterations)
    else:
        raise ValidationError(f"unknown policy {policy!r}", "policy")
    return out.plan.matrix, ()


class Engine:
    def __init__(self, scenario: Scenario, policy: str):
        if policy not in POLICIES:
            raise ValidationError(f"unknown policy {policy!r}", "policy")
        self.sc = scenario
        self.policy = policy
        self.rng = np.random.default_rng(scenario.seed)
        self.tier_ids = tuple(t.id for t in scenario.tiers)
        self.job_ids = tuple(j.id for j in scenario.jobs)
        self.N = len(self.tier_ids)
        self.datasets: dict[str, DataSet] = {d.id: d for d in scenario.datasets}
        self.physical: dict[str, np.ndarray | None] = {d.id: None for d in scenario.datasets}
        self.uses_left: dict[str, int] = {}
        self.last_touch: dict[str, int] = {}
        self.pending_jobs: set[str] = set()
        self.declared = {j.id: tuple(j.inputs) for j in scenario.jobs}
        self.validity = [t.validity for t in scenario.tiers]
        J0 = np.zeros(len(self.job_ids))
        for k, job in enumerate(scenario.jobs):
            J0[k] = sum(scenario.weight(self.datasets[d].size) for d in job.inputs)
        self.state = QueueState(np.zeros(self.N), J0, 0)
        self.generated_ids: list[str] = []
        self.expired_ids: list[str] = []

    # -- helpers -------------------------------------------------------------
    def _planning_model(self) -> CostModel:
        ids = [d for d in self.datasets if self.datasets[d].consumers]
        jobs = []
        for job in self.sc.jobs:
            inputs = [d for d in ids if job.id in self.datasets[d].consumers]
            jobs.append(replace(job, inputs=tuple(inputs)))
        return CostModel([self.datasets[d] for d in ids], jobs, self.sc.tiers, self.sc.env,
                         self.sc.budget_basis)

    def _current_matrix(self, model: CostModel) -> np.ndarray:
        m = np.zeros((model.M, self.N))
        for i, d in enumerate(model.dataset_ids):
            row = self.physical.get(d)
            if row is not None:
                m[i] = row
        return m

    def _expiry_limit(self, row) -> float:
        limits = [v for j, v in enumerate(self.validity) if row[j] > 0 and v is not None]
        return min(limits) if limits else math.inf

    # -- one slot ------------------------------------------------------------
    def step(self, t: int) -> SlotRecord:
        sc = self.sc
        K = len(self.job_ids)
        arrivals, removals = np.zeros(self.N), np.zeros(self.N)
        placed, generated = np.zeros(K), np.zeros(K)

        # (1) executions; a job waits while a declared input has never been placed
        executed, blocked = [], []
        for k, job in enumerate(sc.jobs):
            due = t % sc.job_period(job) == 0 or job.id in self.pending_jobs
            if not due:
                continue
            inputs = [d for d in self.datasets if job.id in self.datasets[d].consumers]
            if any(self.physical[d] is None for d in self.declared[job.id] if d in self.datasets):
                blocked.append(job.id)
                self.pending_jobs.add(job.id)
                continue
            self.pending_jobs.discard(job.id)
            executed.append(job.id)
            for d in inputs:
                if self.physical[d] is None:
                    continue
                self.last_touch[d] = t
                if d in self.uses_left:
                    self.uses_left[d] -= 1
                    if self.uses_left[d] == 0:
                        ds = self.datasets[d]
                        self.datasets[d] = replace(ds, consumers=ds.consumers - {job.id})

        # (2) intermediate data joins the owner's backlog; plannable from next slot
        fresh = []
        for k, job in enumerate(sc.jobs):
            if job.id in executed and job.intermediate_size > 0:
                size = job.intermediate_size
                if sc.generation_jitter:
                    size *= 1.0 + sc.generation_jitter * (2.0 * self.rng.random() - 1.0)
                ds = DataSet(f"{job.id}@{t}", size, frozenset({job.id}), "intermediate")
                fresh.append(ds)
                generated[k] += sc.weight(size)

        # (3) data left unaccessed beyond its tier validity; removed after planning
        # unless the policy re-places it in this slot
        due_expiry = [d for d, row in self.physical.items() if row is not None
                      and (t - self.last_touch[d]) * sc.slot_seconds > self._expiry_limit(row)]

        # (4) policy
        model = self._planning_model()
        current = self._current_matrix(model)
        pending = any(abs(current[i].sum() - 1.0) > TOL for i in range(model.M))
        replan = t == 0 or bool(executed) or bool(due_expiry) or pending
        postponed: tuple = ()
        wall = 0.0
        new = current
        if replan and model.M:
            start = time.perf_counter()
            new, postponed = _choose(self.policy, model, self.state, model.plan(current), sc, t)
            wall = time.perf_counter() - start
        physical = current.copy()
        for i, d in enumerate(model.dataset_ids):
            row = new[i]
            if abs(row.sum() - 1.0) > TOL:
                continue  # postponed: previous placement is kept
            old = current[i]
            if np.array_equal(row, old):
                continue
            w = sc.weight(model.size[i])
            arrivals += w * np.maximum(row - old, 0.0)
            removals += w * np.maximum(old - row, 0.0)
            if self.physical[d] is None:
                for k in model.consumers[i]:
                    placed[k] += w
            self.physical[d] = row.copy()
            self.last_touch[d] = t
            physical[i] = row

        expired = []
        rows = {d: i for i, d in enumerate(model.dataset_ids)}
        for d in due_expiry:
            if self.last_touch[d] == t:
                continue
            removals += sc.weight(self.datasets[d].size) * self.physical[d]
            if d in rows:
                physical[rows[d]] = 0.0
            expired.append(d)
            del self.physical[d], self.datasets[d]
            self.uses_left.pop(d, None)
            self.last_touch.pop(d, None)
        self.expired_ids.extend(expired)

        # (5) accounting on the physical placement; unplaced rows contribute nothing
        time_k, money_k = model.components(physical)
        tok, mok, _, budget = model.constraint_flags(physical)
        costs = model.job_costs(physical, strict=False)
        total = math.fsum(costs)
        traffic = Traffic(arrivals, removals, placed, generated)
        omega = sc.planner.omega
        prev = self.state
        nxt = prev.advance(traffic)
        drift = lyapunov_value(nxt) - lyapunov_value(prev)
        rhs = drift_bound_rhs(model, prev, physical, traffic, self.bounds, omega, "derived")
        rhs_printed = drift_bound_rhs(model, prev, physical, traffic, self.bounds, omega, "printed",
                                 coefficient_tensor(model))
        self.state = nxt

        for ds in fresh:
            self.datasets[ds.id] = ds
            self.physical[ds.id] = None
            self.uses_left[ds.id] = sc.intermediate_uses
            self.generated_ids.append(ds.id)

        jid = model.job_ids
        return SlotRecord(
            slot=t, executed=tuple(executed), blocked=tuple(blocked),
            generated=tuple(d.id for d in fresh), expired=tuple(expired),
            postponed=tuple(postponed), replanned=replan,
            dataset_ids=model.dataset_ids, sizes=tuple(float(s) for s in model.size),
            consumers=tuple(tuple(sorted(model.job_ids[k] for k in model.consumers[i]))
                            for i in range(model.M)),
            matrix=physical,
            job_time={jid[k]: float(time_k[k]) for k in range(K)},
            job_money={jid[k]: float(money_k[k]) for k in range(K)},
            job_cost={jid[k]: float(costs[k]) for k in range(K)},
            time_ok={jid[k]: bool(tok[k]) for k in range(K)},
            money_ok={jid[k]: bool(mok[k]) for k in range(K)},
            total_cost=total,
            storage_backlog=prev.storage_backlog, job_backlog=prev.job_backlog,
            lyapunov=lyapunov_value(prev), drift=drift, rhs=rhs, rhs_printed=rhs_printed,
            traffic=traffic, wall_time=wall)

    def run(self) -> SimulationTrace:
        self.bounds = self.sc.drift_bounds()
        trace = SimulationTrace(self.policy, self.tier_ids, self.job_ids, self.sc.planner.omega,
                                bounds=self.bounds)
        for t in range(self.sc.horizon):
            try:
                trace.records.append(self.step(t))
            except InfeasibleScenario as exc:
                exc.slot = t
                raise
        return trace


def run(scenario: Scenario, policy: str = "lnodp") -> SimulationTrace:
    return Engine(scenario, policy).run()


def static_plan(scenario: Scenario, policy: str = "lnodp") -> baselines.PolicyOutcome:
    """One-shot placement of the declared datasets from an empty plan.

    LNODP repeats its slot step (queues advancing with the placements made)
    until nothing is postponed or ``max_iterations`` steps have run.
    """
    model = scenario.model()
    plan = PlacementPlan.empty(model.dataset_ids, model.tier_ids)
    if policy == "brute":
        return baselines.brute_force(model, scenario.brute_constrained)
    if policy == "performance":
        return baselines.performance_policy(model)
    if policy == "economic":
        return baselines.economic_policy(model)
    if policy == "actgreedy":
        return baselines.act_greedy(model, plan, scenario.planner.inner_iterations)
    if policy != "lnodp":
        raise ValidationError(f"unknown policy {policy!r}", "policy")
    engine = Engine(scenario, policy)
    state = engine.state
    start = time.perf_counter()
    postponed: tuple = ()
    for it in range(scenario.planner.max_iterations):
        step = lnodp_step(model, state, plan, scenario.planner, 0)
        matrix = plan.matrix.copy()
        arrivals = np.zeros(model.N)
        placed_k = np.zeros(model.K)
        for i in range(model.M):
            row = step.plan.matrix[i]
            if abs(row.sum() - 1.0) <= TOL and not np.array_equal(row, matrix[i]):
                w = scenario.weight(model.size[i])
                arrivals += w * np.maximum(row - matrix[i], 0.0)
                if matrix[i].sum() == 0:
                    placed_k[model.consumers[i]] += w
                matrix[i] = row
        plan = model.plan(matrix)
        postponed = tuple(d for d in model.dataset_ids if not plan.placed(d)
                          and model.consumers[model.dataset_ids.index(d)])
        if not postponed or not step.postponed:
            break
        state = state.advance(Traffic(arrivals, np.zeros(model.N), placed_k, np.zeros(model.K)))
    wall = time.perf_counter() - start
    return baselines.outcome("lnodp", model, plan.matrix, wall, postponed)


def compare(scenario: Scenario, policies: Sequence[str] = POLICIES, static: bool = True) -> list:
    """One row per policy; a failing policy yields a row carrying its error."""
    from .scenario import scenario_hash  # scenario imports this module

    digest = scenario_hash(scenario)
    rows = []
    for policy in policies:
        try:
            if static:
                out = static_plan(scenario, policy)
                rows.append({"policy": policy, "outcome": out, "error": None,
                             "scenario_hash": digest})
            else:
                trace = run(scenario, policy)
                rows.append({"policy": policy, "trace": trace, "error": None,
                             "scenario_hash": digest})
        except TierplaceError as exc:
            rows.append({"policy": policy, "error": exc, "scenario_hash": digest})
    return rows
