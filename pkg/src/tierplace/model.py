"""Domain types and the per-job time, money and cost formulas.

Two evaluation paths live here on purpose:

* the plain functions (``transfer_time``, ``job_money``, ...) walk the
  plan entry by entry and are the readable reference;
* :class:`CostModel` precomputes arrays once per problem instance and is what
  the planner and the simulator call in their inner loops.

The test-suite checks that both agree.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (DegenerateMeasurement, MissingPlacement, ValidationError,
                     ZeroWorkloadSystem)

TOL = 1e-9

# executions per charging period (one month)
FREQUENCY_PRESETS = {
    "daily": 30.0,
    "semimonthly": 2.0,
    "monthly": 1.0,
    "quarterly": 1.0 / 3.0,
    "yearly": 1.0 / 12.0,
}

BUDGET_BASES = ("per_execution", "per_period")


@dataclass(frozen=True)
class StorageType:
    id: str
    name: str
    storage_price: float  # currency / GB / charging period
    read_price: float  # currency / GB read
    speed: float  # GB / s
    validity: float | None = None  # seconds without access before removal

    def __post_init__(self):
        if self.storage_price < 0 or self.read_price < 0:
            raise ValidationError(f"tier {self.id}: prices must be >= 0", f"tiers.{self.id}")
        if not self.speed > 0:
            raise ValidationError(f"tier {self.id}: speed must be > 0", f"tiers.{self.id}.speed")
        if self.validity is not None and not self.validity > 0:
            raise ValidationError(f"tier {self.id}: validity must be > 0",
                                  f"tiers.{self.id}.validity")


@dataclass(frozen=True)
class DataSet:
    id: str
    size: float  # GB
    consumers: frozenset = frozenset()
    origin: str = "input"

    def __post_init__(self):
        if not self.size > 0:
            raise ValidationError(f"dataset {self.id}: size must be > 0",
                                  f"datasets.{self.id}.size")
        if self.origin not in ("input", "intermediate"):
            raise ValidationError(f"dataset {self.id}: unknown origin {self.origin!r}",
                                  f"datasets.{self.id}.origin")
        object.__setattr__(self, "consumers", frozenset(self.consumers))


@dataclass(frozen=True)
class JobProfile:
    id: str
    workload: float  # GFLOP
    alpha: float
    nodes: int
    frequency: float  # executions per charging period
    desired_time: float
    desired_money: float
    time_deadline: float
    money_budget: float
    w_time: float
    w_money: float
    inputs: tuple = ()
    intermediate_size: float = 0.0

    def __post_init__(self):
        path = f"jobs.{self.id}"
        object.__setattr__(self, "inputs", tuple(self.inputs))
        if abs(self.w_time + self.w_money - 1.0) > TOL:
            raise ValidationError(f"job {self.id}: w_time + w_money must equal 1",
                                  path + ".w_time")
        if not (0.0 <= self.w_time <= 1.0 and 0.0 <= self.w_money <= 1.0):
            raise ValidationError(f"job {self.id}: weights must lie in [0, 1]", path + ".w_time")
        if not (0.0 <= self.alpha <= 1.0):
            raise ValidationError(f"job {self.id}: alpha must lie in [0, 1]", path + ".alpha")
        if int(self.nodes) != self.nodes or self.nodes < 1:
            raise ValidationError(f"job {self.id}: nodes must be a positive integer",
                                  path + ".nodes")
        for name in ("frequency", "desired_time", "desired_money"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"job {self.id}: {name} must be > 0", f"{path}.{name}")
        if self.workload < 0:
            raise ValidationError(f"job {self.id}: workload must be >= 0", path + ".workload")
        if self.intermediate_size < 0:
            raise ValidationError(f"job {self.id}: intermediate_size must be >= 0",
                                  path + ".intermediate_size")


@dataclass(frozen=True)
class EnvironmentParams:
    init_time_per_node: float  # AIT, seconds
    compute_speed: float  # CSP, GFLOPS per node
    vm_price: float  # VMP, currency per node-second

    def __post_init__(self):
        for name in ("init_time_per_node", "compute_speed", "vm_price"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"env.{name} must be > 0", f"env.{name}")


@dataclass(frozen=True)
class PlacementPlan:
    """Fraction of each dataset (rows) stored on each tier (columns)."""

    dataset_ids: tuple
    tier_ids: tuple
    matrix: np.ndarray = field(compare=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float).reshape(len(self.dataset_ids), len(self.tier_ids))
        if np.any(m < -TOL) or np.any(m > 1 + TOL):
            raise ValidationError("plan entries must lie in [0, 1]", "plan")
        sums = m.sum(axis=1)
        bad = ~((np.abs(sums) <= TOL) | (np.abs(sums - 1.0) <= TOL))
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise ValidationError(
                f"row {self.dataset_ids[i]} sums to {sums[i]!r}, expected 0 or 1", "plan")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "dataset_ids", tuple(self.dataset_ids))
        object.__setattr__(self, "tier_ids", tuple(self.tier_ids))
        object.__setattr__(self, "_row", {d: i for i, d in enumerate(self.dataset_ids)})
        object.__setattr__(self, "_col", {t: j for j, t in enumerate(self.tier_ids)})

    def __eq__(self, other):
        return (isinstance(other, PlacementPlan) and self.dataset_ids == other.dataset_ids
                and self.tier_ids == other.tier_ids
                and np.array_equal(self.matrix, other.matrix))

    def __hash__(self):
        return hash((self.dataset_ids, self.tier_ids, self.matrix.tobytes()))

    @classmethod
    def empty(cls, dataset_ids: Sequence[str], tier_ids: Sequence[str]) -> "PlacementPlan":
        return cls(tuple(dataset_ids), tuple(tier_ids),
                   np.zeros((len(dataset_ids), len(tier_ids))))

    @classmethod
    def from_assignment(cls, dataset_ids, tier_ids, assignment) -> "PlacementPlan":
        """Whole-tier plan; ``assignment[i]`` is the tier index of dataset ``i``."""
        m = np.zeros((len(dataset_ids), len(tier_ids)))
        for i, j in enumerate(assignment):
            m[i, j] = 1.0
        return cls(tuple(dataset_ids), tuple(tier_ids), m)

    def has(self, dataset_id: str) -> bool:
        return dataset_id in self._row

    def index(self, dataset_id: str) -> int:
        return self._row[dataset_id]

    def tier_index(self, tier_id: str) -> int:
        return self._col[tier_id]

    def entry(self, dataset_id: str, tier_id: str) -> float:
        return float(self.matrix[self._row[dataset_id], self._col[tier_id]])

    def row(self, dataset_id: str) -> np.ndarray:
        return self.matrix[self._row[dataset_id]]

    def placed(self, dataset_id: str) -> bool:
        return abs(float(self.row(dataset_id).sum()) - 1.0) <= TOL

    def with_row(self, dataset_id: str, row) -> "PlacementPlan":
        m = self.matrix.copy()
        m[self._row[dataset_id]] = row
        return PlacementPlan(self.dataset_ids, self.tier_ids, m)

    def with_matrix(self, matrix) -> "PlacementPlan":
        return PlacementPlan(self.dataset_ids, self.tier_ids, matrix)

    def as_dict(self) -> dict:
        """{dataset: {tier: fraction}} listing nonzero entries only."""
        out = {}
        for i, d in enumerate(self.dataset_ids):
            out[d] = {t: float(self.matrix[i, j]) for j, t in enumerate(self.tier_ids)
                      if self.matrix[i, j] != 0.0}
        return out


def frequency_value(freq) -> float:
    if isinstance(freq, str):
        try:
            return FREQUENCY_PRESETS[freq]
        except KeyError:
            raise ValidationError(f"unknown frequency preset {freq!r}", "frequency") from None
    return float(freq)


def estimate_alpha(t1: float, m1: float, t2: float, m2: float) -> float:
    """Parallel fraction from two timed runs on ``m1`` and ``m2`` nodes."""
    if m1 == m2:
        raise DegenerateMeasurement("node counts must differ")
    if not (t1 > 0 and t2 > 0):
        raise DegenerateMeasurement("run times must be positive")
    num = m2 * m1 * (t2 - t1)
    den = num + m1 * t1 - m2 * t2
    if den == 0:
        raise DegenerateMeasurement("measurements give a zero denominator")
    alpha = num / den
    if alpha < -TOL or alpha > 1 + TOL:
        raise DegenerateMeasurement(f"estimated alpha {alpha!r} outside [0, 1]")
    return min(max(alpha, 0.0), 1.0)


def execution_time(job: JobProfile, env: EnvironmentParams) -> float:
    return (job.alpha / job.nodes + (1.0 - job.alpha)) * job.workload / env.compute_speed


def init_time(job: JobProfile, env: EnvironmentParams) -> float:
    return job.nodes * env.init_time_per_node


def _tier_map(tiers):
    return {t.id: t for t in tiers}


def _input_rows(job, plan, strict=True):
    for d in job.inputs:
        if not plan.has(d):
            raise MissingPlacement(f"job {job.id}: dataset {d} has no plan row", d)
        if strict and not plan.placed(d):
            raise MissingPlacement(f"job {job.id}: dataset {d} is not placed", d)
        yield d


def transfer_time(job: JobProfile, plan: PlacementPlan, datasets: Mapping[str, DataSet],
                  tiers: Sequence[StorageType]) -> float:
    by_id = _tier_map(tiers)
    total = 0.0
    for d in _input_rows(job, plan):
        size = datasets[d].size
        for t in plan.tier_ids:
            p = plan.entry(d, t)
            if p:
                total += size / by_id[t].speed * p
    return total


def job_time(job, plan, datasets, tiers, env) -> float:
    return (init_time(job, env) + transfer_time(job, plan, datasets, tiers)
            + execution_time(job, env))


def exec_money(job, plan, datasets, tiers, env) -> float:
    busy = job_time(job, plan, datasets, tiers, env) - init_time(job, env)
    return env.vm_price * job.nodes * busy


def storage_share(job: JobProfile, all_jobs: Iterable[JobProfile]) -> float:
    """Fraction of the period storage bill charged to one execution of ``job``."""
    denom = sum(j.workload * j.frequency for j in all_jobs)
    if denom <= 0:
        raise ZeroWorkloadSystem("sum of workload x frequency over jobs is zero")
    return job.workload / denom


def storage_money(job, plan, all_jobs, datasets, tiers) -> float:
    share = storage_share(job, all_jobs)
    by_id = _tier_map(tiers)
    total = 0.0
    for d in _input_rows(job, plan):
        size = datasets[d].size
        for t in plan.tier_ids:
            total += by_id[t].storage_price * size * plan.entry(d, t)
    return share * total


def access_money(job, plan, datasets, tiers) -> float:
    by_id = _tier_map(tiers)
    total = 0.0
    for d in _input_rows(job, plan):
        size = datasets[d].size
        for t in plan.tier_ids:
            total += by_id[t].read_price * size * plan.entry(d, t)
    return total


def job_money(job, plan, all_jobs, datasets, tiers, env) -> float:
    return (exec_money(job, plan, datasets, tiers, env)
            + storage_money(job, plan, all_jobs, datasets, tiers)
            + access_money(job, plan, datasets, tiers))


def job_cost(job, plan, all_jobs, datasets, tiers, env) -> float:
    # frequency scales the money term only
    money = job_money(job, plan, all_jobs, datasets, tiers, env)
    time = job_time(job, plan, datasets, tiers, env)
    return (job.w_money * (money / job.desired_money) * job.frequency
            + job.w_time * (time / job.desired_time))


def total_cost(jobs, plan, datasets, tiers, env) -> float:
    jobs = list(jobs)
    return math.fsum(job_cost(j, plan, jobs, datasets, tiers, env) for j in jobs)


@dataclass(frozen=True)
class ConstraintReport:
    job: str
    time_ok: bool
    money_ok: bool
    time_value: float
    money_value: float

    @property
    def ok(self) -> bool:
        return self.time_ok and self.money_ok


def budget_value(job: JobProfile, money: float, budget_basis: str = "per_execution") -> float:
    if budget_basis == "per_execution":
        return money
    if budget_basis == "per_period":
        return job.frequency * money
    raise ValidationError(f"unknown budget basis {budget_basis!r}", "budget_basis")


def check_constraints(job, plan, all_jobs, datasets, tiers, env,
                      budget_basis: str = "per_execution") -> ConstraintReport:
    t = job_time(job, plan, datasets, tiers, env)
    m = budget_value(job, job_money(job, plan, all_jobs, datasets, tiers, env), budget_basis)
    return ConstraintReport(job.id, t <= job.time_deadline + TOL, m <= job.money_budget + TOL, t, m)


class CostModel:
    """Array form of the cost formulas for one fixed problem instance.

    Rows of every plan passed in follow ``dataset_ids``; columns follow
    ``tiers``. ``jobs`` inputs must all name datasets of the instance.
    """

    def __init__(self, datasets: Sequence[DataSet], jobs: Sequence[JobProfile],
                 tiers: Sequence[StorageType], env: EnvironmentParams,
                 budget_basis: str = "per_execution"):
        if budget_basis not in BUDGET_BASES:
            raise ValidationError(f"unknown budget basis {budget_basis!r}", "budget_basis")
        self.datasets = tuple(datasets)
        self.jobs = tuple(jobs)
        self.tiers = tuple(tiers)
        self.env = env
        self.budget_basis = budget_basis
        self.dataset_ids = tuple(d.id for d in self.datasets)
        self.tier_ids = tuple(t.id for t in self.tiers)
        self.job_ids = tuple(j.id for j in self.jobs)
        row = {d: i for i, d in enumerate(self.dataset_ids)}
        self.M, self.N, self.K = len(self.datasets), len(self.tiers), len(self.jobs)

        self.size = np.array([d.size for d in self.datasets], dtype=float)
        self.speed = np.array([t.speed for t in self.tiers], dtype=float)
        self.sp = np.array([t.storage_price for t in self.tiers], dtype=float)
        self.rp = np.array([t.read_price for t in self.tiers], dtype=float)

        self.job_inputs = []
        self.consumers = [[] for _ in range(self.M)]
        for k, job in enumerate(self.jobs):
            idx = []
            for d in job.inputs:
                if d not in row:
                    raise MissingPlacement(f"job {job.id}: dataset {d} unknown", d)
                idx.append(row[d])
                self.consumers[row[d]].append(k)
            self.job_inputs.append(np.array(idx, dtype=int))
        self.incidence = np.zeros((self.K, self.M))
        for k, idx in enumerate(self.job_inputs):
            self.incidence[k, idx] = 1.0

        f = np.array([j.frequency for j in self.jobs], dtype=float)
        wl = np.array([j.workload for j in self.jobs], dtype=float)
        self.freq = f
        self.nodes = np.array([j.nodes for j in self.jobs], dtype=float)
        self.dt = np.array([j.desired_time for j in self.jobs], dtype=float)
        self.dm = np.array([j.desired_money for j in self.jobs], dtype=float)
        self.tdl = np.array([j.time_deadline for j in self.jobs], dtype=float)
        self.mb = np.array([j.money_budget for j in self.jobs], dtype=float)
        self.wt = np.array([j.w_time for j in self.jobs], dtype=float)
        self.wm = np.array([j.w_money for j in self.jobs], dtype=float)
        denom = float(np.sum(wl * f))
        if self.K and denom <= 0:
            raise ZeroWorkloadSystem("sum of workload x frequency over jobs is zero")
        self.share = wl / denom if self.K else wl
        self.et = np.array([execution_time(j, env) for j in self.jobs], dtype=float)
        self.init = self.nodes * env.init_time_per_node
        self.vmn = env.vm_price * self.nodes
        self.budget_scale = f if budget_basis == "per_period" else np.ones(self.K)

        # per unit of p_ij: transfer seconds, stored GB-price, read price
        self.dTT = self.size[:, None] / self.speed[None, :]
        self.dSP = self.size[:, None] * self.sp[None, :]
        self.dRP = self.size[:, None] * self.rp[None, :]

    # -- aggregates -----------------------------------------------------------
    def row_terms(self, matrix):
        P = np.asarray(matrix, dtype=float)
        return ((self.dTT * P).sum(axis=1), (self.dSP * P).sum(axis=1),
                (self.dRP * P).sum(axis=1))

    def components(self, matrix):
        """(time, money) per job; unplaced rows contribute nothing."""
        rT, rS, rR = self.row_terms(matrix)
        B = self.incidence
        dtt, ds, da = B @ rT, B @ rS, B @ rR
        time = self.init + dtt + self.et
        money = self.vmn * (dtt + self.et) + self.share * ds + da
        return time, money

    def unplaced_jobs(self, matrix) -> np.ndarray:
        sums = np.asarray(matrix).sum(axis=1)
        missing = (np.abs(sums - 1.0) > TOL).astype(float)
        return (self.incidence @ missing) > 0

    def job_costs(self, matrix, strict: bool = True) -> np.ndarray:
        time, money = self.components(matrix)
        cost = self.wm * (money / self.dm) * self.freq + self.wt * (time / self.dt)
        if strict:
            cost = np.where(self.unplaced_jobs(matrix), np.inf, cost)
        return cost

    def total_cost(self, matrix, strict: bool = True) -> float:
        return math.fsum(self.job_costs(matrix, strict))

    def constraint_flags(self, matrix):
        time, money = self.components(matrix)
        budget = self.budget_scale * money
        return time <= self.tdl + TOL, budget <= self.mb + TOL, time, budget

    def reports(self, matrix) -> list:
        tok, mok, time, budget = self.constraint_flags(matrix)
        return [ConstraintReport(self.job_ids[k], bool(tok[k]), bool(mok[k]),
                                 float(time[k]), float(budget[k])) for k in range(self.K)]

    def single_tier_row_cost(self) -> np.ndarray:
        """Cost contribution of dataset i placed wholly on tier j (M x N)."""
        out = np.zeros((self.M, self.N))
        for i in range(self.M):
            for k in self.consumers[i]:
                money = self.vmn[k] * self.dTT[i] + self.share[k] * self.dSP[i] + self.dRP[i]
                out[i] += (self.wm[k] * self.freq[k] * money / self.dm[k]
                           + self.wt[k] * self.dTT[i] / self.dt[k])
        return out

    def base_cost(self) -> float:
        """Cost of every job with no input data at all."""
        time = self.init + self.et
        money = self.vmn * self.et
        return math.fsum(self.wm * (money / self.dm) * self.freq + self.wt * (time / self.dt))

    def plan(self, matrix) -> PlacementPlan:
        return PlacementPlan(self.dataset_ids, self.tier_ids, matrix)


def with_inputs(job: JobProfile, inputs) -> JobProfile:
    return replace(job, inputs=tuple(inputs))
