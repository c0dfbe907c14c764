"""Storage/job backlogs, the quadratic Lyapunov function and drift-plus-penalty terms.

Backlogs are kept in *queue units*: gigabytes by default (each dataset weighs
its size) or plain plan fractions (each dataset weighs 1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .model import CostModel, EnvironmentParams, JobProfile, execution_time

QUEUE_UNITS = ("GB", "fraction")
PRESSURE_FORMS = ("derived", "printed")


def update_storage_queue(backlog: float, removals: float, arrivals: float) -> float:
    return max(backlog - removals, 0.0) + arrivals


def update_job_queue(backlog: float, placed: float, generated: float) -> float:
    return max(backlog - placed, 0.0) + generated


@dataclass(frozen=True)
class PenaltyWeight:
    omega: float = 1.0

    def __post_init__(self):
        if not self.omega >= 0:
            raise ValidationError("omega must be >= 0", "planner.omega")

    def __float__(self):
        return float(self.omega)


@dataclass(frozen=True)
class Traffic:
    """What moved through the queues during one slot, in queue units."""

    arrivals: np.ndarray  # per tier
    removals: np.ndarray  # per tier
    placed: np.ndarray  # per job
    generated: np.ndarray  # per job

    @classmethod
    def zero(cls, n_tiers: int, n_jobs: int) -> "Traffic":
        return cls(np.zeros(n_tiers), np.zeros(n_tiers), np.zeros(n_jobs), np.zeros(n_jobs))


@dataclass(frozen=True)
class QueueState:
    storage_backlog: np.ndarray  # S_j per tier
    job_backlog: np.ndarray  # J_k per job
    slot: int = 0

    def __post_init__(self):
        s = np.array(self.storage_backlog, dtype=float)
        j = np.array(self.job_backlog, dtype=float)
        if np.any(s < 0) or np.any(j < 0):
            raise ValidationError("backlogs must be >= 0", "queue")
        s.setflags(write=False)
        j.setflags(write=False)
        object.__setattr__(self, "storage_backlog", s)
        object.__setattr__(self, "job_backlog", j)

    @classmethod
    def zero(cls, n_tiers: int, n_jobs: int) -> "QueueState":
        return cls(np.zeros(n_tiers), np.zeros(n_jobs), 0)

    def advance(self, traffic: Traffic) -> "QueueState":
        s = np.maximum(self.storage_backlog - traffic.removals, 0.0) + traffic.arrivals
        j = np.maximum(self.job_backlog - traffic.placed, 0.0) + traffic.generated
        return QueueState(s, j, self.slot + 1)

    def total(self) -> float:
        return float(self.storage_backlog.sum() + self.job_backlog.sum())


def lyapunov_value(state: QueueState) -> float:
    return 0.5 * (math.fsum(state.storage_backlog ** 2) + math.fsum(state.job_backlog ** 2))


@dataclass(frozen=True)
class DriftBounds:
    d_max: float  # per-slot arrivals into any tier
    r_max: float  # per-slot removals from any tier
    data_max: float  # per-slot placed volume for any job
    g_max: float  # per-slot generation for any job

    def __post_init__(self):
        if min(self.d_max, self.r_max, self.data_max, self.g_max) < 0:
            raise ValidationError("drift bounds must be >= 0", "bounds")

    def constant(self, n_tiers: int, n_jobs: int) -> float:
        return (n_tiers / 2.0 * (self.d_max ** 2 + self.r_max ** 2)
                + n_jobs / 2.0 * (self.g_max ** 2 + self.data_max ** 2))

    def admits(self, traffic: Traffic, tol: float = 1e-9) -> bool:
        def ok(x, bound):
            return x.size == 0 or float(np.max(x)) <= bound + tol
        return (ok(traffic.arrivals, self.d_max) and ok(traffic.removals, self.r_max)
                and ok(traffic.placed, self.data_max) and ok(traffic.generated, self.g_max))

    @classmethod
    def from_traffic(cls, history) -> "DriftBounds":
        """Smallest bounds that every recorded slot respects."""
        d = r = data = g = 0.0
        for tr in history:
            d = max(d, float(np.max(tr.arrivals, initial=0.0)))
            r = max(r, float(np.max(tr.removals, initial=0.0)))
            data = max(data, float(np.max(tr.placed, initial=0.0)))
            g = max(g, float(np.max(tr.generated, initial=0.0)))
        return cls(d, r, data, g)


def cost_constant_Ck(job: JobProfile, env: EnvironmentParams) -> float:
    """Plan-independent part of the per-period cost of ``job``."""
    et = execution_time(job, env)
    return ((job.w_time * job.nodes * env.init_time_per_node / job.desired_time
             + (job.w_time / job.desired_time
                + job.w_money * env.vm_price * job.nodes / job.desired_money) * et)
            * job.frequency)


def placement_coefficient(size: float, speed: float, storage_price: float, read_price: float,
                          job: JobProfile, workload_frequency_sum: float,
                          env: EnvironmentParams) -> float:
    """Cost per unit fraction of a dataset of ``size`` GB on one tier, for one job."""
    per_gb = (job.w_time / (speed * job.desired_time)
              + job.w_money * env.vm_price * job.nodes / (speed * job.desired_money)
              + job.w_money * read_price / job.desired_money
              + job.w_money * job.workload * storage_price
              / (workload_frequency_sum * job.desired_money))
    return per_gb * size * job.frequency


def coefficient_tensor(model: CostModel) -> np.ndarray:
    """C'[k, i, j], zero where job k does not read dataset i."""
    out = np.zeros((model.K, model.M, model.N))
    wf = float(np.sum(np.array([j.workload * j.frequency for j in model.jobs])))
    for k, job in enumerate(model.jobs):
        for i in model.job_inputs[k]:
            size = model.size[i]
            for j, tier in enumerate(model.tiers):
                out[k, i, j] = placement_coefficient(size, tier.speed, tier.storage_price,
                                                     tier.read_price, job, wf, model.env)
    return out


def queue_weights(model: CostModel, queue_unit: str = "GB") -> np.ndarray:
    if queue_unit == "GB":
        return model.size.copy()
    if queue_unit == "fraction":
        return np.ones(model.M)
    raise ValidationError(f"unknown queue unit {queue_unit!r}", "sim.queue_unit")


def pressure_matrix(model: CostModel, state: QueueState, omega: float,
                    form: str = "derived", queue_unit: str = "GB",
                    coeff: np.ndarray | None = None) -> np.ndarray:
    """Accept/postpone signal for every (dataset, tier); place only where <= 0.

    ``printed``: sum_k (J_k + omega C'_ijk) - S_j
    ``derived``: w_i (S_j - sum_k J_k) + omega sum_k C'_ijk, the coefficient
    of p_ij in the drift-plus-penalty bound obtained from the queue updates.
    """
    if coeff is None:
        coeff = coefficient_tensor(model)
    S = state.storage_backlog
    J = state.job_backlog
    penalty = coeff.sum(axis=0)  # M x N
    jsum = model.incidence.T @ J  # per dataset, sum over its consumers
    if form == "printed":
        return jsum[:, None] + omega * penalty - S[None, :]
    if form == "derived":
        w = queue_weights(model, queue_unit)
        return w[:, None] * (S[None, :] - jsum[:, None]) + omega * penalty
    raise ValidationError(f"unknown pressure form {form!r}", "planner.pressure_form")


def placement_pressure(model: CostModel, i: int, j: int, state: QueueState, omega: float,
                       coeff: np.ndarray | None = None) -> float:
    """sum over consumers k of dataset i of (J_k + omega C'_ijk), minus S_j."""
    if coeff is None:
        coeff = coefficient_tensor(model)
    total = 0.0
    for k in model.consumers[i]:
        total += state.job_backlog[k] + omega * coeff[k, i, j]
    return total - float(state.storage_backlog[j])


def realized_drift(state: QueueState, traffic: Traffic) -> float:
    return lyapunov_value(state.advance(traffic)) - lyapunov_value(state)


def drift_bound_rhs(model: CostModel, state: QueueState, matrix, traffic: Traffic,
                    bounds: DriftBounds, omega: float, form: str = "derived",
                    coeff: np.ndarray | None = None) -> float:
    """Upper bound on drift + omega * cost for one slot.

    ``printed`` evaluates the bound exactly as printed with the per-period
    constants C_k and C'_ijk. ``derived`` re-derives the drift part from the
    queue updates (S_j (A_j - r_j) + J_k (G_k - P_k)) and adds the exact
    penalty omega * total_cost.
    """
    L = bounds.constant(model.N, model.K)
    S, J = state.storage_backlog, state.job_backlog
    P = np.asarray(matrix, dtype=float)
    if form == "printed":
        if coeff is None:
            coeff = coefficient_tensor(model)
        Ck = math.fsum(cost_constant_Ck(job, model.env) for job in model.jobs)
        total = L + omega * Ck + float(S @ traffic.removals) - float(J @ traffic.generated)
        B = model.incidence  # K x M
        # sum_j sum_k sum_{i in data_k} (J_k - S_j + omega C'_ijk) p_ij
        total += float(np.einsum("km,mn,k->", B, P, J))
        total -= float(np.einsum("km,mn,n->", B, P, S))
        total += omega * float(np.einsum("kmn,mn->", coeff, P))
        return total
    if form == "derived":
        drift = (float(S @ (traffic.arrivals - traffic.removals))
                 + float(J @ (traffic.generated - traffic.placed)))
        return L + omega * model.total_cost(P, strict=False) + drift
    raise ValidationError(f"unknown bound form {form!r}", "bound_form")
