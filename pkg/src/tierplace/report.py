"""Deterministic CSV/JSON writers for plans, traces and comparisons.

Floats are written with ``repr`` (shortest round-tripping form) so that every
cost can be recomputed from the emitted plan to machine precision. Wall
times live in a separate ``timings.csv``; every other file is byte-identical
across repeated runs.
"""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .baselines import PolicyOutcome
from .model import CostModel
from .simulator import SimulationTrace


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    if x is None:
        return ""
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else fmt(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def plan_json(dataset_ids, sizes, consumers, matrix) -> str:
    """Compact plan column: every dataset with its size, readers and tier fractions."""
    rows = [{"id": d, "size": float(s), "consumers": list(c), "row": [float(v) for v in r]}
            for d, s, c, r in zip(dataset_ids, sizes, consumers, np.asarray(matrix))]
    return json.dumps(rows, separators=(",", ":"))


def model_plan_json(model: CostModel, matrix) -> str:
    cons = [sorted(model.job_ids[k] for k in model.consumers[i]) for i in range(model.M)]
    return plan_json(model.dataset_ids, model.size, cons, matrix)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path: Path, header, rows) -> None:
    Path(path).write_text(csv_text(header, rows))


def _joined(ids) -> str:
    return ";".join(ids)


# -- static outcomes ----------------------------------------------------------
COMPARISON_HEADER = ["scenario_hash", "w_time", "frequency", "policy", "status", "total_cost",
                     "time_ok", "money_ok", "max_time", "max_money", "postponed", "error", "plan"]


def comparison_row(model: CostModel | None, row: dict, w_time=None, frequency=None) -> list:
    if row.get("error") is not None:
        exc = row["error"]
        return [row["scenario_hash"], w_time, frequency, row["policy"], exc.code, math.nan,
                None, None, None, None, "", str(exc), ""]
    out: PolicyOutcome = row["outcome"]
    times = [r.time_value for r in out.reports] or [0.0]
    money = [r.money_value for r in out.reports] or [0.0]
    return [row["scenario_hash"], w_time, frequency, row["policy"], "ok", out.total_cost,
            out.time_ok, out.money_ok, max(times), max(money), _joined(out.postponed), "",
            model_plan_json(model, out.plan.matrix)]


JOBS_HEADER = ["w_time", "frequency", "policy", "job", "time", "money", "cost",
               "time_deadline", "money_budget", "time_ok", "money_ok"]


def job_rows(model: CostModel, row: dict, w_time=None, frequency=None) -> list:
    if row.get("error") is not None:
        return []
    out: PolicyOutcome = row["outcome"]
    costs = model.job_costs(out.plan.matrix, strict=False)
    return [[w_time, frequency, row["policy"], r.job, r.time_value, r.money_value,
             float(costs[k]), model.jobs[k].time_deadline, model.jobs[k].money_budget,
             r.time_ok, r.money_ok] for k, r in enumerate(out.reports)]


def timing_rows(rows: list, w_time=None, frequency=None) -> list:
    out = []
    for row in rows:
        wall = row["outcome"].wall_time if row.get("outcome") is not None else math.nan
        out.append([w_time, frequency, row["policy"], wall])
    return out


TIMINGS_HEADER = ["w_time", "frequency", "policy", "wall_time_s"]


# -- traces -------------------------------------------------------------------
def trace_header(trace: SimulationTrace) -> list:
    tiers, jobs = trace.tier_ids, trace.job_ids
    cols = ["slot", "executed", "blocked", "generated", "expired", "postponed", "replanned",
            "total_cost", "lyapunov", "drift", "rhs", "rhs_printed"]
    cols += [f"S_{t}" for t in tiers] + [f"J_{k}" for k in jobs]
    cols += [f"A_{t}" for t in tiers] + [f"R_{t}" for t in tiers]
    cols += [f"P_{k}" for k in jobs] + [f"G_{k}" for k in jobs]
    for k in jobs:
        cols += [f"time_{k}", f"money_{k}", f"cost_{k}", f"time_ok_{k}", f"money_ok_{k}"]
    return cols + ["plan"]


def trace_rows(trace: SimulationTrace):
    for r in trace.records:
        tr = r.traffic
        row = [r.slot, _joined(r.executed), _joined(r.blocked), _joined(r.generated),
               _joined(r.expired), _joined(r.postponed), r.replanned, r.total_cost,
               r.lyapunov, r.drift, r.rhs, r.rhs_printed]
        row += list(map(float, r.storage_backlog)) + list(map(float, r.job_backlog))
        row += list(map(float, tr.arrivals)) + list(map(float, tr.removals))
        row += list(map(float, tr.placed)) + list(map(float, tr.generated))
        for k in trace.job_ids:
            row += [r.job_time[k], r.job_money[k], r.job_cost[k], r.time_ok[k], r.money_ok[k]]
        row.append(plan_json(r.dataset_ids, r.sizes, r.consumers, r.matrix))
        yield row


def write_trace(path: Path, trace: SimulationTrace) -> None:
    write_csv(path, trace_header(trace), trace_rows(trace))


def write_trace_timings(path: Path, traces: list) -> None:
    rows = [[t.policy, r.slot, r.wall_time] for t in traces for r in t.records]
    write_csv(path, ["policy", "slot", "wall_time_s"], rows)


SIM_COMPARISON_HEADER = ["scenario_hash", "policy", "status", "time_avg_cost",
                         "time_avg_backlog", "final_total_cost", "all_time_ok", "all_money_ok",
                         "postponed_slots", "error", "plan"]


def sim_comparison_row(row: dict) -> list:
    if row.get("error") is not None:
        exc = row["error"]
        return [row["scenario_hash"], row["policy"], exc.code, math.nan, math.nan, math.nan,
                None, None, None, str(exc), ""]
    tr: SimulationTrace = row["trace"]
    s = tr.summary()
    last = tr.records[-1]
    return [row["scenario_hash"], row["policy"], "ok", s["time_avg_cost"],
            s["time_avg_backlog"], s["final_total_cost"], s["all_time_ok"], s["all_money_ok"],
            s["postponed_slots"], "",
            plan_json(last.dataset_ids, last.sizes, last.consumers, last.matrix)]
