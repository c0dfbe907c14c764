"""Seeded scenario builders shared by the tests."""
from __future__ import annotations

import numpy as np

from tierplace.model import FREQUENCY_PRESETS, DataSet, EnvironmentParams, JobProfile
from tierplace.planner import PlannerConfig
from tierplace.scenario import TABLE2_TIERS
from tierplace.simulator import Scenario

ENV = EnvironmentParams(init_time_per_node=15.0, compute_speed=1.0, vm_price=1e-5)
FREQS = tuple(FREQUENCY_PRESETS.values())


def loose_job(jid, inputs, rng, **kw):
    wt = float(rng.choice([0.0, 0.5, 0.7, 0.9, 1.0]))
    args = dict(workload=float(rng.uniform(500, 5000)), alpha=float(rng.uniform(0.5, 0.95)),
                nodes=int(rng.integers(1, 6)), frequency=float(rng.choice(FREQS)),
                desired_time=float(rng.uniform(500, 3000)),
                desired_money=float(rng.uniform(0.5, 5)),
                time_deadline=1e9, money_budget=1e9, w_time=wt, w_money=1.0 - wt,
                inputs=tuple(inputs))
    args.update(kw)
    return JobProfile(jid, **args)


def random_scenario(seed, max_datasets=6, max_jobs=5, horizon=1, **sim):
    rng = np.random.default_rng(seed)
    M = int(rng.integers(1, max_datasets + 1))
    K = int(rng.integers(1, max_jobs + 1))
    datasets = [DataSet(f"d{i}", float(rng.uniform(1, 10))) for i in range(M)]
    jobs = []
    for k in range(K):
        n = int(rng.integers(1, min(3, M) + 1))
        picks = sorted(rng.choice(M, size=n, replace=False))
        jobs.append(loose_job(f"j{k}", [f"d{i}" for i in picks], rng))
    return Scenario(TABLE2_TIERS, tuple(datasets), tuple(jobs), ENV, PlannerConfig(),
                    horizon=horizon, seed=seed, **sim)


def mkjob(jid="j0", inputs=(), **kw):
    """Job with harmless defaults; any field can be overridden."""
    args = dict(workload=1000.0, alpha=0.5, nodes=2, frequency=1.0, desired_time=1000.0,
                desired_money=1.0, time_deadline=1e9, money_budget=1e9, w_time=0.5,
                w_money=0.5, inputs=tuple(inputs))
    args.update(kw)
    if "w_time" in kw and "w_money" not in kw:
        args["w_money"] = 1.0 - kw["w_time"]
    return JobProfile(jid, **args)


# A Wordcount-sized job on 3 nodes: ET = (0.9/3 + 0.1) * 3250 / 1 = 1300 s.
WORDCOUNT = dict(workload=3250.0, alpha=0.9, nodes=3, desired_time=1200.0, desired_money=1.0)
DBLP_SIZE = 6.04


def tight_scenario(w_time, size=DBLP_SIZE, deadline=1420.0, budget=1.0, frequency=1 / 12):
    """One yearly job whose single tiers each break a hard constraint on the preset."""
    job = JobProfile("wordcount", frequency=frequency, time_deadline=deadline,
                     money_budget=budget, w_time=w_time, w_money=1.0 - w_time,
                     inputs=("dblp",), **WORDCOUNT)
    return Scenario(TABLE2_TIERS, (DataSet("dblp", size),), (job,), ENV, PlannerConfig())


def loose_single_job(w_time, frequency, size=DBLP_SIZE):
    job = JobProfile("wordcount", frequency=frequency, time_deadline=2000.0, money_budget=10.0,
                     w_time=w_time, w_money=1.0 - w_time, inputs=("dblp",), **WORDCOUNT)
    return Scenario(TABLE2_TIERS, (DataSet("dblp", size),), (job,), ENV, PlannerConfig())


def validity_tiers(days):
    """Preset prices and speeds with a retention period per tier (in days)."""
    from dataclasses import replace
    return tuple(replace(t, validity=d * 86400.0) for t, d in zip(TABLE2_TIERS, days))


def dynamic_scenario(seed=0, horizon=200, validity_days=(60, 60, 90, 180), **sim):
    """Three jobs (daily, weekly, semimonthly) that each emit intermediate data."""
    rng = np.random.default_rng(seed)
    datasets = tuple(DataSet(f"d{i}", float(rng.uniform(1, 8))) for i in range(4))
    jobs = (
        loose_job("daily", ["d0", "d1"], rng, frequency=30.0, intermediate_size=0.5),
        loose_job("weekly", ["d1", "d2"], rng, frequency=4.0, intermediate_size=2.0),
        loose_job("semimonthly", ["d3"], rng, frequency=2.0, intermediate_size=1.0),
    )
    return Scenario(validity_tiers(validity_days), datasets, jobs, ENV, PlannerConfig(),
                    horizon=horizon, seed=seed, **sim)
