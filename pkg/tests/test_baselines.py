import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenarios import ENV, mkjob, random_scenario, tight_scenario
from tierplace.baselines import (act_greedy, brute_force, constraint_summary, economic_policy,
                                 performance_policy)
from tierplace.errors import SearchSpaceTooLarge
from tierplace.model import CostModel, DataSet, StorageType
from tierplace.scenario import TABLE2_TIERS


def _enumerate(model, constrained=False):
    """Oracle: evaluate every whole-tier plan through CostModel.total_cost."""
    rows = [i for i in range(model.M) if model.consumers[i]]
    best, arg = math.inf, None
    for assign in itertools.product(range(model.N), repeat=len(rows)):
        m = np.zeros((model.M, model.N))
        m[rows, list(assign)] = 1.0
        if constrained:
            tok, mok, _, _ = model.constraint_flags(m)
            if not (tok.all() and mok.all()):
                continue
        c = model.total_cost(m, strict=False)
        if c < best:
            best, arg = c, m
    return best, arg


def test_performance_picks_fastest():
    tiers = [StorageType(f"t{j}", "", 0.01, 0.0, s) for j, s in enumerate([1, 2, 0.5, 0.1])]
    model = CostModel([DataSet("a", 1.0), DataSet("b", 3.0)], [mkjob(inputs=["a", "b"])],
                      tiers, ENV)
    out = performance_policy(model)
    assert out.plan.matrix[:, 1].tolist() == [1.0, 1.0]
    assert out.plan.matrix.sum() == 2.0


def test_performance_ties_lowest_index():
    tiers = [StorageType(f"t{j}", "", 0.01, 0.0, 1.0) for j in range(3)]
    model = CostModel([DataSet("a", 1.0)], [mkjob(inputs=["a"])], tiers, ENV)
    assert performance_policy(model).plan.row("a").tolist() == [1.0, 0.0, 0.0]


def test_economic_picks_cold_on_preset():
    model = CostModel([DataSet("a", 2.0)], [mkjob(inputs=["a"])], TABLE2_TIERS, ENV)
    out = economic_policy(model)
    assert out.plan.row("a").tolist() == [0.0, 0.0, 1.0, 0.0]
    assert model.tier_ids[2] == "cold"


def test_no_datasets():
    model = CostModel([], [mkjob(), mkjob("j1", w_time=0.9)], TABLE2_TIERS, ENV)
    for fn in (performance_policy, economic_policy, act_greedy, brute_force):
        out = fn(model)
        assert out.plan.matrix.shape == (0, 4)
        assert out.total_cost == pytest.approx(model.base_cost(), rel=1e-12)
        assert out.time_ok and out.money_ok


def test_unconsumed_rows_left_empty():
    model = CostModel([DataSet("a", 1.0), DataSet("orphan", 5.0)], [mkjob(inputs=["a"])],
                      TABLE2_TIERS, ENV)
    for fn in (performance_policy, economic_policy, act_greedy, brute_force):
        assert not fn(model).plan.row("orphan").any()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_brute_matches_enumeration_and_dominates(seed):
    model = random_scenario(seed, max_datasets=4, max_jobs=4).model()
    out = brute_force(model)
    best, _ = _enumerate(model)
    assert out.total_cost == pytest.approx(best, rel=1e-12, abs=1e-12)
    for fn in (performance_policy, economic_policy, act_greedy):
        assert out.total_cost <= fn(model).total_cost + 1e-12


@pytest.mark.parametrize("w_time", [0.0, 0.5, 0.9])
def test_brute_constrained_on_tight_scenario(w_time):
    model = tight_scenario(w_time).model()
    out = brute_force(model, constrained=True)
    best, arg = _enumerate(model, constrained=True)
    assert arg is None and math.isinf(out.total_cost)
    assert not out.plan.matrix.any()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0.9, 1.1))
def test_brute_constrained_matches_enumeration(seed, squeeze):
    from dataclasses import replace

    sc = random_scenario(seed, max_datasets=4, max_jobs=3)
    model = sc.model()
    _, arg = _enumerate(model)
    T, _, _, B = model.constraint_flags(arg)
    jobs = tuple(replace(j, time_deadline=float(T[k]) * squeeze,
                         money_budget=float(B[k]) * (2 - squeeze))
                 for k, j in enumerate(sc.jobs))
    tight = CostModel(sc.datasets, jobs, sc.tiers, sc.env)
    out = brute_force(tight, constrained=True)
    best, _ = _enumerate(tight, constrained=True)
    if math.isinf(best):
        assert math.isinf(out.total_cost)
    else:
        assert out.total_cost == pytest.approx(best, rel=1e-12)
        assert out.time_ok and out.money_ok


def test_brute_cap():
    model = random_scenario(1, max_datasets=6).model()
    with pytest.raises(SearchSpaceTooLarge):
        brute_force(model, cap=3)


def test_tight_scenario_pattern():
    """Single-tier policies each break one hard constraint where a split meets both."""
    for w_time in (0.0, 0.9):
        model = tight_scenario(w_time).model()
        perf, eco, greedy = performance_policy(model), economic_policy(model), act_greedy(model)
        assert perf.time_ok and not perf.money_ok
        assert eco.money_ok and not eco.time_ok
        assert not (greedy.time_ok and greedy.money_ok)


def test_act_greedy_keeps_good_plan_and_ignores_constraints():
    model = random_scenario(4).model()
    first = act_greedy(model)
    again = act_greedy(model, first.plan)
    assert again.plan == first.plan
    best, _ = _enumerate(model) if model.M <= 5 else (None, None)
    if best is not None:
        assert first.total_cost >= best - 1e-12


def test_constraint_summary():
    model = tight_scenario(0.0).model()
    perf = performance_policy(model)
    s = constraint_summary(perf.reports)
    assert s.time_ok and not s.money_ok
    assert s.money_value == max(r.money_value for r in perf.reports)
    empty = constraint_summary([])
    assert empty.time_ok and empty.money_ok
