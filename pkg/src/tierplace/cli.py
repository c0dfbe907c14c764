"""Command line: ``tierplace {plan,simulate,compare,sweep}``.

Exit codes: 0 success, 1 input error, 2 infeasible hard constraints.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import report
from .errors import InfeasibleScenario, PlacementInfeasible, TierplaceError, ValidationError
from .model import FREQUENCY_PRESETS, frequency_value
from .scenario import PRESETS, load_scenario, override, scenario_hash, serialize_scenario
from .simulator import POLICIES, Scenario, compare

SWEEP_POLICIES = ("lnodp", "performance", "economic", "actgreedy")
DEFAULT_WT = (0.0, 0.5, 0.9)
INFEASIBLE = (InfeasibleScenario, PlacementInfeasible)

log = logging.getLogger("tierplace")


def _float_list(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text}") from exc


def _freq_list(text: str) -> list:
    out = []
    for x in (s.strip() for s in text.split(",")):
        if not x:
            continue
        try:
            out.append(frequency_value(x if x in FREQUENCY_PRESETS else float(x)))
        except (ValueError, TierplaceError) as exc:
            raise argparse.ArgumentTypeError(f"bad frequency {x!r}") from exc
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True, help="scenario JSON file")
    common.add_argument("--out-dir", help="write result files here instead of stdout")
    common.add_argument("--preset", choices=sorted(PRESETS), help="replace the tiers by a preset")
    common.add_argument("--budget-basis", choices=("per_execution", "per_period"))
    common.add_argument("--queue-unit", choices=("GB", "fraction"))
    common.add_argument("--seed", type=int)
    common.add_argument("--horizon", type=int)

    p = argparse.ArgumentParser(prog="tierplace", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    pl = sub.add_parser("plan", parents=[common], help="one-shot placement of the declared data")
    pl.add_argument("--policy", choices=POLICIES + ("all",), default="lnodp")
    sm = sub.add_parser("simulate", parents=[common], help="slot-by-slot run")
    sm.add_argument("--policy", choices=POLICIES + ("all",), default="lnodp")
    cp = sub.add_parser("compare", parents=[common], help="simulate every policy side by side")
    cp.add_argument("--policy", choices=POLICIES + ("all",), default="all")
    sw = sub.add_parser("sweep", parents=[common], help="static comparison over a w_t x f grid")
    sw.add_argument("--policy", default=",".join(SWEEP_POLICIES),
                    help="comma-separated policies, or 'all'")
    sw.add_argument("--wt", type=_float_list, default=list(DEFAULT_WT))
    sw.add_argument("--frequencies", type=_freq_list,
                    default=list(FREQUENCY_PRESETS.values()))
    return p


def _policies(flag: str) -> list:
    if flag == "all":
        return list(POLICIES)
    names = [x.strip() for x in flag.split(",") if x.strip()]
    for n in names:
        if n not in POLICIES:
            raise ValidationError(f"unknown policy {n!r}", "--policy")
    return names


def _load(args) -> Scenario:
    sc = load_scenario(args.scenario, args.preset)
    return override(sc, budget_basis=args.budget_basis, queue_unit=args.queue_unit,
                    seed=args.seed, horizon=args.horizon)


def infeasibility_report(sc: Scenario, exc) -> dict:
    """Error plus, per job, the best time and money any single tier could give."""
    model = sc.model()
    best_t = np.full(model.K, np.inf)
    best_m = np.full(model.K, np.inf)
    for j in range(model.N):
        m = np.zeros((model.M, model.N))
        m[:, j] = 1.0
        _, _, time, budget = model.constraint_flags(m)
        best_t, best_m = np.minimum(best_t, time), np.minimum(best_m, budget)
    jobs = []
    for k, job in enumerate(model.jobs):
        jobs.append({"job": job.id, "time_deadline": job.time_deadline,
                     "money_budget": job.money_budget, "best_single_tier_time": best_t[k],
                     "best_single_tier_money": best_m[k],
                     "deadline_reachable": bool(best_t[k] <= job.time_deadline + 1e-9),
                     "budget_reachable": bool(best_m[k] <= job.money_budget + 1e-9),
                     "implicated": job.id in getattr(exc, "jobs", ())})
    return {"error": exc.as_dict(), "jobs": jobs}


class Output:
    def __init__(self, out_dir: str | None):
        self.dir = Path(out_dir) if out_dir else None
        if self.dir:
            self.dir.mkdir(parents=True, exist_ok=True)

    def text(self, name: str, content: str, echo: bool = False):
        if self.dir:
            (self.dir / name).write_text(content)
        if echo or not self.dir:
            sys.stdout.write(content)

    def csv(self, name: str, header, rows, echo: bool = False):
        self.text(name, report.csv_text(header, rows), echo)


def _infeasible_exit(out: Output, sc: Scenario, exc) -> int:
    doc = report.dumps(infeasibility_report(sc, exc))
    if out.dir:
        (out.dir / "infeasible.json").write_text(doc)
    sys.stderr.write(doc)
    return 2


def cmd_plan(args, out: Output) -> int:
    sc = _load(args)
    sc = replace(sc, horizon=1)
    policies = _policies(args.policy)
    rows = compare(sc, policies, static=True)
    model = sc.model()
    digest = scenario_hash(sc)
    if out.dir:
        out.text("scenario.json", serialize_scenario(sc))
    out_rows = [report.comparison_row(model, r) for r in rows]
    jobs = [x for r in rows for x in report.job_rows(model, r)]
    infeasible = [r["error"] for r in rows if isinstance(r.get("error"), INFEASIBLE)]
    other = [r["error"] for r in rows if r.get("error") is not None
             and not isinstance(r["error"], INFEASIBLE)]
    if len(policies) == 1 and other:
        raise other[0]
    if out.dir or len(policies) > 1:
        out.csv("comparison.csv", report.COMPARISON_HEADER, out_rows)
    if out.dir:
        out.csv("jobs.csv", report.JOBS_HEADER, jobs)
        out.csv("timings.csv", report.TIMINGS_HEADER, report.timing_rows(rows))
    if len(policies) == 1 and not infeasible:
        r = rows[0]["outcome"]
        summary = {"scenario_hash": digest, "policy": policies[0], "total_cost": r.total_cost,
                   "time_ok": r.time_ok, "money_ok": r.money_ok,
                   "postponed": list(r.postponed), "plan": r.plan.as_dict(),
                   "jobs": [vars(x) for x in r.reports]}
        out.text("summary.json", report.dumps(summary))
    if infeasible:
        return _infeasible_exit(out, sc, infeasible[0])
    return 0


def _simulate(args, out: Output, policies: list, comparison: bool) -> int:
    sc = _load(args)
    if out.dir:
        out.text("scenario.json", serialize_scenario(sc))
    rows = compare(sc, policies, static=False)
    traces = [r["trace"] for r in rows if r.get("trace") is not None]
    errors = [r["error"] for r in rows if r.get("error") is not None]
    if not comparison and errors and not isinstance(errors[0], INFEASIBLE):
        raise errors[0]
    if out.dir:
        for tr in traces:
            report.write_trace(out.dir / f"trace_{tr.policy}.csv", tr)
        report.write_trace_timings(out.dir / "timings.csv", traces)
    if comparison or len(policies) > 1:
        out.csv("comparison.csv", report.SIM_COMPARISON_HEADER,
                [report.sim_comparison_row(r) for r in rows])
    summary = {"scenario_hash": scenario_hash(sc), "horizon": sc.horizon, "seed": sc.seed,
               "policies": {tr.policy: tr.summary() for tr in traces},
               "errors": {r["policy"]: r["error"].as_dict() for r in rows
                          if r.get("error") is not None}}
    if out.dir or not (comparison or len(policies) > 1):
        out.text("summary.json", report.dumps(summary))
    infeasible = [e for e in errors if isinstance(e, INFEASIBLE)]
    if infeasible:
        return _infeasible_exit(out, sc, infeasible[0])
    return 0


def cmd_simulate(args, out: Output) -> int:
    return _simulate(args, out, _policies(args.policy), comparison=False)


def cmd_compare(args, out: Output) -> int:
    return _simulate(args, out, _policies(args.policy), comparison=True)


def sweep_variant(sc: Scenario, w_time: float, frequency: float) -> Scenario:
    """Every job gets weights (w_time, 1 - w_time) and the given frequency."""
    jobs = tuple(replace(j, w_time=w_time, w_money=1.0 - w_time, frequency=frequency)
                 for j in sc.jobs)
    return replace(sc, jobs=jobs, horizon=1)


def cmd_sweep(args, out: Output) -> int:
    base = _load(args)
    policies = _policies(args.policy)
    if out.dir:
        out.text("scenario.json", serialize_scenario(base))
    rows, jobs, timings = [], [], []
    for wt in args.wt:
        for f in args.frequencies:
            sc = sweep_variant(base, wt, f)
            model = sc.model()
            res = compare(sc, policies, static=True)
            rows += [report.comparison_row(model, r, wt, f) for r in res]
            jobs += [x for r in res for x in report.job_rows(model, r, wt, f)]
            timings += report.timing_rows(res, wt, f)
    out.csv("comparison.csv", report.COMPARISON_HEADER, rows)
    if out.dir:
        out.csv("jobs.csv", report.JOBS_HEADER, jobs)
        out.csv("timings.csv", report.TIMINGS_HEADER, timings)
    return 0


COMMANDS = {"plan": cmd_plan, "simulate": cmd_simulate, "compare": cmd_compare,
            "sweep": cmd_sweep}


def main(argv=None) -> int:
    level = os.environ.get("TIERPLACE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        out = Output(args.out_dir)
        return COMMANDS[args.command](args, out)
    except INFEASIBLE as exc:
        sys.stderr.write(report.dumps({"error": exc.as_dict()}))
        return 2
    except TierplaceError as exc:
        sys.stderr.write(report.dumps({"error": exc.as_dict()}))
        return 1
    except OSError as exc:
        sys.stderr.write(report.dumps({"error": {"code": "io_error", "path": "",
                                                 "message": str(exc)}}))
        return 1


if __name__ == "__main__":
    sys.exit(main())
