import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

import recompute
from scenarios import dynamic_scenario, random_scenario, tight_scenario
from tierplace import report
from tierplace.cli import SWEEP_POLICIES, main
from tierplace.errors import DanglingReference, SchemaError, TierplaceError, ValidationError
from tierplace.scenario import (TABLE2_TIERS, load_scenario, parse_scenario, scenario_document,
                                scenario_hash, serialize_scenario)
from tierplace.simulator import POLICIES, compare

ROOT = Path(__file__).resolve().parents[1]
TIGHT = ROOT / "scenarios" / "wordcount_tight.json"
THREE = ROOT / "scenarios" / "three_jobs.json"


def _doc(sc=None):
    return json.loads(serialize_scenario(sc or tight_scenario(0.5)))


def _write(tmp_path, doc, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def _csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- parsing --------------------------------------------------------------------------------
def test_preset_prices():
    sc = parse_scenario({**{k: v for k, v in _doc().items() if k != "tiers"}, "preset": "table2"})
    assert [t.name for t in sc.tiers] == ["Standard", "LowFreq", "Cold", "Archive"]
    assert [t.storage_price for t in sc.tiers] == [0.0155, 0.0113, 0.0045, 0.015]
    assert [t.read_price for t in sc.tiers] == [0.0, 0.0042, 0.0085, 0.12]
    assert sc.tiers == TABLE2_TIERS


def test_defaults_applied():
    sc = load_scenario(TIGHT)
    assert sc.planner.omega == 1.0 and sc.planner.grid_step == 0.001
    assert sc.slot_seconds == 86400.0 and sc.budget_basis == "per_execution"
    assert sc.queue_unit == "GB"
    assert sc.jobs[0].w_money == 0.5 and sc.jobs[0].frequency == pytest.approx(1 / 12)


def test_missing_jobs():
    doc = _doc()
    del doc["jobs"]
    with pytest.raises(SchemaError) as exc:
        parse_scenario(doc)
    assert exc.value.path == "jobs"
    assert exc.value.as_dict()["code"] == "schema_error"


def test_weights_must_sum_to_one():
    doc = _doc()
    doc["jobs"][0]["w_time"], doc["jobs"][0]["w_money"] = 0.6, 0.6
    with pytest.raises(ValidationError) as exc:
        parse_scenario(doc)
    assert exc.value.path.startswith("jobs.wordcount")


@pytest.mark.parametrize("mutate, path", [
    (lambda d: d["jobs"][0].update(colour="red"), "jobs[0].colour"),
    (lambda d: d.update(extra=1), "extra"),
    (lambda d: d["env"].pop("vm_price"), "env.vm_price"),
    (lambda d: d["jobs"][0].update(nodes="three"), "jobs[0].nodes"),
    (lambda d: d["jobs"][0].update(frequency="hourly"), "jobs[0].frequency"),
    (lambda d: d["tiers"][0].update(speed=float("nan")), "tiers[0].speed"),
    (lambda d: d.update(schema_version=7), "schema_version"),
    (lambda d: d.update(preset="gold"), "preset"),
])
def test_schema_errors_carry_paths(mutate, path):
    doc = _doc()
    mutate(doc)
    with pytest.raises(SchemaError) as exc:
        parse_scenario(json.loads(json.dumps(doc, allow_nan=True)))
    assert exc.value.path == path
    assert set(exc.value.as_dict()) >= {"code", "path", "message"}


def test_dangling_reference():
    doc = _doc()
    doc["jobs"][0]["inputs"] = ["nope"]
    with pytest.raises(DanglingReference) as exc:
        parse_scenario(doc)
    assert "nope" in str(exc.value) and exc.value.code == "dangling_reference"
    doc = _doc()
    doc["datasets"][0]["consumers"] = ["ghost"]
    with pytest.raises(DanglingReference):
        parse_scenario(doc)


@pytest.mark.parametrize("seed", range(10))
def test_round_trip(seed):
    sc = random_scenario(seed, horizon=5, generation_jitter=0.1)
    text = serialize_scenario(sc)
    again = parse_scenario(json.loads(text))
    assert again == sc
    assert serialize_scenario(again) == text
    assert scenario_hash(again) == scenario_hash(sc)
    assert scenario_document(parse_scenario(scenario_document(sc))) == scenario_document(sc)


def test_float_format_round_trips():
    for x in (0.1, 1 / 3, 1e-17, 123456789.123456789, 0.0):
        assert float(report.fmt(x)) == x
    assert report.fmt(True) == "true" and report.fmt(None) == ""


def test_result_bundle_reserialization_is_identical(tmp_path):
    out = tmp_path / "o"
    assert main(["compare", "--scenario", str(THREE), "--horizon", "20",
                 "--out-dir", str(out)]) == 0
    for path in sorted(out.glob("*.csv")):
        text = path.read_text()
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        parsed = [[_parse_cell(c) for c in r] for r in body]
        assert report.csv_text(header, parsed) == text, path.name
    summary = (out / "summary.json").read_text()
    assert report.dumps(json.loads(summary)) == summary


def _parse_cell(c):
    if c in ("true", "false"):
        return c == "true"
    try:
        return float(c) if any(ch in c for ch in ".e") or c in ("inf", "nan") else int(c)
    except ValueError:
        return c


# -- commands -------------------------------------------------------------------------------
def test_plan_valid_exit_zero(tmp_path, capsys):
    assert main(["plan", "--scenario", str(TIGHT)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["policy"] == "lnodp" and summary["time_ok"] and summary["money_ok"]


def test_plan_impossible_deadline_exit_two(tmp_path, capsys):
    doc = _doc()
    doc["jobs"][0]["time_deadline"] = 100.0
    out = tmp_path / "o"
    code = main(["plan", "--scenario", _write(tmp_path, doc), "--out-dir", str(out)])
    assert code == 2
    rep = json.loads((out / "infeasible.json").read_text())
    assert rep["error"]["code"] == "infeasible_scenario"
    job = rep["jobs"][0]
    assert job["job"] == "wordcount" and not job["deadline_reachable"] and job["implicated"]
    assert job["best_single_tier_time"] > 100.0
    assert json.loads(capsys.readouterr().err) == rep


def test_input_error_exit_one(tmp_path, capsys):
    doc = _doc()
    del doc["jobs"]
    assert main(["plan", "--scenario", _write(tmp_path, doc)]) == 1
    err = json.loads(capsys.readouterr().err)["error"]
    assert err["path"] == "jobs" and err["code"] == "schema_error"
    assert main(["plan", "--scenario", str(tmp_path / "missing.json")]) == 1
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["plan", "--scenario", str(tmp_path / "bad.json")]) == 1


def test_policy_all_equals_compare(tmp_path):
    out = tmp_path / "o"
    assert main(["plan", "--scenario", str(TIGHT), "--policy", "all", "--out-dir", str(out)]) == 0
    rows = _csv(out / "comparison.csv")
    assert [r["policy"] for r in rows] == list(POLICIES)
    sc = load_scenario(TIGHT)
    ref = compare(sc, POLICIES, static=True)
    for r, c in zip(rows, ref):
        out_c = c["outcome"]
        assert float(r["total_cost"]) == out_c.total_cost
        assert (r["time_ok"] == "true") == out_c.time_ok
        assert (r["money_ok"] == "true") == out_c.money_ok
        assert [d["row"] for d in json.loads(r["plan"])] == out_c.plan.matrix.tolist()
        assert r["scenario_hash"] == c["scenario_hash"]


def test_sweep_sixty_rows(tmp_path):
    out = tmp_path / "o"
    assert main(["sweep", "--scenario", str(TIGHT), "--out-dir", str(out)]) == 0
    rows = _csv(out / "comparison.csv")
    assert len(rows) == 3 * 5 * 4 == 60
    keys = {(r["w_time"], r["frequency"], r["policy"]) for r in rows}
    assert len(keys) == 60
    assert {r["policy"] for r in rows} == set(SWEEP_POLICIES)
    n, worst = recompute.check_dir(out)
    assert n > 0 and worst < 1e-9


def test_repeat_runs_byte_identical(tmp_path):
    for cmd in (["compare", "--scenario", str(THREE), "--horizon", "30"],
                ["sweep", "--scenario", str(TIGHT), "--wt", "0,0.9"],
                ["plan", "--scenario", str(TIGHT), "--policy", "all"]):
        a, b = tmp_path / (cmd[0] + "a"), tmp_path / (cmd[0] + "b")
        assert main(cmd + ["--out-dir", str(a)]) == 0
        assert main(cmd + ["--out-dir", str(b)]) == 0
        for f in sorted(a.iterdir()):
            if f.name == "timings.csv":
                continue  # wall times only
            assert f.read_bytes() == (b / f.name).read_bytes(), f.name


@pytest.mark.parametrize("cmd", ["plan", "compare"])
def test_recompute_matches(tmp_path, cmd):
    out = tmp_path / "o"
    args = [cmd, "--scenario", str(THREE), "--out-dir", str(out), "--horizon", "40"]
    if cmd == "plan":
        args += ["--policy", "all"]
    assert main(args) == 0
    n, worst = recompute.check_dir(out)
    assert n >= 50 and worst < 1e-9


def test_overrides(tmp_path):
    out = tmp_path / "o"
    assert main(["simulate", "--scenario", str(THREE), "--horizon", "7", "--seed", "5",
                 "--budget-basis", "per_period", "--queue-unit", "fraction",
                 "--out-dir", str(out)]) == 0
    sc = load_scenario(out / "scenario.json")
    assert (sc.horizon, sc.seed, sc.budget_basis, sc.queue_unit) == (7, 5, "per_period",
                                                                      "fraction")
    assert len(_csv(out / "trace_lnodp.csv")) == 7
    n, worst = recompute.check_dir(out)
    assert worst < 1e-9


def test_trace_has_queue_and_plan_columns(tmp_path):
    out = tmp_path / "o"
    assert main(["simulate", "--scenario", str(THREE), "--horizon", "5",
                 "--out-dir", str(out)]) == 0
    header = _csv(out / "trace_lnodp.csv")[0].keys()
    for col in ("slot", "total_cost", "plan", "S_standard", "J_daily", "A_cold", "cost_weekly"):
        assert col in header


def test_module_entry_point_and_log_env(tmp_path):
    env = {"TIERPLACE_LOG": "debug", "PATH": "/usr/bin:/bin"}
    proc = subprocess.run([sys.executable, "-m", "tierplace", "plan", "--scenario", str(TIGHT)],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["policy"] == "lnodp"
    assert "DEBUG" in proc.stderr


def test_errors_are_tierplace_errors():
    for cls in (SchemaError, DanglingReference, ValidationError):
        assert issubclass(cls, TierplaceError)


def test_dynamic_scenario_file_in_sync():
    """The shipped three-job example is the seeded builder's output."""
    sc = dynamic_scenario(0, horizon=90, generation_jitter=0.2)
    assert load_scenario(THREE) == sc
