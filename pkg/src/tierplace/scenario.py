"""Scenario documents (JSON): schema checks, defaults, presets, round-trip serialization."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import replace
from pathlib import Path

from .errors import SchemaError, TierplaceError, ValidationError
from .model import FREQUENCY_PRESETS, DataSet, EnvironmentParams, JobProfile, StorageType
from .planner import PlannerConfig
from .simulator import DAY, Scenario

SCHEMA_VERSION = 1

# Published prices; the speeds are illustrative values chosen to keep the
# usual ordering Standard > LowFreq > Cold > Archive.
TABLE2_TIERS = (
    StorageType("standard", "Standard", 0.0155, 0.0, 0.1),
    StorageType("lowfreq", "LowFreq", 0.0113, 0.0042, 0.08),
    StorageType("cold", "Cold", 0.0045, 0.0085, 0.05),
    StorageType("archive", "Archive", 0.015, 0.12, 0.02),
)
PRESETS = {"table2": TABLE2_TIERS}

_TOP = {"schema_version", "preset", "tiers", "datasets", "jobs", "env", "planner", "sim"}
_TIER = {"id": "str", "name": "str", "storage_price": "num", "read_price": "num",
         "speed": "num", "validity": "num?"}
_DATASET = {"id": "str", "size": "num", "consumers": "list?"}
_JOB = {"id": "str", "workload": "num", "alpha": "num", "nodes": "int", "frequency": "freq",
        "desired_time": "num", "desired_money": "num", "time_deadline": "num",
        "money_budget": "num", "w_time": "num", "w_money": "num?", "inputs": "list",
        "intermediate_size": "num?"}
_ENV = {"init_time_per_node": "num", "compute_speed": "num", "vm_price": "num"}
_PLANNER = {"max_iterations": "int?", "inner_iterations": "int?", "omega": "num?",
            "grid_step": "num?", "interval_mode": "str?", "pressure_form": "str?"}
_SIM = {"horizon": "int?", "slot_seconds": "num?", "seed": "int?", "budget_basis": "str?",
        "queue_unit": "str?", "period_seconds": "num?", "intermediate_uses": "int?",
        "generation_jitter": "num?", "brute_constrained": "bool?"}


def _check(value, kind: str, path: str):
    kind = kind.rstrip("?")
    if kind == "num":
        numeric = isinstance(value, (int, float)) and not isinstance(value, bool)
        if not numeric or not math.isfinite(value):
            raise SchemaError(f"{path}: expected a finite number", path)
        return float(value)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise SchemaError(f"{path}: expected an integer", path)
        return value
    if kind == "str":
        if not isinstance(value, str) or not value:
            raise SchemaError(f"{path}: expected a non-empty string", path)
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise SchemaError(f"{path}: expected true or false", path)
        return value
    if kind == "list":
        if not isinstance(value, list) or not all(isinstance(x, str) for x in value):
            raise SchemaError(f"{path}: expected a list of ids", path)
        return tuple(value)
    if kind == "freq":
        if isinstance(value, str):
            if value not in FREQUENCY_PRESETS:
                raise SchemaError(f"{path}: unknown frequency {value!r}; expected a number or "
                                  f"one of {sorted(FREQUENCY_PRESETS)}", path)
            return FREQUENCY_PRESETS[value]
        return _check(value, "num", path)
    raise AssertionError(kind)


def _section(obj, fields: dict, path: str) -> dict:
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: expected an object", path)
    for key in obj:
        if key not in fields:
            raise SchemaError(f"{path}.{key}: unknown field", f"{path}.{key}")
    out = {}
    for key, kind in fields.items():
        if key not in obj:
            if not kind.endswith("?"):
                raise SchemaError(f"{path}.{key}: required field missing", f"{path}.{key}")
            continue
        if obj[key] is None and kind.endswith("?"):
            continue
        out[key] = _check(obj[key], kind, f"{path}.{key}")
    return out


def _items(doc: dict, key: str) -> list:
    if key not in doc:
        raise SchemaError(f"{key}: required section missing", key)
    if not isinstance(doc[key], list):
        raise SchemaError(f"{key}: expected a list", key)
    return doc[key]


def _wrap(path: str, build):
    try:
        return build()
    except TierplaceError:
        raise
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: {exc}", path) from exc


def parse_scenario(doc, preset: str | None = None) -> Scenario:
    """Validated :class:`Scenario` from a parsed JSON document.

    ``preset`` overrides any tier section in the document.
    """
    if not isinstance(doc, dict):
        raise SchemaError("document root must be an object", "")
    for key in doc:
        if key not in _TOP:
            raise SchemaError(f"{key}: unknown field", key)
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {version!r}", "schema_version")

    preset = preset or doc.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise SchemaError(f"unknown preset {preset!r}", "preset")
        tiers = PRESETS[preset]
    else:
        tiers = []
        for n, raw in enumerate(_items(doc, "tiers")):
            f = _section(raw, _TIER, f"tiers[{n}]")
            tiers.append(_wrap(f"tiers[{n}]", lambda f=f: StorageType(**f)))

    datasets = []
    for n, raw in enumerate(_items(doc, "datasets")):
        f = _section(raw, _DATASET, f"datasets[{n}]")
        f["consumers"] = frozenset(f.get("consumers", ()))
        datasets.append(_wrap(f"datasets[{n}]", lambda f=f: DataSet(**f)))

    jobs = []
    for n, raw in enumerate(_items(doc, "jobs")):
        f = _section(raw, _JOB, f"jobs[{n}]")
        f.setdefault("w_money", 1.0 - f["w_time"])
        jobs.append(_wrap(f"jobs[{n}]", lambda f=f: JobProfile(**f)))

    if "env" not in doc:
        raise SchemaError("env: required section missing", "env")
    env = _wrap("env", lambda: EnvironmentParams(**_section(doc["env"], _ENV, "env")))
    planner = _wrap("planner", lambda: PlannerConfig(
        **_section(doc.get("planner", {}), _PLANNER, "planner")))
    sim = _section(doc.get("sim", {}), _SIM, "sim")
    return _wrap("sim", lambda: Scenario(tuple(tiers), tuple(datasets), tuple(jobs), env,
                                         planner, **sim))


def load_scenario(path, preset: str | None = None) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read scenario: {exc}", str(path)) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}", f"line {exc.lineno}") from exc
    return parse_scenario(doc, preset)


def scenario_document(sc: Scenario) -> dict:
    """Plain-data form of ``sc``; consumer lists are implied by job inputs."""
    p = sc.planner
    return {
        "schema_version": SCHEMA_VERSION,
        "tiers": [{"id": t.id, "name": t.name, "storage_price": t.storage_price,
                   "read_price": t.read_price, "speed": t.speed, "validity": t.validity}
                  for t in sc.tiers],
        "datasets": [{"id": d.id, "size": d.size} for d in sc.datasets],
        "jobs": [{"id": j.id, "workload": j.workload, "alpha": j.alpha, "nodes": int(j.nodes),
                  "frequency": j.frequency, "desired_time": j.desired_time,
                  "desired_money": j.desired_money, "time_deadline": j.time_deadline,
                  "money_budget": j.money_budget, "w_time": j.w_time, "w_money": j.w_money,
                  "inputs": list(j.inputs), "intermediate_size": j.intermediate_size}
                 for j in sc.jobs],
        "env": {"init_time_per_node": sc.env.init_time_per_node,
                "compute_speed": sc.env.compute_speed, "vm_price": sc.env.vm_price},
        "planner": {"max_iterations": p.max_iterations, "inner_iterations": p.inner_iterations,
                    "omega": p.omega, "grid_step": p.grid_step,
                    "interval_mode": p.interval_mode, "pressure_form": p.pressure_form},
        "sim": {"horizon": sc.horizon, "slot_seconds": sc.slot_seconds, "seed": sc.seed,
                "budget_basis": sc.budget_basis, "queue_unit": sc.queue_unit,
                "period_seconds": sc.period_seconds, "intermediate_uses": sc.intermediate_uses,
                "generation_jitter": sc.generation_jitter,
                "brute_constrained": sc.brute_constrained},
    }


def serialize_scenario(sc: Scenario) -> str:
    return json.dumps(scenario_document(sc), indent=2, sort_keys=True) + "\n"


def scenario_hash(sc: Scenario) -> str:
    canon = json.dumps(scenario_document(sc), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def override(sc: Scenario, **changes) -> Scenario:
    """Copy of ``sc`` with sim-level fields replaced; ``None`` values are ignored."""
    changes = {k: v for k, v in changes.items() if v is not None}
    return replace(sc, **changes) if changes else sc


__all__ = ["DAY", "PRESETS", "SCHEMA_VERSION", "TABLE2_TIERS", "load_scenario", "override",
           "parse_scenario", "scenario_document", "scenario_hash", "serialize_scenario"]
