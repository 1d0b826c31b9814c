"""Memoized simulation runs shared by the test modules."""

from __future__ import annotations

import copy
import json
from functools import lru_cache

from strongfed.cli import bundled_scenarios
from strongfed.simnet.engine import sim_run
from strongfed.simnet.scenario import load_scenario, scenario_from_dict


def bundled_dict(name: str) -> dict:
    return load_scenario(bundled_scenarios()[name]).to_dict()


def merge(base: dict, changes: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in changes.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = value
    return out


@lru_cache(maxsize=None)
def _run(key: str, trace_messages: bool):
    sc = scenario_from_dict(json.loads(key))
    metrics, trace = sim_run(sc, trace_messages=trace_messages)
    return metrics.as_dict(), trace


def run(data: dict, trace_messages: bool = False):
    """(metrics dict, trace) for a scenario mapping; cached per session."""
    return _run(json.dumps(data, sort_keys=True), trace_messages)


def run_bundled(name: str, trace_messages: bool = False, **changes):
    return run(merge(bundled_dict(name), changes), trace_messages)
