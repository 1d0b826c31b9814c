"""Deterministic discrete-event simulation of a federated sidechain."""

from strongfed.simnet.engine import Simulation, sim_run
from strongfed.simnet.metrics import Metrics, check_expectations, metrics_from_trace
from strongfed.simnet.scenario import (
    Fault,
    Scenario,
    ScenarioError,
    load_scenario,
    scenario_from_dict,
    validate,
)
from strongfed.simnet.trace import TRACE_SCHEMA, read_trace, trace_bytes, write_trace

__all__ = [name for name in dir() if not name.startswith("_")]
