"""Scenario-driven simulation harness: config, policies, engine, metrics, CLI."""

from .scenario import ScenarioConfig, ScenarioError, load_scenario
from .engine import RunResult, run
from .metrics import MetricsReport, report_metrics
from .verify import replay_log, verify_log

__all__ = [
    "MetricsReport",
    "RunResult",
    "ScenarioConfig",
    "ScenarioError",
    "load_scenario",
    "replay_log",
    "report_metrics",
    "run",
    "verify_log",
]
