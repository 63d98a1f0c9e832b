"""Scenario configs, the batch driver, metrics and the command line."""

from oraclesim.scenario.config import ScenarioConfig, config_from_dict, load_config, parse_behavior
from oraclesim.scenario.metrics import compute_metrics, metrics_jsonl
from oraclesim.scenario.runner import RunOutcome, ScenarioRunner, builtin_fixtures, run_scenario

__all__ = [
    "RunOutcome",
    "ScenarioConfig",
    "ScenarioRunner",
    "builtin_fixtures",
    "compute_metrics",
    "config_from_dict",
    "load_config",
    "metrics_jsonl",
    "parse_behavior",
    "run_scenario",
]
