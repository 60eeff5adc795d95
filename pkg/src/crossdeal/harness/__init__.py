"""Scenario runner, benchmarks, reports and the command-line interface."""

from .runner import ScenarioResult, run_scenario
from .scenario import AgentSpec, BenchmarkConfig, ListingSpec, ScenarioConfig, SvcSpec, config_from_json, load_config

__all__ = [
    "AgentSpec",
    "BenchmarkConfig",
    "ListingSpec",
    "ScenarioConfig",
    "ScenarioResult",
    "SvcSpec",
    "config_from_json",
    "load_config",
    "run_scenario",
]
