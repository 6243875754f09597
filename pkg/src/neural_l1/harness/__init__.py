"""Scenario configuration, co-simulation, output files and the command-line entry point."""
from .config import ScenarioConfig, load_config, parse_config
from .sim import MetricsSummary, RunTrace, ScenarioResult, compare, compute_metrics, run_grid, run_scenario

__all__ = ["MetricsSummary", "RunTrace", "ScenarioConfig", "ScenarioResult", "compare", "compute_metrics",
           "load_config", "parse_config", "run_grid", "run_scenario"]
