# Scenario harness: world wiring, engine, invariant suite, fuzzing and CLI
from .engine import ScenarioEngine, run_scenario
from .fuzz import build_fuzz_schedule, fuzz_transfers
from .invariants import InvariantMonitor, check_global_invariants
from .loader import ScenarioError, bundled_scenarios, load_scenario, parse_scenario
from .report import render_json, render_text, write_report
from .world import World

__all__ = [
    "ScenarioEngine",
    "run_scenario",
    "build_fuzz_schedule",
    "fuzz_transfers",
    "InvariantMonitor",
    "check_global_invariants",
    "ScenarioError",
    "bundled_scenarios",
    "load_scenario",
    "parse_scenario",
    "render_json",
    "render_text",
    "write_report",
    "World",
]
