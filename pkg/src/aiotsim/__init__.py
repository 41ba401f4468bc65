"""Discrete-event simulator for ambient IoT devices served through a 5G core."""

from .scenario import ScenarioConfig, load_scenario
from .sim import RunResult, Simulation, run, run_to_text

__version__ = "0.1.0"

__all__ = ["RunResult", "ScenarioConfig", "Simulation", "load_scenario", "run", "run_to_text"]
