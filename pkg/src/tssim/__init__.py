"""tssim: transient-stability time-domain simulation with full and split
DAE formulations behind one device-model interface, plus a benchmark harness
for comparing the two."""

__version__ = "0.1.0"

from .dae import Formulation, SystemFunction, VariableRegistry, build_system
from .grid import (Branch, Bus, GridModel, Load, ShuntElement, build_ybus,
                   network_residual, solve_powerflow)
from .scenario import (Event, RunReport, Scenario, Trajectory, parse_case,
                       parse_scenario, run_scenario)
from .solver import SolverConfig, StepStats, linear_solve, run_simulation

__all__ = [
    "Formulation", "SystemFunction", "VariableRegistry", "build_system",
    "Branch", "Bus", "GridModel", "Load", "ShuntElement", "build_ybus",
    "network_residual", "solve_powerflow",
    "Event", "RunReport", "Scenario", "Trajectory", "parse_case",
    "parse_scenario", "run_scenario",
    "SolverConfig", "StepStats", "linear_solve", "run_simulation",
    "__version__",
]
