"""Simulation and stability analysis of hybrid angle control for grid-forming converters."""
from .analysis import (Equilibrium, LyapCoeffs, StabilityReport, StiffGridSetup, equilibria_closed_form,
                       jacobian_eigenvalues, lyapunov_derivative, lyapunov_value, newton_equilibrium,
                       rho_critical)
from .config import parse_config
from .engine import Event, TrajectoryLog, rk4_step, simulate
from .plant import PlantParams
from .scenarios import RunReport, ScenarioSpec, run_scenario

__all__ = [
    "Equilibrium", "LyapCoeffs", "StabilityReport", "StiffGridSetup", "equilibria_closed_form",
    "jacobian_eigenvalues", "lyapunov_derivative", "lyapunov_value", "newton_equilibrium",
    "rho_critical", "parse_config", "Event", "TrajectoryLog", "rk4_step", "simulate", "PlantParams",
    "RunReport", "ScenarioSpec", "run_scenario",
]
__version__ = "0.1.0"
