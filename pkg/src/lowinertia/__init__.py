"""Analytic frequency and voltage response of mixed SG / grid-forming inverter networks."""

from .case import NetworkCase, parse_case
from .devices import GFM, SG, Constants, ParamSet
from .frequency import DisturbanceSpec, assemble_frequency_model
from .lti import LtiModel, Trajectory, solve_analytic, solve_numeric_oracle
from .metrics import frequency_metrics, voltage_metrics
from .network import build_susceptance, kron_reduce, reduce_case
from .powerflow import solve_ac_powerflow
from .scenario import ScenarioConfig, load_config, run_scenario, sweep
from .voltage import assemble_voltage_model, estimate_reactive_disturbance

__version__ = "0.1.0"

__all__ = [
    "NetworkCase", "parse_case", "GFM", "SG", "Constants", "ParamSet", "DisturbanceSpec",
    "assemble_frequency_model", "LtiModel", "Trajectory", "solve_analytic", "solve_numeric_oracle",
    "frequency_metrics", "voltage_metrics", "build_susceptance", "kron_reduce", "reduce_case",
    "solve_ac_powerflow", "ScenarioConfig", "load_config", "run_scenario", "sweep",
    "assemble_voltage_model", "estimate_reactive_disturbance",
]
