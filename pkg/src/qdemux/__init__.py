"""Monte Carlo simulator and rate analytics for an actively demultiplexed
quantum-dot single-photon source."""
from __future__ import annotations

from .analytics import RateModel, analytic_coincidence_rate, analytic_rate_uncertainty
from .config import ScenarioConfig, default_config, load_config, load_scenario, validate_config
from .core import ConfigError, PulseClock
from .oracle import enumerate_cycle
from .simulate import SimulationResult, simulate

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "PulseClock", "RateModel", "ScenarioConfig", "SimulationResult",
    "analytic_coincidence_rate", "analytic_rate_uncertainty", "default_config", "enumerate_cycle",
    "load_config", "load_scenario", "simulate", "validate_config",
]
