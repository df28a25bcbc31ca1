"""Discrete-event simulator for battery-less, energy-harvesting acoustic sensor networks."""

from harvestnet.config import ConfigError, ScenarioConfig, load_config
from harvestnet.engine import InvariantBreach, Metrics, run

__all__ = ["ConfigError", "InvariantBreach", "Metrics", "ScenarioConfig", "load_config", "run"]
__version__ = "0.1.0"
