"""Key bootstrapping over LiFi, key installation on WiFi, in a discrete-event simulator."""

from .config import ConfigError, ScenarioConfig, default_scenario, load_config
from .crypto import Ptk, derive_pmk, derive_ptk, prf_384
from .netsim import InvariantViolation

__version__ = "0.1.0"

__all__ = ["ConfigError", "InvariantViolation", "Ptk", "ScenarioConfig", "default_scenario", "derive_pmk",
           "derive_ptk", "load_config", "prf_384"]
