"""Analytics and slot-level simulation of opportunistic channel sharing among PPP access points."""

from .config import DEFAULTS, ConfigError, SystemConfig, load_config, validate_config

__version__ = "0.1.0"

__all__ = ["DEFAULTS", "ConfigError", "SystemConfig", "load_config", "validate_config"]
