"""
config.py
---------
Runtime settings for plsdof.

Values come from the environment, or from a .env file in the working
directory, and are read once by get_settings().
"""

import logging
import os
from dataclasses import dataclass
from typing import Dict, Optional

from dotenv import dotenv_values, load_dotenv

from .errors import ConfigError

load_dotenv()

# ============================================================================
# NUMERICAL CONSTANTS
# ============================================================================

TOLERANCE = 1e-8
DEGENERACY_RTOL = 1e-10

# ============================================================================
# EXPERIMENT DEFAULTS
# ============================================================================

DEFAULT_FOLDS = 10
DEFAULT_SNR = 9.0
DEFAULT_N_TRAIN = 50
DEFAULT_N_TEST = 153
DEFAULT_M_RANGE = 30
DEFAULT_D_VALUES = (10, 50, 90, 130, 170, 210)
DEFAULT_BASE_ROWS = 203
DEFAULT_BASE_DIM = 12


@dataclass(frozen=True)
class Settings:
    """Environment-driven tunables"""

    threads: int = 1
    log_level: str = "WARNING"
    fd_epsilon_scale: float = 1e-5
    cond_limit: float = 1e12

    def __post_init__(self):
        if self.threads < 1:
            raise ConfigError(f"PLSDOF_THREADS must be >= 1, got {self.threads}")
        if self.fd_epsilon_scale <= 0:
            raise ConfigError("PLSDOF_FD_EPSILON must be positive")
        if self.cond_limit <= 1:
            raise ConfigError("PLSDOF_COND_LIMIT must exceed 1")
        if logging.getLevelName(self.log_level.upper()) == f"Level {self.log_level.upper()}":
            raise ConfigError(f"unknown log level '{self.log_level}'")


def _env(name: str, cast, default):
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return cast(raw.strip())
    except ValueError:
        raise ConfigError(f"{name}={raw!r} does not parse as {cast.__name__}")


# Singleton instance
_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """Get or create the settings singleton"""
    global _settings
    if _settings is None:
        _settings = Settings(
            threads=_env("PLSDOF_THREADS", int, 1),
            log_level=_env("PLSDOF_LOG_LEVEL", str, "WARNING"),
            fd_epsilon_scale=_env("PLSDOF_FD_EPSILON", float, 1e-5),
            cond_limit=_env("PLSDOF_COND_LIMIT", float, 1e12),
        )
    return _settings


def reset_settings() -> None:
    global _settings
    _settings = None


def read_key_value_file(path: str) -> Dict[str, str]:
    """
    Read a KEY=value configuration file

    Keys are upper-cased; empty values are dropped.
    """
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    values = dotenv_values(path)
    return {key.upper(): value for key, value in values.items() if value not in (None, "")}
