"""
Configuration
Reads BEAMTOMO_* settings from the environment (and a .env file, if present).
"""

import os
import logging
from typing import Callable, TypeVar
from dotenv import load_dotenv

from services.errors import ConfigurationError

load_dotenv()

logger = logging.getLogger(__name__)

T = TypeVar('T')


def _read(name: str, default: T, cast: Callable[[str], T]) -> T:
    raw = os.getenv(name)
    if raw is None or raw.strip() == '':
        return default
    try:
        return cast(raw.strip())
    except ValueError as e:
        raise ConfigurationError(f"Invalid value for {name}: {raw!r} ({e})") from e


def scan_threads() -> int:
    """Upper bound on worker threads used by angle-grid scans"""
    threads = _read('BEAMTOMO_THREADS', os.cpu_count() or 1, int)
    if threads < 1:
        raise ConfigurationError(f"BEAMTOMO_THREADS must be >= 1, got {threads}")
    return threads


def default_half_width() -> float:
    return _read('BEAMTOMO_HALF_WIDTH', 12.0, float)


def default_nodes() -> int:
    return _read('BEAMTOMO_NODES', 4096, int)


def default_abs_tol() -> float:
    return _read('BEAMTOMO_ABS_TOL', 1e-9, float)


def default_grid_points() -> int:
    return _read('BEAMTOMO_GRID_POINTS', 512, int)


def log_level() -> str:
    level = _read('BEAMTOMO_LOG_LEVEL', 'INFO', str).upper()
    if level not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
        raise ConfigurationError(f"Unknown BEAMTOMO_LOG_LEVEL: {level}")
    return level
