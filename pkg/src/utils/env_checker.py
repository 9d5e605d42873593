import logging
import os
from pathlib import Path
from typing import Dict, Any

logger = logging.getLogger(__name__)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
DEFAULT_LOG_LEVEL = "INFO"
DEFAULT_CACHE_DIR = ".sclab_cache"
DEFAULT_THREADS = 1


def get_log_level() -> str:
    """
    Get the console log level from SCLAB_LOG_LEVEL.

    Returns:
        str: A valid logging level name, INFO when unset or invalid
    """
    value = os.getenv("SCLAB_LOG_LEVEL", DEFAULT_LOG_LEVEL).strip().upper()
    if value not in LOG_LEVELS:
        logger.warning(f"SCLAB_LOG_LEVEL={value!r} is not a logging level; using {DEFAULT_LOG_LEVEL}")
        return DEFAULT_LOG_LEVEL
    return value


def get_cache_dir() -> Path:
    return Path(os.getenv("SCLAB_CACHE_DIR") or DEFAULT_CACHE_DIR)


def get_threads() -> int:
    """
    Get the worker thread count from SCLAB_THREADS.

    Returns:
        int: A positive thread count, 1 when unset or invalid
    """
    raw = os.getenv("SCLAB_THREADS")
    if not raw:
        return DEFAULT_THREADS
    try:
        threads = int(raw)
    except ValueError:
        logger.warning(f"SCLAB_THREADS={raw!r} is not an integer; using {DEFAULT_THREADS}")
        return DEFAULT_THREADS
    if threads < 1:
        logger.warning(f"SCLAB_THREADS={threads} must be positive; using {DEFAULT_THREADS}")
        return DEFAULT_THREADS
    return threads


def check_environment() -> Dict[str, Any]:
    """
    Report the effective environment settings.

    Returns:
        dict: log_level, cache_dir and threads after validation
    """
    settings = {
        "log_level": get_log_level(),
        "cache_dir": str(get_cache_dir()),
        "threads": get_threads(),
    }
    logger.info(f"Effective settings: {settings}")
    return settings
