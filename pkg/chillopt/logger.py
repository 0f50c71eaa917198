"""
Logging configuration for the chillopt toolkit.
Provides a centralized get_logger function with consistent formatting.

Everything goes to stderr: command results are written to files only.
"""

import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, Optional

_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

# Global flag to track if basic config has been set up
_logging_configured = False
_config = None


def configure_logging(config: Optional[Dict[str, Any]] = None):
    """Configure basic logging settings once using config file"""
    global _logging_configured, _config

    if _logging_configured:
        return

    _config = config or {}

    log_level = _config.get("log_level") or os.getenv("CHILLOPT_LOG_LEVEL", "INFO")
    log_file = _config.get("log_file") or os.getenv("CHILLOPT_LOG_FILE")

    numeric_level = getattr(logging, str(log_level).upper(), logging.INFO)

    handlers = [logging.StreamHandler(sys.stderr)]

    if log_file:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=numeric_level,
        format=_FORMAT,
        datefmt=_DATE_FORMAT,
        handlers=handlers,
        force=True,
    )

    # Hand module loggers created at import time back to the root configuration
    for name, existing in logging.Logger.manager.loggerDict.items():
        if name.startswith("chillopt") and isinstance(existing, logging.Logger):
            for handler in list(existing.handlers):
                existing.removeHandler(handler)
            existing.setLevel(logging.NOTSET)
            existing.propagate = True

    _logging_configured = True


def set_level(level: str) -> None:
    """Change the root level after configuration (used by the --log-level flag)."""
    logging.getLogger().setLevel(getattr(logging, level.upper(), logging.INFO))


def get_logger(name):
    """
    Get a properly configured logger instance for the chillopt toolkit.

    Args:
        name: Logger name (usually __name__ from the calling module)

    Returns:
        Configured logger instance with consistent formatting
    """
    if not _logging_configured:
        logger = logging.getLogger(name)
        logger.setLevel(logging.INFO)
        if not logger.handlers:
            handler = logging.StreamHandler(sys.stderr)
            handler.setFormatter(logging.Formatter(_FORMAT, datefmt=_DATE_FORMAT))
            logger.addHandler(handler)
            # avoid double lines once the root logger gets configured
            logger.propagate = False
        return logger

    return logging.getLogger(name)
