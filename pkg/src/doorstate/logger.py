"""Structured logging for solver runs.

Messages carry keyword fields rendered as sorted ``key=value`` pairs, so a
Newton trace or an estimator iteration stays on one grep-able line. The
logger sits on top of the stdlib ``doorstate`` logger, so applications can
attach their own handlers.
"""
from __future__ import annotations
import logging
import sys
from typing import Any

import numpy as np

_LOGGER_NAME = "doorstate"


def _format_value(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6g}"
    if isinstance(value, np.ndarray):
        return np.array2string(value, precision=4, separator=",")
    if isinstance(value, (list, tuple)) and value and all(
        isinstance(v, (float, np.floating)) for v in value
    ):
        return "[" + ",".join(f"{float(v):.4g}" for v in value) + "]"
    return str(value)


class Logger:
    """Logger that appends keyword fields to the message."""

    def __init__(self, name: str = _LOGGER_NAME):
        self._logger = logging.getLogger(name)

    def info(self, message: str, **kwargs: Any) -> None:
        """Log info message."""
        self._log(logging.INFO, message, **kwargs)

    def debug(self, message: str, **kwargs: Any) -> None:
        """Log debug message."""
        self._log(logging.DEBUG, message, **kwargs)

    def warn(self, message: str, **kwargs: Any) -> None:
        """Log warning message."""
        self._log(logging.WARNING, message, **kwargs)

    def error(self, message: str, **kwargs: Any) -> None:
        """Log error message."""
        self._log(logging.ERROR, message, **kwargs)

    def _log(self, level: int, message: str, **kwargs: Any) -> None:
        if not self._logger.isEnabledFor(level):
            return
        if kwargs:
            fields = " ".join(f"{key}={_format_value(kwargs[key])}" for key in sorted(kwargs))
            self._logger.log(level, f"{message} {fields}")
        else:
            self._logger.log(level, message)


def configure_logging(level: str | int = "INFO") -> None:
    """Attach a stderr handler to the package logger.

    Args:
        level: Level name ("DEBUG", "INFO", ...) or numeric level

    Calling this twice replaces the handler instead of stacking a second one.
    """
    root = logging.getLogger(_LOGGER_NAME)
    for handler in list(root.handlers):
        if getattr(handler, "_doorstate", False):
            root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("[%(levelname)s] %(message)s"))
    setattr(handler, "_doorstate", True)
    root.addHandler(handler)
    root.setLevel(level if isinstance(level, int) else level.upper())
    root.propagate = False


# Global logger instance
logger = Logger()
