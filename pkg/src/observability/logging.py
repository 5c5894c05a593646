"""Logging configuration and utilities for LDDMD."""

import logging
import sys
from typing import Any, Dict, Optional

# attributes every LogRecord carries; anything else came in through ``extra``
_RECORD_FIELDS = frozenset(vars(logging.LogRecord("", 0, "", 0, "", None, None))) | {"message", "asctime"}


class KeyValueFormatter(logging.Formatter):
    """Pipe-separated line followed by the record's ``extra`` fields as key=value."""

    def format(self, record: logging.LogRecord) -> str:
        line = super().format(record)
        extras = {k: v for k, v in vars(record).items() if k not in _RECORD_FIELDS}
        if not extras:
            return line
        fields = " ".join(f"{k}={v}" for k, v in sorted(summarize_array_shapes(extras).items()))
        return f"{line} | {fields}"


def get_logger(name: str) -> logging.Logger:
    """
    Get a configured logger instance.

    The level comes from ``Config.LOG_LEVEL``.

    Args:
        name: Logger name (typically __name__)

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)

    if not logger.handlers:
        _configure_logger(logger)

    return logger


def _configured_level() -> int:
    # the config module logs too, so it is imported at call time
    from ..config import Config
    return getattr(logging, Config.LOG_LEVEL.upper(), logging.INFO)


def _configure_logger(logger: logging.Logger) -> None:
    """Configure logger with appropriate handlers and formatting."""
    logger.setLevel(_configured_level())

    # Console handler
    handler = logging.StreamHandler(sys.stdout)
    handler.setLevel(logger.level)
    handler.setFormatter(KeyValueFormatter(
        "%(asctime)s | %(name)s | %(levelname)s | %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S"
    ))

    logger.addHandler(handler)
    logger.propagate = False


def set_level(level: str) -> None:
    """
    Change the level of every logger created through get_logger.

    Args:
        level: Level name such as "DEBUG" or "WARNING"
    """
    numeric = getattr(logging, level.upper(), logging.INFO)
    for name in list(logging.root.manager.loggerDict):
        if not name.startswith("src"):
            continue
        existing = logging.getLogger(name)
        existing.setLevel(numeric)
        for handler in existing.handlers:
            handler.setLevel(numeric)


def summarize_array_shapes(data: Dict[str, Any]) -> Dict[str, Any]:
    """
    Replace array values by their shapes so log records stay small.

    Args:
        data: Dictionary that may contain numpy arrays or long lists

    Returns:
        Dictionary with arrays replaced by shape descriptions
    """
    summarized: Dict[str, Any] = {}
    for key, value in data.items():
        shape = getattr(value, "shape", None)
        if shape is not None and getattr(value, "size", 0) > 1:
            summarized[key] = f"array{tuple(shape)}"
        elif isinstance(value, dict):
            summarized[key] = summarize_array_shapes(value)
        elif isinstance(value, (list, tuple)) and len(value) > 8:
            summarized[key] = f"{type(value).__name__}[{len(value)}]"
        else:
            summarized[key] = value
    return summarized


def log_function_call(
    logger: logging.Logger,
    function_name: str,
    args: Optional[Dict[str, Any]] = None,
    duration_ms: Optional[float] = None
) -> None:
    """
    Log a function call with structured data.

    Args:
        logger: Logger instance
        function_name: Name of the function being called
        args: Function arguments (arrays are reduced to their shapes)
        duration_ms: Duration of the function call in milliseconds
    """
    log_data: Dict[str, Any] = {
        "event": "function_call",
        "function": function_name,
    }

    if args:
        log_data["call_args"] = summarize_array_shapes(args)

    if duration_ms is not None:
        log_data["duration_ms"] = duration_ms

    logger.info(f"Function call: {function_name}", extra=log_data)
