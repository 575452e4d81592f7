# denots/logs.py
from __future__ import annotations

import logging
import os

LOG_ENV = "DENOTS_LOG"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

_LEVELS = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}


def resolve_level(level: str | int | None = None) -> int:
    """Explicit level wins; otherwise ``DENOTS_LOG``; otherwise WARNING."""
    if isinstance(level, int):
        return level
    name = (level or os.environ.get(LOG_ENV) or "WARNING").strip().upper()
    if name not in _LEVELS:
        raise ValueError(f"Unknown log level: {name}")
    return getattr(logging, name)


def configure_logging(level: str | int | None = None) -> logging.Logger:
    """Install a single stream handler on the package logger.

    Safe to call repeatedly; the handler is replaced, not duplicated.
    """
    root = logging.getLogger("denots")
    for handler in list(root.handlers):
        if getattr(handler, "_denots", False):
            root.removeHandler(handler)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler._denots = True  # type: ignore[attr-defined]
    root.addHandler(handler)
    root.setLevel(resolve_level(level))
    return root
