"""Logging configuration."""

import logging
import sys
from contextlib import contextmanager
from typing import Iterator

import structlog

from app.core.config import get_settings


def configure_logging():
    """Configure structured logging on stderr; stdout is left to command output."""
    settings = get_settings()
    level = getattr(logging, settings.log_level.upper())

    if settings.log_format.lower() == "console":
        renderer = structlog.dev.ConsoleRenderer(colors=False)
    else:
        renderer = structlog.processors.JSONRenderer()

    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.format_exc_info,
            renderer,
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    logging.basicConfig(format="%(message)s", stream=sys.stderr, level=level)
    # matplotlib reports font-cache work at INFO
    logging.getLogger("matplotlib").setLevel(max(level, logging.WARNING))

    return structlog.get_logger()


@contextmanager
def run_context(**values) -> Iterator[None]:
    """Attach run identifiers (preset, seed, ...) to every event logged inside the block."""
    tokens = structlog.contextvars.bind_contextvars(**values)
    try:
        yield
    finally:
        structlog.contextvars.reset_contextvars(**tokens)
