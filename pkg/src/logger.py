"""Structured logging configuration."""

import logging
import sys

import structlog


def configure_logging(level: str = "INFO", colors: bool | None = None) -> None:
    """Configure structured logging with console output on stderr.

    stdout is reserved for CSV emitted by the CLI, so every log line goes to
    stderr.

    Args:
        level: Log level (DEBUG, INFO, WARNING, ERROR)
        colors: Force colored output on or off. Defaults to stderr being a TTY.
    """
    numeric_level = getattr(logging, level.upper())
    if colors is None:
        colors = sys.stderr.isatty()

    logging.basicConfig(
        format="%(message)s",
        stream=sys.stderr,
        level=numeric_level,
    )

    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.StackInfoRenderer(),
            structlog.dev.set_exc_info,
            structlog.processors.TimeStamper(fmt="iso", utc=False),
            structlog.dev.ConsoleRenderer(colors=colors),
        ],
        wrapper_class=structlog.make_filtering_bound_logger(numeric_level),
        context_class=dict,
        # resolve sys.stderr per call so a swapped stream (tests, redirection) is honored
        logger_factory=lambda *args: structlog.PrintLogger(file=sys.stderr),
        cache_logger_on_first_use=False,
    )


def get_logger(name: str) -> structlog.stdlib.BoundLogger:
    """Get a logger instance.

    Args:
        name: Logger name (typically __name__)

    Returns:
        Configured logger instance
    """
    return structlog.get_logger(name)
