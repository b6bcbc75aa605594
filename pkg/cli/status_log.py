"""
Timestamped status logging for the command-line front end.
"""

from typing import Optional, TextIO
import logging
import sys

STATUS_FORMAT = "[%(asctime)s] %(levelname)s %(name)s: %(message)s"
STATUS_DATEFMT = "%H:%M:%S"
LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")

_handler: Optional[logging.Handler] = None


def configure_logging(level: str = "INFO", stream: Optional[TextIO] = None) -> logging.Handler:
    """
    Route all package loggers to a single stderr handler with lines like
    '[12:03:44] INFO engine.channel_detector: simulating ...'.

    Calling again replaces the previous handler.

    :param level: one of DEBUG, INFO, WARNING, ERROR
    :param stream: destination, stderr by default
    :return handler:
    """
    global _handler
    if level not in LEVELS:
        raise ValueError(f"unknown verbosity '{level}', choose from {LEVELS}")

    root = logging.getLogger()
    if _handler is not None:
        root.removeHandler(_handler)

    _handler = logging.StreamHandler(sys.stderr if stream is None else stream)
    _handler.setFormatter(logging.Formatter(STATUS_FORMAT, datefmt=STATUS_DATEFMT))
    root.addHandler(_handler)
    root.setLevel(level)
    return _handler
