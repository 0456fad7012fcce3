"""
Logging configuration.
"""

import logging
from pathlib import Path
from typing import Optional, Union

from rich.console import Console
from rich.logging import RichHandler

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# Diagnostics go to stderr so stdout stays machine-readable
stderr_console = Console(stderr=True)


def configure_logging(
    level: Union[int, str] = logging.INFO,
    log_file: Optional[Path] = None,
) -> logging.Logger:
    """Install console (and optionally file) handlers on the package logger.

    Args:
        level: Logging level for the package logger
        log_file: Optional file receiving a plain-text copy of the log

    Returns:
        The configured ``approxtrain`` logger
    """
    logger = logging.getLogger("approxtrain")
    logger.setLevel(level)

    # Reconfiguring replaces previous handlers (tests call this repeatedly)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    console_handler = RichHandler(
        console=stderr_console, show_path=False, rich_tracebacks=False
    )
    console_handler.setFormatter(logging.Formatter("%(message)s"))
    logger.addHandler(console_handler)

    if log_file is not None:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(file_handler)

    logger.propagate = False
    return logger
