"""
Loguru configuration for zfumes
Handles log rotation and file management
"""

import os
import sys
from pathlib import Path

from loguru import logger


def setup_logging(level: str | None = None, log_dir: str | None = None):
    """Setup zfumes logging with file rotation.

    Parameters
    ----------
    level : str, optional
        Console level. Defaults to ``ZFUMES_LOG_LEVEL`` or ``INFO``.
    log_dir : str, optional
        Directory of the rotating log file. Defaults to ``ZFUMES_LOG_DIR`` or
        ``logs``; an empty string disables the file sink.
    """
    level = level or os.getenv("ZFUMES_LOG_LEVEL", "INFO")
    if log_dir is None:
        log_dir = os.getenv("ZFUMES_LOG_DIR", "logs")

    logger.remove()  # Remove default handler

    # Console goes to stderr: stdout carries CSV tables
    logger.add(
        sys.stderr,
        level=level,
        format="<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | <cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>",
        colorize=True,
    )

    if log_dir:
        log_file = Path(log_dir) / "zfumes.log"
        log_file.parent.mkdir(parents=True, exist_ok=True)

        logger.add(
            sink=log_file,
            level="DEBUG",
            rotation="10 MB",  # Rotate when file reaches 10MB
            retention="1 week",  # Keep logs for 1 week
            format="{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} - {message}",
            enqueue=True,  # Process-safe logging for ensemble workers
        )

    return logger


# Export logger instance
logger = setup_logging()
