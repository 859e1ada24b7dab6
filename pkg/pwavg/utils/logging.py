"""Loguru sink setup shared by the CLI and tests."""

import sys
from pathlib import Path
from typing import Optional

from loguru import logger

from ..core.config import LoggingConfig


def configure_logging(config: Optional[LoggingConfig] = None, serialize_stderr: bool = False,
                      stderr_level: Optional[str] = None) -> None:
    """Replace the default sink with a rotating file sink and a stderr sink.

    With ``serialize_stderr`` every stderr record is one JSON object whose
    ``record.extra`` carries the diagnostic ``code`` bound by the caller.
    """
    config = config or LoggingConfig()
    logger.remove()
    logger.add(
        sys.stderr,
        level=stderr_level or config.level,
        serialize=serialize_stderr,
        format="<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | {message}",
    )
    if config.file:
        Path(config.file).parent.mkdir(parents=True, exist_ok=True)
        logger.add(
            config.file,
            level=config.level,
            rotation=config.max_size,
            retention=config.backup_count,
            enqueue=False,
        )
