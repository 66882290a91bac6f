"""
Logging configuration with per-batch progress thinning
"""

import logging
import logging.config
from typing import Any, Dict


class ProgressFilter(logging.Filter):
    """Filter to thin per-batch training progress logs."""

    def __init__(self, every: int = 10):
        super().__init__()
        self.every = max(1, int(every))

    def filter(self, record: logging.LogRecord) -> bool:
        """Pass every record except batch progress rows that are off-cadence."""
        batch_index = getattr(record, "batch_index", None)
        if batch_index is None:
            return True
        return batch_index % self.every == 0


def get_logging_config(level: str = "INFO", progress_every: int = 10) -> Dict[str, Any]:
    """Get logging configuration with batch progress thinning."""
    return {
        "version": 1,
        "disable_existing_loggers": False,
        "filters": {
            "progress_filter": {
                "()": ProgressFilter,
                "every": progress_every,
            }
        },
        "formatters": {
            "default": {
                "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
            },
        },
        "handlers": {
            "default": {
                "class": "logging.StreamHandler",
                "formatter": "default",
                "stream": "ext://sys.stderr",
                "filters": ["progress_filter"],
            },
        },
        "loggers": {
            "vesselseg": {
                "handlers": ["default"],
                "level": level,
                "propagate": False,
            },
        },
        "root": {
            "level": "WARNING",
            "handlers": ["default"],
        },
    }


def configure_logging(level: str = "INFO", progress_every: int = 10) -> None:
    """Apply the vesselseg logging configuration."""
    logging.config.dictConfig(get_logging_config(level, progress_every))
