"""
Tests for runtime settings and logging configuration.
"""

import logging

import pytest
from pydantic import ValidationError

from vesselseg.config import EnvConfigProvider, RuntimeConfig, get_config, reset_config
from vesselseg.logging_config import ProgressFilter, get_logging_config


def progress_record(batch_index=None):
    record = logging.LogRecord("vesselseg.trainer", logging.INFO, __file__, 1, "batch", None, None)
    if batch_index is not None:
        record.batch_index = batch_index
    return record


class TestEnvConfigProvider:
    """Test environment-backed runtime settings."""

    def test_defaults(self):
        config = EnvConfigProvider().get_runtime_config()
        assert config == RuntimeConfig(log_level="INFO", progress_every=10, tile_workers=1, seed=0)

    def test_reads_prefixed_environment(self, monkeypatch):
        monkeypatch.setenv("VESSELSEG_LOG_LEVEL", "debug")
        monkeypatch.setenv("VESSELSEG_TILE_WORKERS", "4")
        monkeypatch.setenv("VESSELSEG_SEED", "17")
        config = EnvConfigProvider().get_runtime_config()
        assert config.log_level == "DEBUG"
        assert config.tile_workers == 4
        assert config.seed == 17

    def test_rejects_out_of_range(self, monkeypatch):
        monkeypatch.setenv("VESSELSEG_TILE_WORKERS", "0")
        with pytest.raises(ValidationError):
            EnvConfigProvider().get_runtime_config()


class TestConfigSingleton:
    """Test get_config caching."""

    def test_cached_until_reset(self, monkeypatch):
        first = get_config()
        monkeypatch.setenv("VESSELSEG_SEED", "5")
        assert get_config() is first
        reset_config()
        assert get_config().seed == 5

    def test_custom_provider(self):
        class Fixed:
            def get_runtime_config(self):
                return RuntimeConfig(log_level="WARNING", progress_every=1, tile_workers=2, seed=9)

        assert get_config(Fixed()).seed == 9


class TestProgressFilter:
    """Test thinning of per-batch progress records."""

    def test_passes_plain_records(self):
        assert ProgressFilter(every=5).filter(progress_record())

    def test_keeps_every_nth_batch(self):
        kept = [b for b in range(12) if ProgressFilter(every=5).filter(progress_record(b))]
        assert kept == [0, 5, 10]

    def test_nonpositive_cadence_keeps_all(self):
        assert ProgressFilter(every=0).filter(progress_record(3))


class TestLoggingConfig:
    """Test the dictConfig layout."""

    def test_package_logger(self):
        config = get_logging_config("DEBUG", progress_every=3)
        assert config["loggers"]["vesselseg"]["level"] == "DEBUG"
        assert config["filters"]["progress_filter"]["every"] == 3
        assert config["handlers"]["default"]["stream"] == "ext://sys.stderr"
