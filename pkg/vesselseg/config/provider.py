"""Configuration provider following Black Box Design principles."""
from dataclasses import dataclass
from typing import Protocol

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class RuntimeSettings(BaseSettings):
    """Environment-backed runtime settings (prefix VESSELSEG_)."""

    model_config = SettingsConfigDict(env_prefix="VESSELSEG_", extra="ignore")

    log_level: str = "INFO"
    progress_every: int = Field(default=10, ge=1)
    tile_workers: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0)


@dataclass
class RuntimeConfig:
    """Runtime configuration."""
    log_level: str
    progress_every: int
    tile_workers: int
    seed: int


class ConfigProvider(Protocol):
    """Protocol for configuration providers."""

    def get_runtime_config(self) -> RuntimeConfig:
        """Get runtime configuration."""
        ...


class EnvConfigProvider:
    """Environment-based configuration provider."""

    def get_runtime_config(self) -> RuntimeConfig:
        """Get runtime configuration from environment variables."""
        settings = RuntimeSettings()
        return RuntimeConfig(
            log_level=settings.log_level.upper(),
            progress_every=settings.progress_every,
            tile_workers=settings.tile_workers,
            seed=settings.seed,
        )
