"""
Config Module - Black Box Interface

Purpose: Runtime configuration management
Interface: get_config(), reset_config()
Hidden: Config sources, validation logic, environment parsing
"""

from typing import Optional

from .provider import ConfigProvider, EnvConfigProvider, RuntimeConfig, RuntimeSettings

# Singleton instance
_instance: Optional[RuntimeConfig] = None


def get_config(provider: Optional[ConfigProvider] = None) -> RuntimeConfig:
    """Get the runtime configuration singleton."""
    global _instance
    if _instance is None:
        _instance = (provider or EnvConfigProvider()).get_runtime_config()
    return _instance


def reset_config() -> None:
    """Drop the cached configuration so the next get_config() re-reads the environment."""
    global _instance
    _instance = None


__all__ = [
    "ConfigProvider",
    "EnvConfigProvider",
    "RuntimeConfig",
    "RuntimeSettings",
    "get_config",
    "reset_config",
]
