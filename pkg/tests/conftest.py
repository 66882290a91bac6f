"""
Shared pytest fixtures for vesselseg tests.

This module provides common fixtures including:
- Tiny network configurations and seeded models
- Synthetic phantom images and patch records
- An isolated runtime configuration per test
"""

import logging
import os
import sys
from typing import List

import numpy as np
import pytest

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from vesselseg.config import reset_config
from vesselseg.modules.data import Domain, PatchRecord
from vesselseg.modules.phantom import PhantomParams, gen_phantom
from vesselseg.modules.segresnet import ModelConfig, build_model


@pytest.fixture(autouse=True)
def isolated_config(monkeypatch):
    """Every test starts from default runtime settings."""
    for key in list(os.environ):
        if key.startswith("VESSELSEG_"):
            monkeypatch.delenv(key, raising=False)
    reset_config()
    yield
    reset_config()
    # the CLI installs a non-propagating handler; caplog listens on the root logger
    logging.getLogger("vesselseg").propagate = True


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config() -> ModelConfig:
    """F=8, two levels, 32px patches."""
    return ModelConfig.tiny(32)


@pytest.fixture
def tiny_model(tiny_config):
    return build_model(tiny_config, seed=0)


@pytest.fixture
def micro_config() -> ModelConfig:
    """Smallest useful network for fast training loops."""
    return ModelConfig(init_filters=4, blocks_down=(1, 1), blocks_up=(1,), patch_size=32)


def phantom_records(style: Domain, seeds, size: int = 32) -> List[PatchRecord]:
    """One whole-phantom PatchRecord per seed."""
    records = []
    for s in seeds:
        image, mask = gen_phantom(PhantomParams(size=size, style=style, seed=s))
        records.append(PatchRecord(image=image, mask=mask, source_id=f"{style.value}-{s}", domain=style))
    return records


@pytest.fixture(scope="session")
def make_phantom_records():
    return phantom_records


@pytest.fixture
def source_records():
    return phantom_records(Domain.SOURCE, range(12))


@pytest.fixture
def target_records():
    return phantom_records(Domain.TARGET, range(100, 112))

