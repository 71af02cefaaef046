import dataclasses
import os

import pytest
from hypothesis import HealthCheck, settings

from sgdma_sim.config import SystemConfig
from sgdma_sim.engine import EngineConfig
from sgdma_sim.memmodel import DdrConfig

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def ddr() -> DdrConfig:
    return DdrConfig()


@pytest.fixture
def quiet_ddr() -> DdrConfig:
    """No refresh stalls."""
    return dataclasses.replace(DdrConfig(), refresh_stall_ns=0.0)


@pytest.fixture
def engine() -> EngineConfig:
    return EngineConfig()


@pytest.fixture
def system() -> SystemConfig:
    return SystemConfig()
