from __future__ import annotations

import numpy as np
import pytest

from config import ExperimentConfig, parse_config


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _no_env_seed(monkeypatch):
    monkeypatch.delenv("MCVST_SEED", raising=False)


SMALL_CONFIG = """
# canal casado, quadros pequenos
sampling.m_h = 1
codec.qam_order = 16
mimo.symbols_per_frame = 4
sweep.frames = 2
sweep.height = 32
sweep.width = 32
sweep.seeds = 2
sweep.snr_db = 0, 30
"""


@pytest.fixture
def small_config_text() -> str:
    return SMALL_CONFIG


@pytest.fixture
def small_config() -> ExperimentConfig:
    return parse_config(SMALL_CONFIG)
