"""
Shared fixtures for the SCANet test scripts.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path for local development
sys.path.insert(0, str(Path(__file__).parent.parent))

from scanet.config import expand_preset
from scanet.data import SyntheticParams, make_synthetic_studies
from scanet.settings import Settings


@pytest.fixture(autouse=True)
def restore_settings():
    saved = (Settings.dtype, Settings.grad_enabled, Settings.single_thread)
    yield
    Settings.dtype, Settings.grad_enabled, Settings.single_thread = saved


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    model, _ = expand_preset("tiny")
    return model


@pytest.fixture
def toy_configs():
    return expand_preset("toy")


@pytest.fixture
def tiny_params(tiny_config):
    return SyntheticParams(num_slices=tiny_config.num_slices, height=tiny_config.slice_height,
                           width=tiny_config.slice_width)


@pytest.fixture
def tiny_studies(tiny_params):
    return make_synthetic_studies(8, seed=3, params=tiny_params)
