"""
Common test fixtures for the coupled NLS solver tests.

This file contains fixtures that can be reused across different test modules.
"""

import os
import sys
import tempfile

import pytest

from app.models import Grid, ModelParams
from app.run_registry import RunRegistry

# Add the parent directory to the path so we can import from app
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

PRESET_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data", "presets")


SINGLE_SOLITON_CONFIG = """
# Single moving circular soliton on a short interval
name = single
alpha1 = 0.75
gamma = 0.175
L1 = 20
L2 = 20
h = 0.1
dtau = 0.02
t_final = 1.0
series_every = 5
snapshot_times = 0.0, 0.5

soliton.1.X = -2.0
soliton.1.c = 1.0
soliton.1.n_psi = -1.5
soliton.1.n_phi = -1.5
"""

HEADON_CONFIG = """
# Short head-on pair, far from collision
name = pair
alpha1 = 0.75
gamma = 0.175
L1 = 35
L2 = 35
h = 0.1
dtau = 0.02
t_final = 0.4
series_every = 5

soliton.1.X = -15.0
soliton.1.c = 1.0
soliton.1.n_psi = -1.5
soliton.1.n_phi = -1.5

soliton.2.X = 15.0
soliton.2.c = -1.0
soliton.2.n_psi = -1.5
soliton.2.n_phi = -1.5
"""


@pytest.fixture
def model_params():
    """
    Returns the coupling used throughout the collision presets.
    """
    return ModelParams(alpha1=0.75, gamma_re=0.175)


@pytest.fixture
def uncoupled_params():
    return ModelParams(alpha1=0.75)


@pytest.fixture
def small_grid():
    """
    Returns a coarse grid on [-20, 20] with h = 0.1.
    """
    return Grid(L1=20.0, L2=20.0, m=400, dtau=0.01)


@pytest.fixture
def single_config_text():
    return SINGLE_SOLITON_CONFIG


@pytest.fixture
def headon_config_text():
    return HEADON_CONFIG


@pytest.fixture
def preset_dir():
    return PRESET_DIR


@pytest.fixture
def temp_dir():
    """
    Creates a temporary directory that is removed after the test.
    """
    with tempfile.TemporaryDirectory() as directory:
        yield directory


@pytest.fixture
def solver_env(temp_dir, monkeypatch):
    """
    Points output and registry settings at a temporary directory.
    """
    monkeypatch.setenv("SOLVER_OUTPUT_DIR", os.path.join(temp_dir, "runs"))
    monkeypatch.setenv("RUN_REGISTRY_PATH", os.path.join(temp_dir, "registry.json"))
    monkeypatch.setenv("PRESET_DIR", PRESET_DIR)
    monkeypatch.setenv("SWEEP_WORKERS", "1")
    monkeypatch.delenv("SOLVER_ASSERT_SCHEME", raising=False)
    return temp_dir


@pytest.fixture
def registry(temp_dir):
    """
    Returns a RunRegistry backed by a temporary file.
    """
    handler = RunRegistry(os.path.join(temp_dir, "registry.json"))
    yield handler
    handler.close()
