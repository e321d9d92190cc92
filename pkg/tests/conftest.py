"""
Pytest configuration and fixtures
"""

import os
from unittest.mock import patch

import pytest
from fastapi.testclient import TestClient

from app.config import settings
from app.models import ScalingSpec
from app.services.ensemble_service import EnsembleService
from app.services.fredholm_service import FredholmService
from app.services.kernel_service import KernelService
from app.services.model_service import validate_params
from app.services.percolation_service import PercolationService


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run long statistical checks")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long Monte Carlo or convergence runs, enabled by --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def client():
    """Test client; entering it runs the lifespan warm-up"""
    from main import app

    with TestClient(app) as test_client:
        yield test_client


@pytest.fixture
def kernels():
    return KernelService()


@pytest.fixture
def fredholm():
    return FredholmService(workers=2)


@pytest.fixture
def percolation():
    return PercolationService(workers=2)


@pytest.fixture
def ensemble():
    return EnsembleService(workers=2)


@pytest.fixture
def small_params():
    """p = 2 with distinct rates on both sides"""
    return validate_params([1.0, 1.4], [0.5, 0.8])


@pytest.fixture
def empty_spec():
    return ScalingSpec(t=0.25)


@pytest.fixture
def perturbed_spec():
    return ScalingSpec(t=0.25, x=[1.5], y=[-1.0])


@pytest.fixture
def output_dir(tmp_path):
    """Results directory standing in for OUTPUT_DIR"""
    path = tmp_path / "results"
    with patch.object(settings, "OUTPUT_DIR", str(path)):
        yield path


@pytest.fixture(autouse=True)
def mock_environment():
    """Mock environment variables for testing"""
    with patch.dict(os.environ, {
        "LOG_LEVEL": "WARNING",
        "LOG_JSON": "false",
        "WORKERS": "2",
        "DEBUG": "true"
    }):
        yield
