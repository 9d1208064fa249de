import os
import pytest
import tempfile
from pathlib import Path
from typing import Generator

from fastapi.testclient import TestClient

from src.models.scenario import ScenarioConfig
from src.scenario.world import World
from src.utils.config import Settings


TWO_BANKS = {
    "name": "two-banks",
    "instances": [
        {"name": "A", "clients": [{"name": "alice", "balance": 100}, {"name": "carol", "balance": 20}]},
        {"name": "B", "clients": [{"name": "bob", "balance": 100}]},
    ],
    "htlc_timeout_seconds": 600,
}


@pytest.fixture(scope="session")
def test_settings() -> Settings:
    """Create test settings with safe defaults, ignoring any local .env file."""
    return Settings(
        _env_file=None,
        debug=True,
        log_level="DEBUG",
        logs_dir="test_logs",
    )


@pytest.fixture
def temp_dir() -> Generator[Path, None, None]:
    """Create a temporary directory for test files."""
    with tempfile.TemporaryDirectory() as tmp_dir:
        yield Path(tmp_dir)


@pytest.fixture
def two_banks_config() -> ScenarioConfig:
    """Two approved instances: alice and carol bank at A, bob at B."""
    return ScenarioConfig.model_validate(TWO_BANKS)


@pytest.fixture
def world(two_banks_config: ScenarioConfig, test_settings: Settings) -> World:
    """A built, quiet world: IPSCs and registry deployed, clients registered and funded."""
    return World(two_banks_config, test_settings, 7).build()


@pytest.fixture
def test_client(world: World, test_settings: Settings) -> Generator[TestClient, None, None]:
    """Create a test client for the node API of instance A."""
    from src.api.main import create_app

    app = create_app(world.nodes["A"], test_settings)
    with TestClient(app) as client:
        yield client


@pytest.fixture(autouse=True)
def clean_environment():
    """Keep CBDC variables set by one test from leaking into the next."""
    keys = [key for key in os.environ if key.startswith("CBDC_")]
    original_env = {key: os.environ[key] for key in keys}

    yield

    for key in [key for key in os.environ if key.startswith("CBDC_")]:
        if key not in original_env:
            del os.environ[key]
    os.environ.update(original_env)
