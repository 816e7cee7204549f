import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for `oracles` and fixtures

from hxrcast import GeneratorConfig, MockConfig, MockReservoirModel, ServiceClient, synth_set


@pytest.fixture(scope="session")
def default_generator_config():
    return GeneratorConfig()


@pytest.fixture(scope="session")
def small_shot_set():
    return synth_set(GeneratorConfig(n_shots=12, seed=11))


@pytest.fixture()
def mock_model():
    return MockReservoirModel(MockConfig())


@pytest.fixture()
def mock_client(mock_model):
    return ServiceClient(mock_model)
